#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#ifndef PFX_CLI_PATH
#error "PFX_CLI_PATH must point at the built binary"
#endif

namespace {

using nlohmann::json;

int run(const std::string& args) {
  const std::string cmd = std::string(PFX_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string dir = "/tmp/pfx_cli_test";

struct Fixture {
  Fixture() {
    std::system(("rm -rf " + dir + " && mkdir -p " + dir).c_str());
    REQUIRE(run("synth --kind linear_switch --n 600 --p 8 --seed 3 --data-out " + dir +
                "/train.csv --truth-out " + dir + "/truth.csv --no-timestamp") == 0);
    REQUIRE(run("synth --kind linear_switch --n 200 --p 8 --seed 4 --data-out " + dir +
                "/test.csv --truth-out " + dir + "/test_truth.csv --no-timestamp") == 0);
    REQUIRE(run("train --data " + dir + "/train.csv --trees 6 --mtry 8 --seed 5 --model-out " +
                dir + "/model.json --test " + dir + "/test.csv --out " + dir +
                "/train_report.json --no-timestamp") == 0);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("synth + train produce a loadable pipeline with a fit report") {
  fixture();
  json rep = json::parse(slurp(dir + "/train_report.json"));
  CHECK(rep["command"] == "train");
  CHECK(rep["config"]["trees"] == 6);
  CHECK(rep["fit"].contains("train_r2"));
  CHECK(rep["fit"].contains("test_r2"));
  CHECK(rep["fit"]["split_frequencies"].size() == 8);
  CHECK(!rep.contains("timestamp_unix"));
}

TEST_CASE("explain reports carry explanations for each instance") {
  fixture();
  REQUIRE(run("explain --data " + dir + "/train.csv --model " + dir + "/model.json --instances " +
              dir + "/test.csv --max-instances 5 --pi 0.8 --s 5 --out " + dir +
              "/explain.json --no-timestamp") == 0);
  json rep = json::parse(slurp(dir + "/explain.json"));
  CHECK(rep["explanations"].size() == 5);
  for (const auto& e : rep["explanations"]) {
    CHECK(e.contains("prediction"));
    CHECK(e.contains("band"));
    CHECK(e.contains("preselected"));
  }
}

TEST_CASE("repeated runs with --no-timestamp are byte-identical") {
  fixture();
  REQUIRE(run("explain --data " + dir + "/train.csv --model " + dir + "/model.json --instances " +
              dir + "/test.csv --max-instances 3 --pi 0.8 --s 4 --out " + dir +
              "/e1.json --no-timestamp") == 0);
  REQUIRE(run("explain --data " + dir + "/train.csv --model " + dir + "/model.json --instances " +
              dir + "/test.csv --max-instances 3 --pi 0.8 --s 4 --out " + dir +
              "/e2.json --no-timestamp") == 0);
  CHECK(slurp(dir + "/e1.json") == slurp(dir + "/e2.json"));
  CHECK(!slurp(dir + "/e1.json").empty());
}

TEST_CASE("results are independent of the thread count") {
  fixture();
  REQUIRE(run("explain --data " + dir + "/train.csv --model " + dir + "/model.json --instances " +
              dir + "/test.csv --max-instances 6 --pi 0.8 --s 4 --threads 1 --out " + dir +
              "/t1.json --no-timestamp") == 0);
  REQUIRE(run("explain --data " + dir + "/train.csv --model " + dir + "/model.json --instances " +
              dir + "/test.csv --max-instances 6 --pi 0.8 --s 4 --threads 2 --out " + dir +
              "/t2.json --no-timestamp") == 0);
  auto a = slurp(dir + "/t1.json");
  auto b = slurp(dir + "/t2.json");
  // the config echoes the differing thread cap; everything else must match
  auto ja = json::parse(a);
  auto jb = json::parse(b);
  CHECK(ja["explanations"] == jb["explanations"]);
}

TEST_CASE("rule and global-sr commands emit rule artifacts") {
  fixture();
  REQUIRE(run("rule --data " + dir + "/train.csv --model " + dir + "/model.json --instances " +
              dir + "/test.csv --max-instances 4 --pi 0.75 --s 5 --out " + dir +
              "/rules.json --no-timestamp") == 0);
  json rep = json::parse(slurp(dir + "/rules.json"));
  CHECK(rep["rules"].size() == 4);
  bool any_ok = false;
  for (const auto& r : rep["rules"])
    if (r["status"] == "ok") {
      any_ok = true;
      CHECK(r["rule"].contains("intervals"));
      CHECK(r["rule"].contains("text"));
    }
  CHECK(any_ok);

  REQUIRE(run("global-sr --data " + dir + "/train.csv --model " + dir +
              "/model.json --pi 0.75 --s 5 --max-anchors 40 --rules-out " + dir +
              "/global_rules.json --out " + dir + "/gsr_report.json --no-timestamp") == 0);
  json gsr = json::parse(slurp(dir + "/gsr_report.json"));
  CHECK(gsr["summary"]["rules"].get<int>() > 0);
  CHECK(gsr["summary"].contains("train_coverage"));
}

TEST_CASE("eval scores discovery, p-mse, rule metrics and stability") {
  fixture();
  REQUIRE(run("eval --data " + dir + "/train.csv --model " + dir + "/model.json --test " + dir +
              "/test.csv --truth " + dir + "/test_truth.csv --max-instances 20 --pi 0.75 --s 5 "
              "--rule-model " + dir + "/global_rules.json --stability-n 4 "
              "--stability-instances 3 --seed 9 --out " + dir +
              "/eval.json --no-timestamp") == 0);
  json rep = json::parse(slurp(dir + "/eval.json"));
  CHECK(rep["forest"].contains("test_r2"));
  CHECK(rep["discovery"]["scored"].get<int>() == 20);
  CHECK(rep["discovery"]["tpr"].get<double>() >= 0.0);
  CHECK(rep.contains("p_mse"));
  CHECK(rep["rule_metrics"].contains("coverage"));
  CHECK(rep["stability"].contains("mean_distinct_rules"));
}

TEST_CASE("external selection files are scored instead of the model's own") {
  fixture();
  // Selections equal to the truth must score perfectly.
  REQUIRE(run("eval --data " + dir + "/train.csv --model " + dir + "/model.json --test " + dir +
              "/test.csv --truth " + dir + "/test_truth.csv --selections " + dir +
              "/test_truth.csv --max-instances 25 --out " + dir + "/eval_ext.json --no-timestamp") ==
          0);
  json rep = json::parse(slurp(dir + "/eval_ext.json"));
  CHECK(rep["discovery"]["external_selections"] == true);
  CHECK(rep["discovery"]["tpr"].get<double>() == doctest::Approx(1.0));
  CHECK(rep["discovery"]["fdr"].get<double>() == doctest::Approx(0.0));
}

TEST_CASE("oracle-check emits MKS/MAD and a curves file") {
  fixture();
  REQUIRE(run("oracle-check --data " + dir + "/train.csv --model " + dir +
              "/model.json --instances " + dir + "/test.csv --max-instances 2 --subset 0,4 "
              "--grid-points 64 --n-mc 20000 --seed 11 --curves-out " + dir +
              "/curves.csv --out " + dir + "/oracle.json --no-timestamp") == 0);
  json rep = json::parse(slurp(dir + "/oracle.json"));
  CHECK(rep["mks"].get<double>() >= 0.0);
  CHECK(rep["mks"].get<double>() <= 1.0);
  CHECK(rep["mad"].get<double>() >= 0.0);
  CHECK(rep["per_instance_ks"].size() == 2);
  const std::string curves = slurp(dir + "/curves.csv");
  CHECK(curves.find("instance_id,y,estimator,oracle") == 0);
}

TEST_CASE("rejected preconditions exit with code 1 and a structured error") {
  fixture();
  CHECK(run("train --data /nonexistent.csv --model-out " + dir + "/nope.json") != 0);
  CHECK(run("explain --data " + dir + "/train.csv --model " + dir + "/model.json --instances " +
            dir + "/test.csv --pi 1.5") != 0);
  // Hash mismatch: explain against the wrong dataset.
  CHECK(run("explain --data " + dir + "/test.csv --model " + dir + "/model.json --instances " +
            dir + "/test.csv --max-instances 1") != 0);
  // ... unless downgraded explicitly.
  CHECK(run("explain --data " + dir + "/train.csv --model " + dir + "/model.json --instances " +
            dir + "/test.csv --max-instances 1 --hash-warn") == 0);
}
