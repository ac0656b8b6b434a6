// pfx command-line interface: dataset synthesis, forest training, and the
// explanation / rule / evaluation pipeline. Every command emits a single JSON
// document (stdout or --out) that embeds the run configuration, and exits 1
// with a structured error object on any rejected input.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "pfx/eval.hpp"
#include "pfx/serialize.hpp"
#include "pfx/synthetic.hpp"

using namespace pfx;

namespace {

struct CommonOpts {
  std::string out;
  int threads = 0;
  bool no_timestamp = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--out", opts.out, "write the JSON report here instead of stdout");
  cmd->add_option("--threads", opts.threads,
                  "thread cap (0 = all cores; env PFX_THREADS overrides the default)");
  cmd->add_flag("--no-timestamp", opts.no_timestamp, "omit the timestamp for byte-stable output");
}

void apply_threads(const CommonOpts& opts) {
  int n = opts.threads;
  if (n == 0) {
    if (const char* env = std::getenv("PFX_THREADS")) n = std::atoi(env);
  }
  set_thread_count(n > 0 ? n : 0);
}

void emit(const Json& doc, const CommonOpts& opts) {
  if (opts.out.empty()) {
    std::cout << doc.dump(2) << "\n";
    return;
  }
  std::ofstream f(opts.out);
  if (!f) throw std::runtime_error("cannot write output file '" + opts.out + "'");
  f << doc.dump(2) << "\n";
}

Json base_report(const std::string& command, const Json& config, const CommonOpts& opts) {
  Json doc;
  doc["command"] = command;
  doc["library_version"] = kLibraryVersion;
  doc["config"] = config;
  if (!opts.no_timestamp) {
    const auto now = std::chrono::system_clock::now();
    doc["timestamp_unix"] =
        std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
  }
  return doc;
}

struct DataOpts {
  std::string path;
  std::string target = "target";
  std::string task = "reg";
};

void add_data(CLI::App* cmd, DataOpts& opts, const char* flag, const char* help) {
  cmd->add_option(flag, opts.path, help)->required();
  cmd->add_option("--target", opts.target, "target column name (default: target)");
  cmd->add_option("--task", opts.task, "task: reg|clf (default: reg)");
}

Dataset load_data(const DataOpts& opts) {
  return load_csv(opts.path, opts.target, task_from_string(opts.task));
}

double accuracy_or_r2(const Forest& forest, const Dataset& data) {
  std::vector<double> preds(data.n_rows());
  parallel_for(data.n_rows(), [&](std::size_t i) { preds[i] = predict(forest, data.row(i)).value; });
  if (forest.params.task == Task::kClassification) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.n_rows(); ++i)
      if (static_cast<int>(preds[i]) == static_cast<int>(data.targets[i])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(data.n_rows());
  }
  double mean = 0.0;
  for (double y : data.targets) mean += y;
  mean /= static_cast<double>(data.n_rows());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    ss_res += (data.targets[i] - preds[i]) * (data.targets[i] - preds[i]);
    ss_tot += (data.targets[i] - mean) * (data.targets[i] - mean);
  }
  return ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
}

std::vector<std::size_t> select_rows(std::size_t available, std::size_t max_instances) {
  std::vector<std::size_t> rows;
  const std::size_t count = max_instances == 0 ? available : std::min(available, max_instances);
  for (std::size_t i = 0; i < count; ++i) rows.push_back(i);
  return rows;
}

struct ModelOpts {
  std::string model;
  std::string instances;
  std::size_t max_instances = 0;
  double pi = 0.9;
  int s = 10;
  double alpha1 = 0.05;
  double alpha2 = 0.05;
  double fixed_t = -1.0;
  int min_node_size = 0;
  bool hash_warn = false;
};

void add_model_opts(CLI::App* cmd, ModelOpts& mo, bool with_instances) {
  cmd->add_option("--model", mo.model, "model JSON from `train`")->required();
  if (with_instances)
    cmd->add_option("--instances", mo.instances, "CSV of instances to process")->required();
  cmd->add_option("--max-instances", mo.max_instances, "cap on processed rows (0 = all)");
  cmd->add_option("--pi", mo.pi, "sufficiency threshold (default 0.9)");
  cmd->add_option("--s", mo.s, "preselection budget (default 10)");
  cmd->add_option("--alpha1", mo.alpha1, "lower band quantile level (default 0.05)");
  cmd->add_option("--alpha2", mo.alpha2, "upper band tail level (default 0.05)");
  cmd->add_option("--fixed-t", mo.fixed_t,
                  "fixed band radius t (band = prediction +- sqrt(t)); overrides quantiles");
  cmd->add_option("--min-node-size", mo.min_node_size,
                  "projected traversal floor (0 = forest min-samples-leaf)");
  cmd->add_flag("--hash-warn", mo.hash_warn,
                "downgrade a training-data hash mismatch to a warning");
}

ExplainOptions explain_options_of(const ModelOpts& mo) {
  ExplainOptions opts;
  opts.pi = mo.pi;
  opts.s = mo.s;
  opts.alpha1 = mo.alpha1;
  opts.alpha2 = mo.alpha2;
  opts.min_node_size = mo.min_node_size;
  if (mo.fixed_t >= 0.0) {
    opts.use_fixed_radius = true;
    opts.fixed_radius_t = mo.fixed_t;
  }
  return opts;
}

Json model_config_json(const ModelOpts& mo, const DataOpts& dataopts) {
  return Json{{"model", mo.model},         {"data", dataopts.path},
              {"target", dataopts.target}, {"task", dataopts.task},
              {"instances", mo.instances}, {"max_instances", mo.max_instances},
              {"pi", mo.pi},               {"s", mo.s},
              {"alpha1", mo.alpha1},       {"alpha2", mo.alpha2},
              {"fixed_t", mo.fixed_t},     {"min_node_size", mo.min_node_size}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"projected-forest explanations: same-decision probabilities, sufficient "
               "explanations, and sufficient rules"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark dataset");
  struct {
    std::string kind = "linear_switch";
    std::size_t n = 10000;
    std::size_t p = 100;
    std::size_t noise_dims = 100;
    double jitter = 0.1;
    bool no_flip = false;
    std::uint64_t seed = 0;
    std::string out_csv;
    std::string truth_out;
  } sy;
  CommonOpts sy_common;
  synth->add_option("--kind", sy.kind, "linear_switch | moon_noise")->required();
  synth->add_option("--n", sy.n, "rows");
  synth->add_option("--p", sy.p, "features (linear_switch)");
  synth->add_option("--noise-dims", sy.noise_dims, "noise features (moon_noise)");
  synth->add_option("--jitter-std", sy.jitter, "moon coordinate jitter");
  synth->add_flag("--no-flip", sy.no_flip, "disable the z1 label flip (moon_noise)");
  synth->add_option("--seed", sy.seed, "generator seed");
  synth->add_option("--data-out", sy.out_csv, "CSV output path")->required();
  synth->add_option("--truth-out", sy.truth_out, "per-instance active-feature sidecar");
  add_common(synth, sy_common);

  auto* train = app.add_subcommand("train", "fit a forest and serialize it");
  DataOpts tr_data;
  struct {
    int trees = 20;
    int min_samples_leaf = 0;
    int mtry = 0;
    int bootstrap_size = 0;
    std::uint64_t seed = 0;
    std::string model_out;
    std::string test_csv;
  } tr;
  CommonOpts tr_common;
  add_data(train, tr_data, "--data", "training CSV");
  train->add_option("--trees", tr.trees, "tree count (default 20)");
  train->add_option("--min-samples-leaf", tr.min_samples_leaf,
                    "bootstrap observations per leaf (0 = floor(sqrt(n) ln(n)^1.5 / 250))");
  train->add_option("--mtry", tr.mtry, "split candidates per node (0 = p/3 reg, sqrt(p) clf)");
  train->add_option("--bootstrap-size", tr.bootstrap_size, "bootstrap draw size (0 = n)");
  train->add_option("--seed", tr.seed, "fit seed");
  train->add_option("--model-out", tr.model_out, "model JSON path")->required();
  train->add_option("--test", tr.test_csv, "held-out CSV for the fit report");
  add_common(train, tr_common);

  auto* explain_cmd = app.add_subcommand("explain", "sufficient explanations and LXI per instance");
  DataOpts ex_data;
  ModelOpts ex_model;
  CommonOpts ex_common;
  add_data(explain_cmd, ex_data, "--data", "training CSV the model was fit on");
  add_model_opts(explain_cmd, ex_model, true);
  add_common(explain_cmd, ex_common);

  auto* rule_cmd = app.add_subcommand("rule", "grow a sufficient rule per instance");
  DataOpts ru_data;
  ModelOpts ru_model;
  std::string ru_volume = "probability";
  CommonOpts ru_common;
  add_data(rule_cmd, ru_data, "--data", "training CSV the model was fit on");
  add_model_opts(rule_cmd, ru_model, true);
  rule_cmd->add_option("--volume-mode", ru_volume, "probability | lebesgue");
  add_common(rule_cmd, ru_common);

  auto* gsr_cmd = app.add_subcommand("global-sr", "assemble the global rule model");
  DataOpts gs_data;
  ModelOpts gs_model;
  std::size_t gs_max_anchors = 0;
  std::string gs_volume = "probability";
  std::string gs_rules_out;
  CommonOpts gs_common;
  add_data(gsr_cmd, gs_data, "--data", "training CSV the model was fit on");
  add_model_opts(gsr_cmd, gs_model, false);
  gsr_cmd->add_option("--max-anchors", gs_max_anchors, "anchor subsample size (0 = every row)");
  gsr_cmd->add_option("--volume-mode", gs_volume, "probability | lebesgue");
  gsr_cmd->add_option("--rules-out", gs_rules_out, "rule model JSON path")->required();
  add_common(gsr_cmd, gs_common);

  auto* eval_cmd = app.add_subcommand("eval", "discovery / P-MSE / rule / stability metrics");
  DataOpts ev_data;
  ModelOpts ev_model;
  struct {
    std::string test_csv;
    std::string truth;
    std::string selections;
    std::string rule_model;
    int stability_n = 0;
    double stability_eps = 0.1;
    std::size_t stability_instances = 20;
    std::uint64_t seed = 0;
  } ev;
  CommonOpts ev_common;
  add_data(eval_cmd, ev_data, "--data", "training CSV the model was fit on");
  add_model_opts(eval_cmd, ev_model, false);
  eval_cmd->add_option("--test", ev.test_csv, "held-out CSV")->required();
  eval_cmd->add_option("--truth", ev.truth, "ground-truth active-feature sidecar");
  eval_cmd->add_option("--selections", ev.selections,
                       "external per-instance selections to score instead of the model's");
  eval_cmd->add_option("--rule-model", ev.rule_model, "rule model JSON from global-sr");
  eval_cmd->add_option("--stability-n", ev.stability_n, "perturbation draws per instance (0 = off)");
  eval_cmd->add_option("--stability-eps", ev.stability_eps, "perturbation covariance epsilon");
  eval_cmd->add_option("--stability-instances", ev.stability_instances,
                       "instances for the stability protocol");
  eval_cmd->add_option("--seed", ev.seed, "seed for stability draws");
  add_common(eval_cmd, ev_common);

  auto* oc_cmd = app.add_subcommand(
      "oracle-check", "projected CDF estimator vs the closed-form Monte-Carlo oracle");
  DataOpts oc_data;
  ModelOpts oc_model;
  struct {
    std::string generator = "linear_switch";
    std::string subset;
    std::size_t grid_points = 512;
    std::size_t n_mc = 100000;
    std::uint64_t seed = 0;
    std::string curves_out;
  } oc;
  CommonOpts oc_common;
  add_data(oc_cmd, oc_data, "--data", "training CSV the model was fit on");
  add_model_opts(oc_cmd, oc_model, true);
  oc_cmd->add_option("--generator", oc.generator, "synthetic generator id (linear_switch)");
  oc_cmd->add_option("--subset", oc.subset, "comma-separated 0-based feature indices")->required();
  oc_cmd->add_option("--grid-points", oc.grid_points, "y-grid resolution (default 512)");
  oc_cmd->add_option("--n-mc", oc.n_mc, "Monte-Carlo draws per instance");
  oc_cmd->add_option("--seed", oc.seed, "oracle seed");
  oc_cmd->add_option("--curves-out", oc.curves_out, "per-point curves CSV for plotting");
  add_common(oc_cmd, oc_common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      apply_threads(sy_common);
      Json config{{"kind", sy.kind}, {"n", sy.n},       {"p", sy.p},
                  {"seed", sy.seed}, {"data_out", sy.out_csv}, {"truth_out", sy.truth_out}};
      SyntheticData gen;
      if (sy.kind == "linear_switch") {
        gen = gen_linear_switch(sy.n, sy.p, sy.seed);
      } else if (sy.kind == "moon_noise") {
        MoonParams mp;
        mp.n = sy.n;
        mp.seed = sy.seed;
        mp.noise_dims = sy.noise_dims;
        mp.jitter_std = sy.jitter;
        mp.flip_on_z1 = !sy.no_flip;
        config["noise_dims"] = sy.noise_dims;
        config["jitter_std"] = sy.jitter;
        config["flip_on_z1"] = !sy.no_flip;
        gen = gen_moon_noise(mp);
      } else {
        throw std::invalid_argument("unknown generator kind '" + sy.kind + "'");
      }
      save_csv(gen.data, sy.out_csv);
      if (!sy.truth_out.empty()) save_selection_file(sy.truth_out, gen.truth_sets);
      Json doc = base_report("synth", config, sy_common);
      doc["rows"] = gen.data.n_rows();
      doc["features"] = gen.data.n_features();
      doc["data_hash"] = gen.data.content_hash();
      emit(doc, sy_common);
    } else if (train->parsed()) {
      apply_threads(tr_common);
      Dataset data = load_data(tr_data);
      ForestParams params;
      params.n_trees = tr.trees;
      params.min_samples_leaf = tr.min_samples_leaf;
      params.mtry = tr.mtry;
      params.bootstrap_size = tr.bootstrap_size;
      params.seed = tr.seed;
      params.task = data.task;
      Forest forest = fit_forest(data, params);
      save_forest(forest, tr.model_out);
      Json config{{"data", tr_data.path},
                  {"target", tr_data.target},
                  {"task", tr_data.task},
                  {"trees", forest.params.n_trees},
                  {"min_samples_leaf", forest.params.min_samples_leaf},
                  {"mtry", forest.params.mtry},
                  {"bootstrap_size", forest.params.bootstrap_size},
                  {"seed", tr.seed},
                  {"model_out", tr.model_out}};
      Json doc = base_report("train", config, tr_common);
      doc["fit"][forest.params.task == Task::kRegression ? "train_r2" : "train_accuracy"] =
          accuracy_or_r2(forest, data);
      if (!tr.test_csv.empty()) {
        Dataset test = load_csv(tr.test_csv, tr_data.target, data.task);
        doc["fit"][forest.params.task == Task::kRegression ? "test_r2" : "test_accuracy"] =
            accuracy_or_r2(forest, test);
      }
      doc["fit"]["split_frequencies"] = split_frequency(forest);
      emit(doc, tr_common);
    } else if (explain_cmd->parsed()) {
      apply_threads(ex_common);
      Dataset data = load_data(ex_data);
      Forest forest = load_forest(ex_model.model, data,
                                  ex_model.hash_warn ? HashPolicy::kWarn : HashPolicy::kError);
      Dataset instances = load_csv(ex_model.instances, ex_data.target, data.task);
      ExplainOptions opts = explain_options_of(ex_model);
      auto rows = select_rows(instances.n_rows(), ex_model.max_instances);
      std::vector<InstanceExplanation> results(rows.size());
      parallel_for(rows.size(), [&](std::size_t t) {
        results[t] = explain_instance(forest, instances.row(rows[t]), opts);
      });
      Json doc = base_report("explain", model_config_json(ex_model, ex_data), ex_common);
      Json arr = Json::array();
      for (std::size_t t = 0; t < rows.size(); ++t)
        arr.push_back(explanation_to_json(rows[t], results[t], forest, opts.pi));
      doc["explanations"] = std::move(arr);
      emit(doc, ex_common);
    } else if (rule_cmd->parsed()) {
      apply_threads(ru_common);
      Dataset data = load_data(ru_data);
      Forest forest = load_forest(ru_model.model, data,
                                  ru_model.hash_warn ? HashPolicy::kWarn : HashPolicy::kError);
      Dataset instances = load_csv(ru_model.instances, ru_data.target, data.task);
      ExplainOptions opts = explain_options_of(ru_model);
      RuleGrowthParams growth;
      growth.pi = ru_model.pi;
      growth.min_node_size = ru_model.min_node_size;
      growth.volume_mode =
          ru_volume == "lebesgue" ? VolumeMode::kLebesgue : VolumeMode::kProbability;
      auto rows = select_rows(instances.n_rows(), ru_model.max_instances);
      std::vector<Json> results(rows.size());
      parallel_for(rows.size(), [&](std::size_t t) {
        const std::vector<double> x = instances.row(rows[t]);
        Json rj{{"instance_id", rows[t]}};
        InstanceExplanation expl = explain_instance(forest, x, opts);
        if (expl.sets.mse.empty()) {
          rj["status"] = "no_sufficient_explanation";
          if (expl.sets.has_fallback)
            rj["fallback"] = Json{{"features", expl.sets.best_fallback.subset.indices},
                                  {"sdp", expl.sets.best_fallback.sdp}};
        } else {
          try {
            Rule rule = grow_rule(forest, x, expl.prediction.value,
                                  forest.params.task == Task::kRegression ? expl.band
                                                                          : DecisionBand{},
                                  expl.sets.mse.front().subset, growth);
            rj["status"] = "ok";
            rj["rule"] = rule_to_json(rule, data.feature_names);
          } catch (const std::exception& e) {
            rj["status"] = "growth_failed";
            rj["message"] = e.what();
          }
        }
        results[t] = std::move(rj);
      });
      Json config = model_config_json(ru_model, ru_data);
      config["volume_mode"] = ru_volume;
      Json doc = base_report("rule", config, ru_common);
      Json arr = Json::array();
      for (auto& r : results) arr.push_back(std::move(r));
      doc["rules"] = std::move(arr);
      emit(doc, ru_common);
    } else if (gsr_cmd->parsed()) {
      apply_threads(gs_common);
      Dataset data = load_data(gs_data);
      Forest forest = load_forest(gs_model.model, data,
                                  gs_model.hash_warn ? HashPolicy::kWarn : HashPolicy::kError);
      GlobalSrParams params;
      params.pi = gs_model.pi;
      params.explain = explain_options_of(gs_model);
      params.growth.volume_mode =
          gs_volume == "lebesgue" ? VolumeMode::kLebesgue : VolumeMode::kProbability;
      params.max_anchors = gs_max_anchors;
      RuleModel model = build_global_sr(forest, params);
      {
        std::ofstream f(gs_rules_out);
        if (!f) throw std::runtime_error("cannot write rule model '" + gs_rules_out + "'");
        f << rule_model_to_json(model, data.feature_names).dump();
      }
      Json config = model_config_json(gs_model, gs_data);
      config["max_anchors"] = gs_max_anchors;
      config["volume_mode"] = gs_volume;
      config["rules_out"] = gs_rules_out;
      Json doc = base_report("global-sr", config, gs_common);
      RuleReport train_rep = rule_metrics(model, data);
      doc["summary"] = {{"rules", model.rules.size()},
                        {"anchors_tried", model.anchors_tried},
                        {"anchors_without_explanation", model.anchors_without_explanation},
                        {"anchors_failed", model.anchors_failed},
                        {"mean_rule_size", model.mean_rule_size()},
                        {"train_coverage", train_rep.coverage},
                        {"train_correctness", train_rep.correctness}};
      emit(doc, gs_common);
    } else if (eval_cmd->parsed()) {
      apply_threads(ev_common);
      Dataset data = load_data(ev_data);
      Forest forest = load_forest(ev_model.model, data,
                                  ev_model.hash_warn ? HashPolicy::kWarn : HashPolicy::kError);
      Dataset test = load_csv(ev.test_csv, ev_data.target, data.task);
      ExplainOptions opts = explain_options_of(ev_model);
      Json config = model_config_json(ev_model, ev_data);
      config["test"] = ev.test_csv;
      config["seed"] = ev.seed;
      Json doc = base_report("eval", config, ev_common);

      doc["forest"][forest.params.task == Task::kRegression ? "test_r2" : "test_accuracy"] =
          accuracy_or_r2(forest, test);

      if (!ev.truth.empty()) {
        auto truth = load_selection_file(ev.truth);
        auto rows = select_rows(std::min(test.n_rows(), truth.size()), ev_model.max_instances);
        std::vector<std::vector<int>> selected(rows.size());
        std::vector<SubsetS> subsets(rows.size());
        std::vector<char> has_subset(rows.size(), 0);
        if (ev.selections.empty()) {
          parallel_for(rows.size(), [&](std::size_t t) {
            InstanceExplanation expl = explain_instance(forest, test.row(rows[t]), opts);
            if (!expl.sets.mse.empty()) {
              selected[t] = expl.sets.mse.front().subset.indices;
              subsets[t] = expl.sets.mse.front().subset;
              has_subset[t] = 1;
            } else if (expl.sets.has_fallback) {
              selected[t] = expl.sets.best_fallback.subset.indices;
              subsets[t] = expl.sets.best_fallback.subset;
              has_subset[t] = 1;
            }
          });
        } else {
          auto ext = load_selection_file(ev.selections);
          for (std::size_t t = 0; t < rows.size(); ++t)
            if (rows[t] < ext.size()) selected[t] = ext[rows[t]];
        }
        std::vector<std::vector<int>> truth_rows(rows.size());
        for (std::size_t t = 0; t < rows.size(); ++t) truth_rows[t] = truth[rows[t]];
        DiscoveryReport rep = discovery_metrics(selected, truth_rows);
        doc["discovery"] = {{"tpr", rep.tpr},
                            {"fdr", rep.fdr},
                            {"scored", rep.scored},
                            {"skipped_empty_truth", rep.skipped_empty_truth},
                            {"external_selections", !ev.selections.empty()}};
        if (forest.params.task == Task::kRegression && ev.selections.empty()) {
          std::vector<SubsetS> used;
          std::vector<std::vector<double>> used_probes;
          for (std::size_t t = 0; t < rows.size(); ++t)
            if (has_subset[t]) {
              used.push_back(subsets[t]);
              used_probes.push_back(test.row(rows[t]));
            }
          doc["p_mse"] = p_mse(forest, used, used_probes, opts.min_node_size);
        }
      }

      if (!ev.rule_model.empty()) {
        std::ifstream f(ev.rule_model);
        if (!f) throw std::runtime_error("cannot open rule model '" + ev.rule_model + "'");
        RuleModel model = rule_model_from_json(Json::parse(f));
        RuleReport rep = rule_metrics(model, test);
        doc["rule_metrics"] = {{"coverage", rep.coverage},
                               {"correctness", rep.correctness},
                               {"sparsity_mean", rep.sparsity_mean},
                               {"sparsity_std", rep.sparsity_std},
                               {"sparsity_max", rep.sparsity_max}};
      }

      if (ev.stability_n > 0) {
        RuleGrowthParams growth;
        growth.pi = ev_model.pi;
        growth.min_node_size = ev_model.min_node_size;
        auto explainer = [&](const std::vector<double>& z) -> std::optional<Rule> {
          InstanceExplanation expl = explain_instance(forest, z, opts);
          if (expl.sets.mse.empty()) return std::nullopt;
          try {
            return grow_rule(forest, z, expl.prediction.value,
                             forest.params.task == Task::kRegression ? expl.band : DecisionBand{},
                             expl.sets.mse.front().subset, growth);
          } catch (const std::exception&) {
            return std::nullopt;
          }
        };
        const std::size_t count = std::min<std::size_t>(ev.stability_instances, test.n_rows());
        std::vector<StabilityResult> results(count);
        parallel_for(count, [&](std::size_t t) {
          results[t] = stability(forest, explainer, test.row(t), ev.stability_eps, ev.stability_n,
                                 ev.seed + t);
        });
        double mean_distinct = 0.0, mean_near = 0.0;
        std::size_t stable_instances = 0, unstable_pred = 0;
        for (const auto& r : results) {
          if (r.unstable_prediction) {
            ++unstable_pred;
            continue;
          }
          mean_distinct += r.distinct_rules;
          mean_near += r.near_distinct_rules;
          ++stable_instances;
        }
        if (stable_instances) {
          mean_distinct /= static_cast<double>(stable_instances);
          mean_near /= static_cast<double>(stable_instances);
        }
        doc["stability"] = {{"epsilon", ev.stability_eps},
                            {"draws", ev.stability_n},
                            {"instances", count},
                            {"unstable_prediction_instances", unstable_pred},
                            {"mean_distinct_rules", mean_distinct},
                            {"mean_near_distinct_rules", mean_near}};
      }
      emit(doc, ev_common);
    } else if (oc_cmd->parsed()) {
      apply_threads(oc_common);
      Dataset data = load_data(oc_data);
      Forest forest = load_forest(oc_model.model, data,
                                  oc_model.hash_warn ? HashPolicy::kWarn : HashPolicy::kError);
      if (forest.params.task != Task::kRegression)
        throw std::invalid_argument("oracle-check requires a regression model");
      Dataset instances = load_csv(oc_model.instances, oc_data.target, data.task);
      std::vector<int> feats;
      {
        std::string cur;
        for (char c : oc.subset + ",") {
          if (c == ',') {
            if (!cur.empty()) feats.push_back(std::stoi(cur));
            cur.clear();
          } else {
            cur.push_back(c);
          }
        }
      }
      SubsetS s = SubsetS::of(feats);
      auto rows = select_rows(instances.n_rows(), oc_model.max_instances);
      std::vector<std::vector<double>> xs;
      for (std::size_t r : rows) xs.push_back(instances.row(r));
      auto grid = make_y_grid(data.targets, oc.grid_points);
      const std::uint64_t mc_seed = oc.seed;
      auto oracle = [&](const std::vector<double>& x_s, const SubsetS& sub,
                        const std::vector<double>& g) {
        Fnv1a h;
        for (double v : x_s) h.update(v);
        return mc_projected_cdf_oracle(oc.generator, x_s, sub, g, oc.n_mc, mc_seed ^ h.digest());
      };
      CdfValidation val = cdf_validation(forest, xs, s, grid, oracle, oc_model.min_node_size);
      Json config = model_config_json(oc_model, oc_data);
      config["generator"] = oc.generator;
      config["subset"] = s.indices;
      config["grid_points"] = oc.grid_points;
      config["n_mc"] = oc.n_mc;
      config["seed"] = oc.seed;
      Json doc = base_report("oracle-check", config, oc_common);
      doc["mks"] = val.mks;
      doc["mad"] = val.mad;
      doc["per_instance_ks"] = val.per_instance_ks;
      doc["per_instance_ad"] = val.per_instance_ad;
      if (!oc.curves_out.empty()) {
        std::ofstream f(oc.curves_out);
        if (!f) throw std::runtime_error("cannot write curves CSV '" + oc.curves_out + "'");
        f << "instance_id,y,estimator,oracle\n";
        f.precision(10);
        for (std::size_t t = 0; t < xs.size(); ++t) {
          std::vector<double> x_s(s.size());
          for (std::size_t d = 0; d < s.size(); ++d)
            x_s[d] = xs[t][static_cast<std::size_t>(s.indices[d])];
          auto est = estimator_cdf_curve(forest, xs[t], s, grid, oc_model.min_node_size);
          auto ref = oracle(x_s, s, grid);
          for (std::size_t g = 0; g < grid.size(); ++g)
            f << rows[t] << ',' << grid[g] << ',' << est[g] << ',' << ref[g] << '\n';
        }
      }
      emit(doc, oc_common);
    }
  } catch (const std::exception& e) {
    Json err;
    err["error"] = {{"code", 1}, {"message", e.what()}};
    std::cout << err.dump(2) << "\n";
    return 1;
  }
  return 0;
}
