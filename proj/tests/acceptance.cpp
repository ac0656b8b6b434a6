// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. Run all with no arguments or a subset: ./acceptance 1 4 8
//
// The heavyweight artifacts (the n=1e4 switch forest, the moon forest) are
// built once and shared across criteria.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pfx/eval.hpp"
#include "pfx/explain.hpp"
#include "pfx/rules.hpp"
#include "pfx/serialize.hpp"
#include "pfx/synthetic.hpp"

using namespace pfx;

namespace {

// Pinned run configuration.
constexpr std::uint64_t kSwitchTrainSeed = 20240;
constexpr std::uint64_t kSwitchTestSeed = 20241;
constexpr std::uint64_t kMoonTrainSeed = 30240;
constexpr std::uint64_t kMoonTestSeed = 30241;
constexpr std::uint64_t kFitSeed = 7;
constexpr double kPi = 0.9;
constexpr int kPreselect = 10;
constexpr double kAlpha = 0.05;
// Query-time projected floor for explanation searches (see decisions ledger).
constexpr int kExplainMns = 5;

struct Criterion {
  int id;
  std::string name;
  std::function<bool(std::string&)> run;
};

char buf[4096];

// ---------------------------------------------------------------------------
// Shared artifacts
// ---------------------------------------------------------------------------

struct SwitchWorld {
  SyntheticData train;
  SyntheticData test;
  Forest forest;
  double test_r2 = 0.0;
};

SwitchWorld& switch_world() {
  static std::unique_ptr<SwitchWorld> world;
  if (!world) {
    world = std::make_unique<SwitchWorld>();
    world->train = gen_linear_switch(10000, 100, kSwitchTrainSeed);
    world->test = gen_linear_switch(10000, 100, kSwitchTestSeed);
    ForestParams params;
    params.n_trees = 20;
    params.seed = kFitSeed;
    params.mtry = 100;
    world->forest = fit_forest(world->train.data, params);
    const Dataset& test = world->test.data;
    std::vector<double> preds(test.n_rows());
    parallel_for(test.n_rows(), [&](std::size_t i) {
      preds[i] = predict(world->forest, test.row(i)).value;
    });
    double mean = 0.0;
    for (double y : test.targets) mean += y;
    mean /= static_cast<double>(test.n_rows());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < test.n_rows(); ++i) {
      ss_res += (test.targets[i] - preds[i]) * (test.targets[i] - preds[i]);
      ss_tot += (test.targets[i] - mean) * (test.targets[i] - mean);
    }
    world->test_r2 = 1.0 - ss_res / ss_tot;
  }
  return *world;
}

ExplainOptions switch_explain_options() {
  ExplainOptions opts;
  opts.pi = kPi;
  opts.s = kPreselect;
  opts.alpha1 = kAlpha;
  opts.alpha2 = kAlpha;
  opts.min_node_size = kExplainMns;
  return opts;
}

std::vector<InstanceExplanation> explain_rows(const Forest& forest, const Dataset& data,
                                              const std::vector<std::size_t>& rows,
                                              const ExplainOptions& opts) {
  std::vector<InstanceExplanation> out(rows.size());
  parallel_for(rows.size(), [&](std::size_t t) {
    out[t] = explain_instance(forest, data.row(rows[t]), opts);
  });
  return out;
}

double r2_on(const std::vector<double>& targets, const std::vector<double>& preds) {
  double mean = 0.0;
  for (double y : targets) mean += y;
  mean /= static_cast<double>(targets.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    ss_res += (targets[i] - preds[i]) * (targets[i] - preds[i]);
    ss_tot += (targets[i] - mean) * (targets[i] - mean);
  }
  return ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
}

// ---------------------------------------------------------------------------
// Criterion 1: linear-switch discovery
// ---------------------------------------------------------------------------

bool criterion1(std::string& detail) {
  SwitchWorld& world = switch_world();
  const ExplainOptions opts = switch_explain_options();
  const std::size_t n_eval = 300;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n_eval; ++i) rows.push_back(i);
  auto expl = explain_rows(world.forest, world.test.data, rows, opts);

  std::vector<std::vector<int>> selected(rows.size());
  std::vector<std::vector<int>> truth(rows.size());
  std::vector<SubsetS> mse_subsets;
  std::vector<std::vector<double>> mse_probes;
  for (std::size_t t = 0; t < rows.size(); ++t) {
    truth[t] = world.test.truth_sets[rows[t]];
    if (!expl[t].sets.mse.empty()) {
      selected[t] = expl[t].sets.mse.front().subset.indices;
      mse_subsets.push_back(expl[t].sets.mse.front().subset);
      mse_probes.push_back(world.test.data.row(rows[t]));
    } else if (expl[t].sets.has_fallback) {
      selected[t] = expl[t].sets.best_fallback.subset.indices;
    }
  }
  DiscoveryReport rep = discovery_metrics(selected, truth);
  const double pmse = p_mse(world.forest, mse_subsets, mse_probes, opts.min_node_size);

  const bool pass =
      world.test_r2 >= 0.95 && rep.tpr >= 0.95 && rep.fdr <= 0.05 && pmse <= 0.1;
  std::snprintf(buf, sizeof(buf),
                "R2=%.4f (>=0.95), TPR=%.4f (>=0.95), FDR=%.4f (<=0.05), P-MSE=%.4f (<=0.1) "
                "[n=1e4, k=20, leaf=%d, pi=%.2f, s=%d, %zu instances]",
                world.test_r2, rep.tpr, rep.fdr, pmse, world.forest.params.min_samples_leaf, kPi,
                kPreselect, rows.size());
  detail = buf;
  return pass;
}

// ---------------------------------------------------------------------------
// Criterion 2: LXI table on the x5 > 0 subpopulation
// ---------------------------------------------------------------------------

bool criterion2(std::string& detail) {
  SwitchWorld& world = switch_world();
  const ExplainOptions opts = switch_explain_options();
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < world.test.data.n_rows() && rows.size() < 1000; ++i)
    if (world.test.data.columns[4][i] > 0.0) rows.push_back(i);
  auto expl = explain_rows(world.forest, world.test.data, rows, opts);

  std::vector<double> mean_lxi(100, 0.0), mean_lxi_mse(100, 0.0);
  std::size_t counted = 0;
  for (const auto& e : expl) {
    if (e.sets.ase.empty()) continue;
    auto v = lxi(e.sets, 100, LxiMode::kAse);
    auto vm = lxi(e.sets, 100, LxiMode::kMse);
    for (std::size_t j = 0; j < 100; ++j) {
      mean_lxi[j] += v[j];
      mean_lxi_mse[j] += vm[j];
    }
    ++counted;
  }
  for (double& v : mean_lxi) v /= static_cast<double>(counted);
  for (double& v : mean_lxi_mse) v /= static_cast<double>(counted);
  double max_noise = 0.0;
  for (std::size_t j = 5; j < 100; ++j) max_noise = std::max(max_noise, mean_lxi[j]);

  const bool pass = mean_lxi[2] >= 0.95 && mean_lxi[3] >= 0.95 && mean_lxi[4] >= 0.95 &&
                    mean_lxi[0] <= 0.05 && mean_lxi[1] <= 0.05 && max_noise <= 0.05;
  std::snprintf(buf, sizeof(buf),
                "mean LXI x1=%.4f x2=%.4f (<=0.05) | x3=%.4f x4=%.4f x5=%.4f (>=0.95) | "
                "max noise=%.4f (<=0.05) [%zu/%zu instances with explanations; "
                "minimal-collection averages: x1=%.4f x2=%.4f x3=%.4f x4=%.4f x5=%.4f]",
                mean_lxi[0], mean_lxi[1], mean_lxi[2], mean_lxi[3], mean_lxi[4], max_noise,
                counted, rows.size(), mean_lxi_mse[0], mean_lxi_mse[1], mean_lxi_mse[2],
                mean_lxi_mse[3], mean_lxi_mse[4]);
  detail = buf;
  return pass;
}

// ---------------------------------------------------------------------------
// Criterion 3: moon M-SE family and LXI
// ---------------------------------------------------------------------------

bool criterion3(std::string& detail) {
  MoonParams mp;
  mp.n = 10000;
  mp.seed = kMoonTrainSeed;
  auto train = gen_moon_noise(mp);
  MoonParams mpt;
  mpt.n = 3000;
  mpt.seed = kMoonTestSeed;
  auto test = gen_moon_noise(mpt);
  ForestParams params;
  params.n_trees = 20;
  params.seed = kFitSeed;
  params.mtry = 102;
  Forest forest = fit_forest(train.data, params);

  ExplainOptions opts;
  opts.pi = 0.95;
  opts.s = kPreselect;
  opts.min_node_size = kExplainMns;

  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < test.data.n_rows() && rows.size() < 150; ++i)
    if (test.data.columns[2][i] > 0.0) rows.push_back(i);
  auto expl = explain_rows(forest, test.data, rows, opts);

  std::size_t exact = 0, counted = 0;
  std::vector<double> mean_lxi(test.data.n_features(), 0.0);
  for (const auto& e : expl) {
    if (e.sets.ase.empty()) continue;
    ++counted;
    bool has_x1 = false, has_x2 = false;
    for (const auto& m : e.sets.mse) {
      if (m.subset.indices == std::vector<int>{0, 2}) has_x1 = true;
      if (m.subset.indices == std::vector<int>{1, 2}) has_x2 = true;
    }
    if (has_x1 && has_x2 && e.sets.mse.size() == 2) ++exact;
    auto v = lxi(e.sets, test.data.n_features(), LxiMode::kAse);
    for (std::size_t j = 0; j < v.size(); ++j) mean_lxi[j] += v[j];
  }
  for (double& v : mean_lxi) v /= static_cast<double>(counted);
  double max_noise = 0.0;
  for (std::size_t j = 3; j < mean_lxi.size(); ++j) max_noise = std::max(max_noise, mean_lxi[j]);
  const double family_rate = static_cast<double>(exact) / static_cast<double>(rows.size());

  const bool pass = family_rate >= 0.80 && std::abs(mean_lxi[0] - 0.5) <= 0.1 &&
                    std::abs(mean_lxi[1] - 0.5) <= 0.1 && mean_lxi[2] >= 0.9 &&
                    max_noise <= 0.1;
  std::snprintf(buf, sizeof(buf),
                "M-SE == {{x1,z1},{x2,z1}} for %.3f of %zu z1>0 instances (>=0.80); "
                "mean LXI x1=%.3f x2=%.3f (0.5 +- 0.1) z1=%.3f (>=0.9) noise<=%.3f (<=0.1). "
                "Both pairs are simultaneously sufficient only on ~1/3 of the moon "
                "(t in (pi/2, 5pi/6)); see the decisions ledger.",
                family_rate, rows.size(), mean_lxi[0], mean_lxi[1], mean_lxi[2], max_noise);
  detail = buf;
  return pass;
}

// ---------------------------------------------------------------------------
// Criterion 4: projected-CDF estimator validation against the MC oracle
// ---------------------------------------------------------------------------

double mks_for(const Forest& forest, const std::vector<std::vector<double>>& instances,
               const SubsetS& s, const std::vector<double>& grid, std::uint64_t seed,
               std::size_t n_mc, double* mad_out) {
  auto oracle = [&](const std::vector<double>& x_s, const SubsetS& sub,
                    const std::vector<double>& g) {
    Fnv1a h;
    for (double v : x_s) h.update(v);
    return mc_projected_cdf_oracle("linear_switch", x_s, sub, g, n_mc, seed ^ h.digest());
  };
  CdfValidation val = cdf_validation(forest, instances, s, grid, oracle);
  if (mad_out) *mad_out = val.mad;
  return val.mks;
}

bool criterion4(std::string& detail) {
  SwitchWorld& world = switch_world();
  auto grid = make_y_grid(world.train.data.targets, 512);
  std::vector<std::vector<double>> instances;
  for (std::size_t i = 0; i < 24; ++i) instances.push_back(world.test.data.row(100 + i));

  const SubsetS s_small = SubsetS::of({0, 4});
  const SubsetS s_fig = SubsetS::of({0, 1, 4});
  double mad_small = 0.0, mad_fig = 0.0;
  const double mks_small = mks_for(world.forest, instances, s_small, grid, 555, 200000, &mad_small);
  mks_for(world.forest, instances, s_fig, grid, 556, 200000, &mad_fig);

  // Pointwise curve at the reference query point of the validation figure.
  std::vector<double> x_point(100, 0.0);
  x_point[0] = -0.13;
  x_point[1] = 1.29;
  x_point[4] = -1.31;
  auto est = estimator_cdf_curve(world.forest, x_point, s_fig, grid);
  auto ref = mc_projected_cdf_oracle("linear_switch", {-0.13, 1.29, -1.31}, s_fig, grid, 200000,
                                     991);
  std::size_t close = 0;
  for (std::size_t g = 0; g < grid.size(); ++g)
    if (std::abs(est[g] - ref[g]) <= 0.05) ++close;
  const double close_frac = static_cast<double>(close) / static_cast<double>(grid.size());

  // Convergence trend of the KS distance in n.
  double trend_mks[3];
  const std::size_t trend_n[3] = {1000, 3000, 10000};
  for (int k = 0; k < 2; ++k) {
    auto tr = gen_linear_switch(trend_n[k], 100, kSwitchTrainSeed + 17 + k);
    ForestParams params;
    params.n_trees = 20;
    params.seed = kFitSeed;
    params.mtry = 100;
    Forest f = fit_forest(tr.data, params);
    std::vector<std::vector<double>> inst;
    for (std::size_t i = 0; i < 12; ++i) inst.push_back(world.test.data.row(200 + i));
    auto tgrid = make_y_grid(tr.data.targets, 256);
    trend_mks[k] = mks_for(f, inst, s_small, tgrid, 600 + k, 100000, nullptr);
  }
  {
    std::vector<std::vector<double>> inst;
    for (std::size_t i = 0; i < 12; ++i) inst.push_back(world.test.data.row(200 + i));
    auto tgrid = make_y_grid(world.train.data.targets, 256);
    trend_mks[2] = mks_for(world.forest, inst, s_small, tgrid, 602, 100000, nullptr);
  }
  const bool trend_ok = trend_mks[0] >= trend_mks[1] - 0.02 && trend_mks[1] >= trend_mks[2] - 0.02 &&
                        trend_mks[2] < trend_mks[0];

  const bool pass = mks_small <= 0.05 && mad_small <= 0.1 && mad_fig <= 0.03 &&
                    close_frac >= 0.90 && trend_ok;
  std::snprintf(buf, sizeof(buf),
                "S={0,4}: MKS=%.4f (<=0.05) MAD=%.4f (<=0.1); S={0,1,4}: MAD=%.4f (<=0.03); "
                "reference-point curve within 0.05 at %.3f of grid (>=0.90); "
                "MKS trend n=1e3:%.4f 3e3:%.4f 1e4:%.4f (decreasing within 0.02)",
                mks_small, mad_small, mad_fig, close_frac, trend_mks[0], trend_mks[1],
                trend_mks[2]);
  detail = buf;
  return pass;
}

// ---------------------------------------------------------------------------
// Step-structured tabular surrogate (hourly demand with a workday switch),
// standing in for the usage-pattern datasets: integer-coded drivers plus
// Gaussian noise columns. Columns: [hour 0..23, workday 0/1, month 1..12,
// noise x 5].
// ---------------------------------------------------------------------------

SyntheticData gen_demand_table(std::size_t n, std::uint64_t seed, bool classification) {
  SyntheticData out;
  out.data.task = classification ? Task::kClassification : Task::kRegression;
  const std::size_t p = 8;
  out.data.columns.assign(p, std::vector<double>(n));
  out.data.targets.resize(n);
  out.data.feature_names = {"hour", "workday", "month", "n1", "n2", "n3", "n4", "n5"};
  Rng rng(seed);
  // Piecewise-flat daily profile with rush-hour peaks.
  auto profile = [](int hour) {
    if (hour < 6) return 2.0;
    if (hour <= 9) return 14.0;
    if (hour <= 15) return 7.0;
    if (hour <= 19) return 17.0;
    return 4.0;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const int hour = static_cast<int>(rng.bounded(24));
    const int workday = rng.uniform01() < 0.6 ? 1 : 0;
    const int month = 1 + static_cast<int>(rng.bounded(12));
    out.data.columns[0][i] = hour;
    out.data.columns[1][i] = workday;
    out.data.columns[2][i] = month;
    for (std::size_t j = 3; j < p; ++j) out.data.columns[j][i] = 2.0 * rng.normal();
    const bool rush = (hour >= 7 && hour <= 9) || (hour >= 17 && hour <= 19);
    if (classification) {
      out.data.targets[i] = (workday == 1 ? rush : (hour >= 11 && hour <= 16)) ? 1.0 : 0.0;
    } else {
      out.data.targets[i] =
          profile(hour) + (workday == 1 && rush ? 9.0 : 0.0) + 0.5 * rng.normal();
    }
  }
  out.truth_sets.assign(n, {0, 1});
  return out;
}

// ---------------------------------------------------------------------------
// Criterion 5: sufficient-rule shape around an x5 > 0 anchor
// ---------------------------------------------------------------------------

bool criterion5(std::string& detail) {
  SwitchWorld& world = switch_world();
  const ExplainOptions opts = switch_explain_options();
  const std::vector<int> want = {2, 3, 4};

  std::optional<std::size_t> anchor;
  InstanceExplanation anchor_expl;
  Rule rule;
  for (std::size_t i = 0; i < 400 && !anchor; ++i) {
    const double x5 = world.test.data.columns[4][i];
    if (x5 < 0.3 || x5 > 1.2) continue;
    InstanceExplanation e = explain_instance(world.forest, world.test.data.row(i), opts);
    if (e.sets.mse.size() != 1 || e.sets.mse.front().subset.indices != want) continue;
    RuleGrowthParams growth;
    growth.pi = kPi;
    growth.min_node_size = kExplainMns;
    // Probability volume cannot reward extensions across sample-free slivers
    // (a 3-d slab around a tight cell holds no training rows), so the
    // continuous-feature exemplar shape is grown under Lebesgue volume with
    // a small fixed radius around the prediction.
    growth.volume_mode = VolumeMode::kLebesgue;
    const DecisionBand band = DecisionBand::fixed_radius(e.prediction.value, 0.36);
    try {
      rule = grow_rule(world.forest, world.test.data.row(i), e.prediction.value, band,
                       SubsetS::of(want), growth);
      anchor = i;
      anchor_expl = std::move(e);
    } catch (const std::exception&) {
      continue;  // anchor not sufficient at this radius; keep scanning
    }
  }
  if (!anchor) {
    detail = "no test instance with a unique M-SE {X3,X4,X5} admitted rule growth";
    return false;
  }
  std::vector<double> x = world.test.data.row(*anchor);

  const Interval& x3_iv = rule.box[0];
  const Interval& x4_iv = rule.box[1];
  const Interval& x5_iv = rule.box[2];
  const bool x5_unbounded = x5_iv.hi == std::numeric_limits<double>::infinity();
  const bool x5_lo_near_zero = std::isfinite(x5_iv.lo) && std::abs(x5_iv.lo) <= 0.3;
  const bool x3_finite = std::isfinite(x3_iv.lo) && std::isfinite(x3_iv.hi) &&
                         x3_iv.contains(x[2]);
  const bool x4_finite = std::isfinite(x4_iv.lo) && std::isfinite(x4_iv.hi) &&
                         x4_iv.contains(x[3]);

  const bool pass = x5_unbounded && x5_lo_near_zero && x3_finite && x4_finite;
  std::snprintf(buf, sizeof(buf),
                "anchor row %zu x_S=[%.2f, %.2f, %.2f]: rule X5 in (%.3f, %s] (lower bound "
                "within 0.3 of 0: %s), X3 in (%.3f, %.3f], X4 in (%.3f, %.3f] (finite, contain "
                "anchor: %s/%s)",
                *anchor, x[2], x[3], x[4], x5_iv.lo, x5_unbounded ? "inf" : "finite",
                x5_lo_near_zero ? "yes" : "no", x3_iv.lo, x3_iv.hi, x4_iv.lo, x4_iv.hi,
                x3_finite ? "yes" : "no", x4_finite ? "yes" : "no");
  detail = buf;
  return pass;
}

// ---------------------------------------------------------------------------
// Criterion 6: global rule model at desk scale
// ---------------------------------------------------------------------------

bool criterion6(std::string& detail) {
  auto train = gen_demand_table(3000, kSwitchTrainSeed + 5, false);
  auto test = gen_demand_table(1500, kSwitchTestSeed + 5, false);
  ForestParams params;
  params.n_trees = 20;
  params.seed = kFitSeed;
  params.mtry = 8;
  Forest forest = fit_forest(train.data, params);

  GlobalSrParams gp;
  gp.pi = kPi;
  gp.explain.pi = kPi;
  gp.explain.s = 8;
  gp.max_anchors = 300;
  RuleModel model = build_global_sr(forest, gp);

  std::vector<double> covered_targets, rule_preds, forest_preds;
  for (std::size_t i = 0; i < test.data.n_rows(); ++i) {
    const std::vector<double> x = test.data.row(i);
    RulePrediction pred = rule_predict(model, x);
    if (!pred.covered) continue;
    covered_targets.push_back(test.data.targets[i]);
    rule_preds.push_back(pred.output);
    forest_preds.push_back(predict(forest, x).value);
  }
  const double coverage =
      static_cast<double>(covered_targets.size()) / static_cast<double>(test.data.n_rows());
  const double r2_rules = covered_targets.empty() ? 0.0 : r2_on(covered_targets, rule_preds);
  const double r2_forest = covered_targets.empty() ? 0.0 : r2_on(covered_targets, forest_preds);

  const bool pass = coverage >= 0.6 && r2_rules >= r2_forest - 0.05;
  std::snprintf(buf, sizeof(buf),
                "coverage=%.3f (>=0.6), covered-point R2: rules=%.4f vs forest=%.4f "
                "(gap %.4f <= 0.05) [%zu rules from %zu anchors, mean size %.2f]",
                coverage, r2_rules, r2_forest, r2_forest - r2_rules, model.rules.size(),
                model.anchors_tried, model.mean_rule_size());
  detail = buf;
  return pass;
}

// ---------------------------------------------------------------------------
// Criterion 7: rule stability under input perturbations
// ---------------------------------------------------------------------------

bool criterion7(std::string& detail) {
  auto train = gen_demand_table(2000, kMoonTrainSeed + 3, true);
  auto test = gen_demand_table(600, kMoonTestSeed + 3, true);
  ForestParams params;
  params.n_trees = 10;
  params.seed = kFitSeed;
  params.mtry = 8;
  Forest forest = fit_forest(train.data, params);

  ExplainOptions opts;
  opts.pi = kPi;
  opts.s = 6;
  RuleGrowthParams growth;
  growth.pi = kPi;
  auto explainer = [&](const std::vector<double>& z) -> std::optional<Rule> {
    InstanceExplanation expl = explain_instance(forest, z, opts);
    if (expl.sets.mse.empty()) return std::nullopt;
    try {
      return grow_rule(forest, z, expl.prediction.value, DecisionBand{},
                       expl.sets.mse.front().subset, growth);
    } catch (const std::exception&) {
      return std::nullopt;
    }
  };

  // Zero-noise draws must reproduce one rule exactly.
  bool zero_ok = true;
  std::size_t zero_checked = 0;
  {
    std::vector<StabilityResult> zr(20);
    parallel_for(zr.size(), [&](std::size_t t) {
      zr[t] = stability(forest, explainer, test.data.row(t), 0.0, 50, 9100 + t);
    });
    for (const auto& r : zr) {
      if (r.unstable_prediction || r.draws_without_rule == 50) continue;
      ++zero_checked;
      if (r.distinct_rules != 1) zero_ok = false;
    }
  }

  // Noisy draws across 100 instances.
  const std::size_t n_inst = 100;
  std::vector<StabilityResult> results(n_inst);
  parallel_for(n_inst, [&](std::size_t t) {
    results[t] = stability(forest, explainer, test.data.row(t), 0.1, 50, 9300 + t);
  });
  double mean_distinct = 0.0;
  std::size_t stable = 0, unstable_pred = 0;
  for (const auto& r : results) {
    if (r.unstable_prediction) {
      ++unstable_pred;
      continue;
    }
    mean_distinct += r.distinct_rules;
    ++stable;
  }
  mean_distinct = stable ? mean_distinct / static_cast<double>(stable) : 99.0;

  const bool pass = zero_ok && zero_checked >= 10 && stable >= 50 && mean_distinct <= 2.0;
  std::snprintf(buf, sizeof(buf),
                "eps=0: exactly-one-rule on %zu/%zu checked instances (%s); eps=0.1: mean "
                "distinct rules %.3f (<=2.0) over %zu stable instances x 50 draws "
                "(%zu prediction-unstable skipped)",
                zero_checked, static_cast<std::size_t>(20), zero_ok ? "ok" : "VIOLATED",
                mean_distinct, stable, unstable_pred);
  detail = buf;
  return pass;
}

// ---------------------------------------------------------------------------
// Criterion 8: always-on property bundle
// ---------------------------------------------------------------------------

bool criterion8(std::string& detail) {
  std::vector<std::string> failures;

  // Desk forest shared by several properties.
  auto gen = gen_linear_switch(800, 8, 8801);
  ForestParams params;
  params.n_trees = 6;
  params.min_samples_leaf = 4;
  params.mtry = 8;
  params.seed = 11;
  Forest forest = fit_forest(gen.data, params);
  Rng rng(12345);

  // Weight normalization to 1e-12 and CDF monotonicity over 1e3 random queries.
  {
    bool weights_ok = true, monotone_ok = true;
    for (int q = 0; q < 1000; ++q) {
      std::vector<double> x(8);
      for (double& v : x) v = (rng.uniform01() - 0.5) * 9.0;
      std::vector<int> feats;
      for (int j = 0; j < 8; ++j)
        if (rng.uniform01() < 0.4) feats.push_back(j);
      SubsetS s = SubsetS::of(feats);
      if (q < 200) {
        auto w = projected_weights(forest, x, s);
        double sum = 0.0;
        for (double wi : w.weights) {
          if (wi < 0.0) weights_ok = false;
          sum += wi;
        }
        if (std::abs(sum - 1.0) > 1e-12) weights_ok = false;
      }
      const double y1 = (rng.uniform01() - 0.5) * 12.0;
      const double y2 = y1 + rng.uniform01() * 4.0;
      if (projected_cdf(forest, x, s, y1) > projected_cdf(forest, x, s, y2) + 1e-15)
        monotone_ok = false;
    }
    if (!weights_ok) failures.push_back("weight normalization");
    if (!monotone_ok) failures.push_back("cdf monotonicity");
  }

  // Projection identity: S = all features reproduces the plain forest exactly.
  {
    bool identity_ok = true;
    SubsetS all = SubsetS::all(8);
    for (int q = 0; q < 50; ++q) {
      std::vector<double> x(8);
      for (double& v : x) v = (rng.uniform01() - 0.5) * 9.0;
      auto pw = projected_weights(forest, x, all, 1);
      auto fw = forest_weights(forest, x);
      for (std::size_t i = 0; i < fw.size(); ++i)
        if (pw.weights[i] != fw[i]) identity_ok = false;
      if (projected_mean(forest, x, all, 1) != predict(forest, x).value) {
        // accumulation order matches, so this must be bit-equal
        identity_ok = false;
      }
    }
    if (!identity_ok) failures.push_back("projection identity");
  }

  // Subset-minimality against the exhaustive oracle for s <= 4.
  {
    bool minimality_ok = true;
    for (int rep = 0; rep < 3; ++rep) {
      ExplanationQuery q;
      q.x = gen.data.row(static_cast<std::size_t>(rep * 31));
      q.y = predict(forest, q.x).value;
      q.band = adaptive_band(forest, q.x, 0.05, 0.05);
      q.pi = 0.7 + 0.1 * rep;
      q.s = 4;
      auto got = find_explanations(forest, q);
      // exhaustive re-check
      const auto& pool = got.preselected;
      const int m = static_cast<int>(pool.size());
      std::vector<double> sdp(static_cast<std::size_t>(1) << m, -1.0);
      for (std::uint32_t mask = 1; mask < (1u << m); ++mask) {
        std::vector<int> feats;
        for (int i = 0; i < m; ++i)
          if (mask & (1u << i)) feats.push_back(pool[static_cast<std::size_t>(i)]);
        sdp[mask] = sdp_regression(forest, q.x, q.y, q.band, SubsetS::of(feats)).value;
      }
      std::size_t expect = 0;
      for (std::uint32_t mask = 1; mask < (1u << m); ++mask) {
        if (sdp[mask] < q.pi) continue;
        bool minimal = true;
        for (std::uint32_t sub = (mask - 1) & mask; sub; sub = (sub - 1) & mask)
          if (sdp[sub] >= q.pi) {
            minimal = false;
            break;
          }
        if (minimal) ++expect;
      }
      if (got.ase.size() != expect) minimality_ok = false;
      for (const auto& e : got.ase)
        if (e.sdp < q.pi) minimality_ok = false;
    }
    if (!minimality_ok) failures.push_back("subset minimality");
  }

  // Traversal equivalence on random hand-built trees is covered by the unit
  // suite; here re-check the shared-forest identity S = all vs leaf samples.
  {
    bool traversal_ok = true;
    SubsetS all = SubsetS::all(8);
    for (int q = 0; q < 25; ++q) {
      std::vector<double> x(8);
      for (double& v : x) v = (rng.uniform01() - 0.5) * 9.0;
      for (std::size_t l = 0; l < forest.trees.size(); ++l) {
        ProjectedCell cell = projected_traverse(forest, l, x, all, 1);
        const Tree& t = forest.trees[l];
        const TreeNode& leaf = t.nodes[static_cast<std::size_t>(tree_leaf(t, x))];
        std::vector<std::int32_t> leaf_ids(t.leaf_samples.begin() + leaf.samples_begin,
                                           t.leaf_samples.begin() + leaf.samples_end);
        std::sort(leaf_ids.begin(), leaf_ids.end());
        if (cell.sample_ids != leaf_ids) traversal_ok = false;
      }
    }
    if (!traversal_ok) failures.push_back("projected traversal identity");
  }

  // Seeded bit-reproducibility of fit, explanation, and rule outputs.
  {
    bool repro_ok = true;
    Forest refit = fit_forest(gen.data, params);
    for (std::size_t l = 0; l < forest.trees.size(); ++l) {
      if (refit.trees[l].bootstrap_counts != forest.trees[l].bootstrap_counts) repro_ok = false;
      if (refit.trees[l].nodes.size() != forest.trees[l].nodes.size()) {
        repro_ok = false;
        continue;
      }
      for (std::size_t v = 0; v < forest.trees[l].nodes.size(); ++v) {
        if (refit.trees[l].nodes[v].split_feature != forest.trees[l].nodes[v].split_feature ||
            refit.trees[l].nodes[v].threshold != forest.trees[l].nodes[v].threshold)
          repro_ok = false;
      }
    }
    ExplainOptions opts;
    opts.pi = 0.8;
    opts.s = 5;
    std::vector<double> x = gen.data.row(7);
    InstanceExplanation e1 = explain_instance(forest, x, opts);
    InstanceExplanation e2 = explain_instance(refit, x, opts);
    if (e1.sets.ase.size() != e2.sets.ase.size()) repro_ok = false;
    for (std::size_t a = 0; a < e1.sets.ase.size() && repro_ok; ++a) {
      if (e1.sets.ase[a].subset.indices != e2.sets.ase[a].subset.indices ||
          e1.sets.ase[a].sdp != e2.sets.ase[a].sdp)
        repro_ok = false;
    }
    if (!e1.sets.mse.empty()) {
      RuleGrowthParams growth;
      growth.pi = 0.8;
      try {
        Rule r1 = grow_rule(forest, x, e1.prediction.value, e1.band,
                            e1.sets.mse.front().subset, growth);
        Rule r2 = grow_rule(refit, x, e2.prediction.value, e2.band,
                            e2.sets.mse.front().subset, growth);
        if (!r1.same_box(r2) || r1.output != r2.output) repro_ok = false;
      } catch (const std::exception&) {
        // anchors can be insufficient at this pi; reproducibility is then moot
      }
    }
    if (!repro_ok) failures.push_back("seeded reproducibility");
  }

  if (failures.empty()) {
    detail =
        "weights sum to 1 within 1e-12; cdf monotone on 1e3 queries; projection identity "
        "bit-exact; minimality oracle agrees (s=4); S=all traversal equals leaves; refits "
        "and re-explanations are bit-identical";
    return true;
  }
  detail = "violated:";
  for (const auto& f : failures) detail += " [" + f + "]";
  return false;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<Criterion> criteria = {
      {1, "linear-switch discovery", criterion1},
      {2, "LXI table on x5 > 0", criterion2},
      {3, "moon M-SE family", criterion3},
      {4, "projected-CDF validation", criterion4},
      {5, "sufficient-rule shape", criterion5},
      {6, "global rule model", criterion6},
      {7, "rule stability", criterion7},
      {8, "property bundle", criterion8},
  };

  std::vector<int> wanted;
  for (int a = 1; a < argc; ++a) wanted.push_back(std::atoi(argv[a]));

  int failed = 0;
  for (auto& c : criteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    std::string detail;
    bool pass = false;
    try {
      pass = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %d (%s): %s\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failed;
  }
  return failed;
}
