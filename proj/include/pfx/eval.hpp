#ifndef PFX_EVAL_HPP
#define PFX_EVAL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pfx/rules.hpp"
#include "pfx/synthetic.hpp"

namespace pfx {

// ---------------------------------------------------------------------------
// Feature-discovery metrics
// ---------------------------------------------------------------------------

struct DiscoveryReport {
  double tpr = 0.0;  // mean |sel & truth| / |truth|
  double fdr = 0.0;  // mean |sel \ truth| / max(|sel|, 1)
  std::size_t scored = 0;
  std::size_t skipped_empty_truth = 0;
  std::vector<double> per_instance_tpr;
  std::vector<double> per_instance_fdr;
};

inline DiscoveryReport discovery_metrics(const std::vector<std::vector<int>>& selected,
                                         const std::vector<std::vector<int>>& truth) {
  if (selected.size() != truth.size())
    throw std::invalid_argument("discovery_metrics: instance lists must align");
  DiscoveryReport rep;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (truth[i].empty()) {
      ++rep.skipped_empty_truth;
      continue;
    }
    std::size_t inter = 0;
    for (int f : selected[i])
      if (std::find(truth[i].begin(), truth[i].end(), f) != truth[i].end()) ++inter;
    const double tpr = static_cast<double>(inter) / static_cast<double>(truth[i].size());
    const double fdr = static_cast<double>(selected[i].size() - inter) /
                       static_cast<double>(std::max<std::size_t>(selected[i].size(), 1));
    rep.per_instance_tpr.push_back(tpr);
    rep.per_instance_fdr.push_back(fdr);
    rep.tpr += tpr;
    rep.fdr += fdr;
    ++rep.scored;
  }
  if (rep.scored) {
    rep.tpr /= static_cast<double>(rep.scored);
    rep.fdr /= static_cast<double>(rep.scored);
  }
  return rep;
}

// Mean squared gap between the full predictor and the projected predictor,
// each probe point evaluated under its own selected subset: probes[i] is the
// instance whose explanation chose subsets[i].
inline double p_mse(const Forest& forest, const std::vector<SubsetS>& subsets,
                    const std::vector<std::vector<double>>& probes, int min_node_size = 0) {
  if (forest.params.task != Task::kRegression)
    throw std::invalid_argument("p_mse: regression forests only");
  if (subsets.size() != probes.size())
    throw std::invalid_argument("p_mse: one subset per probe point required");
  if (probes.empty()) return 0.0;
  std::vector<double> gaps(probes.size(), 0.0);
  parallel_for(probes.size(), [&](std::size_t i) {
    if (subsets[i].size() == forest.n_features()) return;  // projection identity, exactly zero
    const double diff = predict(forest, probes[i]).value -
                        projected_mean(forest, probes[i], subsets[i], min_node_size);
    gaps[i] = diff * diff;
  });
  double total = 0.0;
  for (double v : gaps) total += v;
  return total / static_cast<double>(probes.size());
}

// ---------------------------------------------------------------------------
// Rule-model metrics
// ---------------------------------------------------------------------------

struct RuleReport {
  double correctness = 0.0;  // among covered: label match (clf) or band hit (reg)
  double coverage = 0.0;
  double sparsity_mean = 0.0;
  double sparsity_std = 0.0;
  std::size_t sparsity_max = 0;
  std::size_t covered = 0;
  std::size_t total = 0;
};

inline RuleReport rule_metrics(const RuleModel& model, const Dataset& test) {
  RuleReport rep;
  rep.total = test.n_rows();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.n_rows(); ++i) {
    const std::vector<double> x = test.row(i);
    RulePrediction pred = rule_predict(model, x);
    if (!pred.covered) continue;
    ++rep.covered;
    const Rule& rule = model.rules[pred.rule_id];
    if (model.task == Task::kClassification) {
      if (static_cast<int>(test.targets[i]) == static_cast<int>(pred.output)) ++correct;
    } else {
      if (rule.band.contains(test.targets[i])) ++correct;
    }
  }
  rep.coverage = rep.total ? static_cast<double>(rep.covered) / static_cast<double>(rep.total) : 0.0;
  rep.correctness = rep.covered ? static_cast<double>(correct) / static_cast<double>(rep.covered) : 0.0;

  if (!model.rules.empty()) {
    double mean = 0.0;
    for (const Rule& r : model.rules) {
      mean += static_cast<double>(r.subset.size());
      rep.sparsity_max = std::max(rep.sparsity_max, r.subset.size());
    }
    mean /= static_cast<double>(model.rules.size());
    double var = 0.0;
    for (const Rule& r : model.rules) {
      const double d = static_cast<double>(r.subset.size()) - mean;
      var += d * d;
    }
    rep.sparsity_mean = mean;
    rep.sparsity_std = std::sqrt(var / static_cast<double>(model.rules.size()));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Explanation stability under input noise
// ---------------------------------------------------------------------------

struct StabilityResult {
  int distinct_rules = 0;       // exact (subset, box) equality classes
  int near_distinct_rules = 0;  // classes under interval IoU >= 0.95
  bool unstable_prediction = false;
  int resamples_used = 0;
  int draws_without_rule = 0;
};

// How many distinct rules appear across n_perturb noisy copies of x. Draws
// that change the prediction are resampled up to a cap; exceeding the cap
// flags the instance instead of producing a count. "Unchanged" means label
// equality for classification and a drift below regression_tolerance target
// standard deviations for regression.
inline StabilityResult stability(const Forest& forest,
                                 const std::function<std::optional<Rule>(const std::vector<double>&)>& explainer,
                                 const std::vector<double>& x, double epsilon, int n_perturb,
                                 std::uint64_t seed, int max_resample_per_draw = 25,
                                 double regression_tolerance = 0.1) {
  StabilityResult res;
  const double noise_std = std::sqrt(epsilon);
  Rng rng(seed);
  const double base_pred = predict(forest, x).value;
  double pred_tol = 0.0;
  if (forest.params.task == Task::kRegression) {
    const std::vector<double>& ty = forest.training_data.targets;
    double mean = 0.0, var = 0.0;
    for (double y : ty) mean += y;
    mean /= static_cast<double>(ty.size());
    for (double y : ty) var += (y - mean) * (y - mean);
    pred_tol = regression_tolerance * std::sqrt(var / static_cast<double>(ty.size()));
  }

  std::vector<Rule> rules;
  for (int d = 0; d < n_perturb; ++d) {
    std::vector<double> z;
    bool ok = false;
    for (int attempt = 0; attempt < max_resample_per_draw; ++attempt) {
      z = x;
      if (noise_std > 0.0)
        for (double& v : z) v += noise_std * rng.normal();
      const double pred = predict(forest, z).value;
      if (forest.params.task == Task::kClassification ? pred == base_pred
                                                      : std::abs(pred - base_pred) <= pred_tol) {
        ok = true;
        break;
      }
      ++res.resamples_used;
    }
    if (!ok) {
      res.unstable_prediction = true;
      return res;
    }
    std::optional<Rule> rule = explainer(z);
    if (!rule.has_value()) {
      ++res.draws_without_rule;
      continue;
    }
    rules.push_back(std::move(*rule));
  }

  std::vector<std::size_t> exact_reps, near_reps;
  auto iou_match = [&](const Rule& a, const Rule& b) {
    if (a.subset.indices != b.subset.indices) return false;
    for (std::size_t d = 0; d < a.box.size(); ++d) {
      const int f = a.subset.indices[d];
      const auto& col = forest.training_data.columns[static_cast<std::size_t>(f)];
      const double flo = *std::min_element(col.begin(), col.end());
      const double fhi = *std::max_element(col.begin(), col.end());
      auto clamp = [&](const Interval& iv) {
        return std::make_pair(std::max(iv.lo, flo), std::min(iv.hi, fhi));
      };
      auto [alo, ahi] = clamp(a.box[d]);
      auto [blo, bhi] = clamp(b.box[d]);
      const double inter = std::max(0.0, std::min(ahi, bhi) - std::max(alo, blo));
      const double uni = std::max(ahi, bhi) - std::min(alo, blo);
      if (uni <= 0.0) continue;
      if (inter / uni < 0.95) return false;
    }
    return true;
  };
  for (std::size_t r = 0; r < rules.size(); ++r) {
    bool found = false;
    for (std::size_t rep : exact_reps)
      if (rules[rep].same_box(rules[r])) {
        found = true;
        break;
      }
    if (!found) exact_reps.push_back(r);
    bool near_found = false;
    for (std::size_t rep : near_reps)
      if (iou_match(rules[rep], rules[r])) {
        near_found = true;
        break;
      }
    if (!near_found) near_reps.push_back(r);
  }
  res.distinct_rules = static_cast<int>(exact_reps.size());
  res.near_distinct_rules = static_cast<int>(near_reps.size());
  return res;
}

// ---------------------------------------------------------------------------
// Monte-Carlo oracle for the projected CDF on the linear-switch generator,
// where the conditional law of the active block given X_S is Gaussian in
// closed form.
// ---------------------------------------------------------------------------

namespace detail {

// Dense SPD solve / Cholesky for the tiny conditional-covariance blocks.
inline std::vector<double> cholesky(std::vector<double> a, std::size_t m) {
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      const double ljk = a[j * m + k];
      for (std::size_t i = j; i < m; ++i) a[i * m + j] -= a[i * m + k] * ljk;
    }
    const double d = a[j * m + j];
    if (d <= 0.0) throw std::runtime_error("cholesky: matrix is not positive definite");
    const double inv = 1.0 / std::sqrt(d);
    for (std::size_t i = j; i < m; ++i) a[i * m + j] *= inv;
  }
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t i = 0; i < j; ++i) a[i * m + j] = 0.0;
  return a;
}

inline std::vector<double> spd_solve(const std::vector<double>& a, std::size_t m,
                                     std::vector<double> b, std::size_t ncols) {
  std::vector<double> l = cholesky(a, m);
  // forward then backward substitution, column by column
  for (std::size_t c = 0; c < ncols; ++c) {
    for (std::size_t i = 0; i < m; ++i) {
      double v = b[i * ncols + c];
      for (std::size_t k = 0; k < i; ++k) v -= l[i * m + k] * b[k * ncols + c];
      b[i * ncols + c] = v / l[i * m + i];
    }
    for (std::size_t i = m; i-- > 0;) {
      double v = b[i * ncols + c];
      for (std::size_t k = i + 1; k < m; ++k) v -= l[k * m + i] * b[k * ncols + c];
      b[i * ncols + c] = v / l[i * m + i];
    }
  }
  return b;
}

}  // namespace detail

struct ConditionalGaussian {
  std::vector<int> free_dims;   // indices being drawn
  std::vector<double> mean;     // conditional mean of the free dims
  std::vector<double> chol;     // lower Cholesky factor of the conditional covariance
};

// Conditional law of the listed free dimensions given X_B = x_B under the
// equicorrelated covariance diag*I + off*(J - I).
inline ConditionalGaussian conditional_gaussian(const std::vector<int>& free_dims,
                                                const std::vector<int>& given_dims,
                                                const std::vector<double>& given_values,
                                                double diag, double off) {
  const std::size_t na = free_dims.size();
  const std::size_t nb = given_dims.size();
  ConditionalGaussian cg;
  cg.free_dims = free_dims;
  cg.mean.assign(na, 0.0);
  std::vector<double> sigma_aa(na * na), sigma_ab(na * nb), sigma_bb(nb * nb);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < na; ++j) sigma_aa[i * na + j] = i == j ? diag : off;
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) sigma_ab[i * nb + j] = off;
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < nb; ++j) sigma_bb[i * nb + j] = i == j ? diag : off;

  if (nb > 0) {
    // K = Sigma_BB^{-1} [x_B | Sigma_BA]: one solve against nb x (1 + na).
    std::vector<double> rhs(nb * (1 + na));
    for (std::size_t i = 0; i < nb; ++i) {
      rhs[i * (1 + na)] = given_values[i];
      for (std::size_t j = 0; j < na; ++j) rhs[i * (1 + na) + 1 + j] = sigma_ab[j * nb + i];
    }
    std::vector<double> solved = detail::spd_solve(sigma_bb, nb, std::move(rhs), 1 + na);
    for (std::size_t i = 0; i < na; ++i) {
      double m = 0.0;
      for (std::size_t k = 0; k < nb; ++k) m += sigma_ab[i * nb + k] * solved[k * (1 + na)];
      cg.mean[i] = m;
      for (std::size_t j = 0; j < na; ++j) {
        double v = 0.0;
        for (std::size_t k = 0; k < nb; ++k)
          v += sigma_ab[i * nb + k] * solved[k * (1 + na) + 1 + j];
        sigma_aa[i * na + j] -= v;
      }
    }
  }
  cg.chol = detail::cholesky(sigma_aa, na);
  return cg;
}

// Empirical conditional CDF of the linear-switch response given X_S = x_S,
// from n_mc exact conditional draws, evaluated on y_grid.
inline std::vector<double> mc_projected_cdf_oracle(const std::string& generator,
                                                   const std::vector<double>& x_s,
                                                   const SubsetS& s,
                                                   const std::vector<double>& y_grid,
                                                   std::size_t n_mc, std::uint64_t seed) {
  if (generator != "linear_switch")
    throw std::invalid_argument("mc_projected_cdf_oracle: unsupported generator '" + generator +
                                "' (closed-form conditionals are known for linear_switch)");
  if (x_s.size() != s.size())
    throw std::invalid_argument("mc_projected_cdf_oracle: x_s must align with S");

  std::vector<int> free_dims;
  for (int f = 0; f < 5; ++f)
    if (!s.contains(f)) free_dims.push_back(f);
  ConditionalGaussian cg = conditional_gaussian(free_dims, s.indices, x_s, 5.8, 0.8);

  Rng rng(seed);
  std::vector<double> coords(5, 0.0);
  for (std::size_t d = 0; d < s.indices.size(); ++d)
    if (s.indices[d] < 5) coords[static_cast<std::size_t>(s.indices[d])] = x_s[d];

  const std::size_t na = free_dims.size();
  std::vector<double> z(na), draw(na), ys(n_mc);
  for (std::size_t m = 0; m < n_mc; ++m) {
    for (std::size_t i = 0; i < na; ++i) z[i] = rng.normal();
    for (std::size_t i = 0; i < na; ++i) {
      double v = cg.mean[i];
      for (std::size_t k = 0; k <= i; ++k) v += cg.chol[i * na + k] * z[k];
      coords[static_cast<std::size_t>(free_dims[i])] = v;
    }
    ys[m] = coords[4] <= 0.0 ? coords[0] + coords[1] : coords[2] + coords[3];
  }
  std::sort(ys.begin(), ys.end());
  std::vector<double> cdf(y_grid.size());
  for (std::size_t g = 0; g < y_grid.size(); ++g) {
    const auto it = std::upper_bound(ys.begin(), ys.end(), y_grid[g]);
    cdf[g] = static_cast<double>(it - ys.begin()) / static_cast<double>(n_mc);
  }
  return cdf;
}

// ---------------------------------------------------------------------------
// Estimator-vs-oracle CDF comparison
// ---------------------------------------------------------------------------

inline std::vector<double> make_y_grid(const std::vector<double>& targets, std::size_t points = 512,
                                       double pad_fraction = 0.05) {
  const double lo = *std::min_element(targets.begin(), targets.end());
  const double hi = *std::max_element(targets.begin(), targets.end());
  const double pad = (hi - lo) * pad_fraction;
  std::vector<double> grid(points);
  for (std::size_t g = 0; g < points; ++g)
    grid[g] = lo - pad + (hi - lo + 2 * pad) * static_cast<double>(g) /
                             static_cast<double>(points - 1);
  return grid;
}

inline std::vector<double> estimator_cdf_curve(const Forest& forest, const std::vector<double>& x,
                                               const SubsetS& s, const std::vector<double>& y_grid,
                                               int min_node_size = 0) {
  const WeightedTargetDist dist = projected_distribution(forest, x, s, min_node_size);
  std::vector<double> curve(y_grid.size());
  for (std::size_t g = 0; g < y_grid.size(); ++g) curve[g] = dist.cdf(y_grid[g]);
  return curve;
}

struct CdfValidation {
  double mks = 0.0;  // mean over instances of sup_y |est - oracle|
  double mad = 0.0;  // mean over instances of avg_y |est - oracle| (grid mean)
  std::vector<double> per_instance_ks;
  std::vector<double> per_instance_ad;
};

// `oracle` maps (x_S, S, y_grid) to the reference curve.
inline CdfValidation cdf_validation(
    const Forest& forest, const std::vector<std::vector<double>>& instances, const SubsetS& s,
    const std::vector<double>& y_grid,
    const std::function<std::vector<double>(const std::vector<double>&, const SubsetS&,
                                            const std::vector<double>&)>& oracle,
    int min_node_size = 0) {
  CdfValidation val;
  val.per_instance_ks.resize(instances.size());
  val.per_instance_ad.resize(instances.size());
  parallel_for(instances.size(), [&](std::size_t i) {
    const std::vector<double>& x = instances[i];
    std::vector<double> x_s(s.size());
    for (std::size_t d = 0; d < s.size(); ++d)
      x_s[d] = x[static_cast<std::size_t>(s.indices[d])];
    const std::vector<double> est = estimator_cdf_curve(forest, x, s, y_grid, min_node_size);
    const std::vector<double> ref = oracle(x_s, s, y_grid);
    double ks = 0.0, ad = 0.0;
    for (std::size_t g = 0; g < y_grid.size(); ++g) {
      const double d = std::abs(est[g] - ref[g]);
      ks = std::max(ks, d);
      ad += d;
    }
    val.per_instance_ks[i] = ks;
    val.per_instance_ad[i] = ad / static_cast<double>(y_grid.size());
  });
  for (std::size_t i = 0; i < instances.size(); ++i) {
    val.mks += val.per_instance_ks[i];
    val.mad += val.per_instance_ad[i];
  }
  if (!instances.empty()) {
    val.mks /= static_cast<double>(instances.size());
    val.mad /= static_cast<double>(instances.size());
  }
  return val;
}

}  // namespace pfx

#endif  // PFX_EVAL_HPP
