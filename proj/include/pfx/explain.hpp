#ifndef PFX_EXPLAIN_HPP
#define PFX_EXPLAIN_HPP

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfx/sdp.hpp"

namespace pfx {

// The s most influential variables by split frequency; the forest splits most
// on the variables that drive the response, so subset search can stay inside
// this pool instead of 2^p.
inline std::vector<int> preselect(const Forest& forest, int s) {
  const std::size_t p = forest.n_features();
  if (s < 1) throw std::invalid_argument("preselect: s must be >= 1");
  const std::size_t budget = std::min<std::size_t>(static_cast<std::size_t>(s), p);
  const std::vector<std::int64_t> freq = split_frequency(forest);
  std::vector<int> order(p);
  for (std::size_t j = 0; j < p; ++j) order[j] = static_cast<int>(j);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (freq[static_cast<std::size_t>(a)] != freq[static_cast<std::size_t>(b)])
      return freq[static_cast<std::size_t>(a)] > freq[static_cast<std::size_t>(b)];
    return a < b;
  });
  std::vector<int> out(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(budget));
  std::sort(out.begin(), out.end());
  return out;
}

struct ExplanationQuery {
  std::vector<double> x;
  double y = 0.0;      // prediction (regression) or class label (classification)
  DecisionBand band;   // regression only
  double pi = 0.9;
  int s = 10;
  int min_node_size = 0;
};

struct ScoredSubset {
  SubsetS subset;
  double sdp = 0.0;
};

struct ExplanationSet {
  std::vector<ScoredSubset> ase;  // all subset-minimal sufficient sets, in search order
  std::vector<ScoredSubset> mse;  // the minimum-cardinality members of ase
  std::vector<int> preselected;
  bool has_fallback = false;
  ScoredSubset best_fallback;  // highest-SDP subset when nothing is sufficient
  std::vector<std::string> warnings;
};

// Enumerates the nonempty subsets of the preselected pool by increasing
// cardinality (lexicographic within one cardinality). A subset joins the
// sufficient collection iff its SDP clears pi and no accepted set is a proper
// subset of it; supersets of accepted sets are pruned without evaluation.
inline ExplanationSet find_explanations(const Forest& forest, const ExplanationQuery& q) {
  if (!(q.pi > 0.0 && q.pi < 1.0))
    throw std::invalid_argument("find_explanations: pi must be in (0,1)");
  if (q.s < 1) throw std::invalid_argument("find_explanations: s must be >= 1");
  if (q.s > 30) throw std::invalid_argument("find_explanations: s > 30 is not tractable (2^s subsets)");

  ExplanationSet out;
  int budget = q.s;
  if (static_cast<std::size_t>(budget) > forest.n_features()) {
    budget = static_cast<int>(forest.n_features());
    out.warnings.push_back("s exceeds feature count; clamped to " + std::to_string(budget));
  }
  out.preselected = preselect(forest, budget);
  const std::vector<int>& pool = out.preselected;
  const int m = static_cast<int>(pool.size());

  const bool classification = forest.params.task == Task::kClassification;
  const int label = classification ? static_cast<int>(q.y) : -1;

  std::vector<std::uint32_t> accepted_masks;
  double best_sdp = -1.0;
  std::uint32_t best_mask = 0;

  std::vector<int> comb;
  std::vector<int> feats;
  for (int card = 1; card <= m; ++card) {
    comb.resize(static_cast<std::size_t>(card));
    for (int i = 0; i < card; ++i) comb[static_cast<std::size_t>(i)] = i;
    for (;;) {
      std::uint32_t mask = 0;
      for (int i : comb) mask |= 1u << i;
      bool pruned = false;
      for (std::uint32_t am : accepted_masks) {
        if ((am & mask) == am) {  // an accepted set is a proper subset (card differs)
          pruned = true;
          break;
        }
      }
      if (!pruned) {
        feats.clear();
        for (int i : comb) feats.push_back(pool[static_cast<std::size_t>(i)]);
        SubsetS s = SubsetS::of(feats);
        const double sdp =
            classification
                ? sdp_classification(forest, q.x, label, s, q.min_node_size).value
                : sdp_regression(forest, q.x, q.y, q.band, s, q.min_node_size).value;
        if (sdp >= q.pi) {
          accepted_masks.push_back(mask);
          out.ase.push_back({std::move(s), sdp});
        } else if (sdp > best_sdp) {
          best_sdp = sdp;
          best_mask = mask;
        }
      }
      // next combination of `card` positions out of m
      int i = card - 1;
      while (i >= 0 && comb[static_cast<std::size_t>(i)] == m - card + i) --i;
      if (i < 0) break;
      ++comb[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < card; ++j)
        comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
    }
  }

  if (!out.ase.empty()) {
    const std::size_t min_card = out.ase.front().subset.size();
    for (const auto& e : out.ase)
      if (e.subset.size() == min_card) out.mse.push_back(e);
  } else if (best_sdp >= 0.0) {
    feats.clear();
    for (int i = 0; i < m; ++i)
      if (best_mask & (1u << i)) feats.push_back(pool[static_cast<std::size_t>(i)]);
    out.best_fallback = {SubsetS::of(feats), best_sdp};
    out.has_fallback = true;
  }
  return out;
}

enum class LxiMode { kAse, kMse };

// Per-feature frequency of appearance across the chosen explanation
// collection. 1 means the feature is in every sufficient set.
inline std::vector<double> lxi(const ExplanationSet& expl, std::size_t p,
                               LxiMode mode = LxiMode::kAse) {
  const std::vector<ScoredSubset>& coll = mode == LxiMode::kAse ? expl.ase : expl.mse;
  if (coll.empty())
    throw std::invalid_argument(
        "lxi: explanation collection is empty; inspect best_fallback instead");
  std::vector<double> out(p, 0.0);
  for (const auto& e : coll)
    for (int f : e.subset.indices) out[static_cast<std::size_t>(f)] += 1.0;
  const double denom = static_cast<double>(coll.size());
  for (double& v : out) v /= denom;
  return out;
}

// ---------------------------------------------------------------------------
// Instance-level convenience wrapper used by the CLI and the evaluation
// harness: predict, derive the band, search explanations.
// ---------------------------------------------------------------------------

struct ExplainOptions {
  double pi = 0.9;
  int s = 10;
  double alpha1 = 0.05;
  double alpha2 = 0.05;
  bool use_fixed_radius = false;
  double fixed_radius_t = 0.0;
  int min_node_size = 0;
};

struct InstanceExplanation {
  Prediction prediction;
  DecisionBand band;  // regression only
  ExplanationSet sets;
};

inline InstanceExplanation explain_instance(const Forest& forest, const std::vector<double>& x,
                                            const ExplainOptions& opts) {
  InstanceExplanation out;
  out.prediction = predict(forest, x);
  ExplanationQuery q;
  q.x = x;
  q.y = out.prediction.value;
  q.pi = opts.pi;
  q.s = opts.s;
  q.min_node_size = opts.min_node_size;
  if (forest.params.task == Task::kRegression) {
    out.band = opts.use_fixed_radius
                   ? DecisionBand::fixed_radius(out.prediction.value, opts.fixed_radius_t)
                   : adaptive_band(forest, x, opts.alpha1, opts.alpha2);
    q.band = out.band;
  }
  out.sets = find_explanations(forest, q);
  return out;
}

}  // namespace pfx

#endif  // PFX_EXPLAIN_HPP
