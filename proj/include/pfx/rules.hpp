#ifndef PFX_RULES_HPP
#define PFX_RULES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfx/explain.hpp"

namespace pfx {

enum class VolumeMode { kProbability, kLebesgue };

inline const char* to_string(VolumeMode m) {
  return m == VolumeMode::kProbability ? "probability" : "lebesgue";
}

// An IF-THEN box rule over a feature subset. Intervals follow the split
// geometry: open below, closed above, with +-inf for unbounded sides.
struct Rule {
  SubsetS subset;
  std::vector<Interval> box;   // aligned with subset.indices
  double output = 0.0;         // mean target (regression) or majority class
  double sdp_at_anchor = 0.0;
  double coverage = 0.0;       // fraction of the reference set inside the box
  double precision = 0.0;      // accuracy (clf) or negative MAE (reg) on covered rows
  DecisionBand band;           // regression anchor band
  int label = -1;              // classification anchor label
  std::vector<double> anchor;  // the instance the rule was grown around

  bool covers(const std::vector<double>& x) const {
    for (std::size_t d = 0; d < subset.indices.size(); ++d)
      if (!box[d].contains(x[static_cast<std::size_t>(subset.indices[d])])) return false;
    return true;
  }

  bool same_box(const Rule& o) const {
    if (subset.indices != o.subset.indices) return false;
    for (std::size_t d = 0; d < box.size(); ++d)
      if (!(box[d] == o.box[d])) return false;
    return true;
  }
};

struct RuleGrowthParams {
  double pi = 0.9;
  VolumeMode volume_mode = VolumeMode::kProbability;
  int min_node_size = 0;       // projected traversal floor; 0 = forest default
  int max_thresholds_per_dim = 64;
  int max_probes_per_step = 16;
};

namespace detail {

// Candidate extension ladder for one dimension: the distinct forest split
// thresholds on that feature that actually separate training rows, capped to
// an evenly spread subset when there are too many.
inline std::vector<double> threshold_ladder(const Forest& forest, int feature, int cap) {
  std::vector<double> thr;
  for (const Tree& tree : forest.trees)
    for (const TreeNode& nd : tree.nodes)
      if (!nd.is_leaf() && nd.split_feature == feature) thr.push_back(nd.threshold);
  std::sort(thr.begin(), thr.end());
  thr.erase(std::unique(thr.begin(), thr.end()), thr.end());
  if (thr.empty()) return thr;

  // Keep only thresholds that split off at least one training row from the
  // previous kept one; empty gaps would stall probability-volume growth.
  std::vector<double> col_sorted = forest.training_data.columns[static_cast<std::size_t>(feature)];
  std::sort(col_sorted.begin(), col_sorted.end());
  std::vector<double> kept;
  for (double t : thr) {
    const auto lo = kept.empty() ? col_sorted.begin()
                                 : std::upper_bound(col_sorted.begin(), col_sorted.end(), kept.back());
    const auto hi = std::upper_bound(col_sorted.begin(), col_sorted.end(), t);
    if (kept.empty() || hi > lo) kept.push_back(t);
  }
  // The dedupe above keeps the first threshold of each run; rows above the
  // last kept threshold are reachable through the +inf step.
  if (static_cast<int>(kept.size()) > cap) {
    std::vector<double> capped;
    capped.reserve(static_cast<std::size_t>(cap));
    const double step = static_cast<double>(kept.size() - 1) / static_cast<double>(cap - 1);
    for (int j = 0; j < cap; ++j)
      capped.push_back(kept[static_cast<std::size_t>(std::llround(j * step))]);
    capped.erase(std::unique(capped.begin(), capped.end()), capped.end());
    kept = std::move(capped);
  }
  return kept;
}

struct GrowDirection {
  int dim = 0;
  bool upper = false;       // false: extend the lower bound downward
  std::size_t pos = 0;      // steps taken along the ladder
  bool dead = false;
};

}  // namespace detail

// Grows the maximal axis-aligned box around the anchor's S-coordinates in
// which the same-decision condition keeps holding: starting from the
// projected-cell intersection, repeatedly extend one bound to the next split
// threshold, accept the extension only if every probed point of the newly
// covered slab clears pi, and among acceptable extensions take the largest
// volume gain (ties: lowest dimension, lower bound before upper).
inline Rule grow_rule(const Forest& forest, const std::vector<double>& x, double y,
                      const DecisionBand& band, const SubsetS& s,
                      const RuleGrowthParams& params = {}) {
  if (s.empty()) throw std::invalid_argument("grow_rule: subset must be nonempty");
  const bool classification = forest.params.task == Task::kClassification;
  const int label = classification ? static_cast<int>(y) : -1;

  auto sdp_at = [&](const std::vector<double>& z) {
    return classification
               ? sdp_classification(forest, z, label, s, params.min_node_size).value
               : sdp_regression(forest, z, y, band, s, params.min_node_size).value;
  };

  Rule rule;
  rule.subset = s;
  rule.band = band;
  rule.label = label;
  rule.anchor = x;
  rule.sdp_at_anchor = sdp_at(x);
  if (rule.sdp_at_anchor < params.pi)
    throw std::invalid_argument("grow_rule: anchor subset is not sufficient at pi");

  // The per-tree boxes all contain x_S, so their geometric intersection is a
  // valid (possibly sample-free) starting rectangle even when the per-tree
  // sample sets share no training row.
  ProjectedCell start = intersection_cell(forest, x, s, params.min_node_size);
  rule.box = start.box;

  const Dataset& data = forest.training_data;
  const std::size_t n = data.n_rows();
  const std::size_t dims = s.size();

  // Per-dimension candidate thresholds and data ranges for volume bookkeeping.
  std::vector<std::vector<double>> ladder(dims);
  std::vector<double> feat_lo(dims), feat_hi(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    const int f = s.indices[d];
    ladder[d] = detail::threshold_ladder(forest, f, params.max_thresholds_per_dim);
    const auto& col = data.columns[static_cast<std::size_t>(f)];
    feat_lo[d] = *std::min_element(col.begin(), col.end());
    feat_hi[d] = *std::max_element(col.begin(), col.end());
  }

  auto box_contains_row = [&](const std::vector<Interval>& box, std::size_t row) {
    for (std::size_t d = 0; d < dims; ++d)
      if (!box[d].contains(data.columns[static_cast<std::size_t>(s.indices[d])][row])) return false;
    return true;
  };

  // Rows sorted by each S-feature so slab membership comes from a binary
  // search instead of full scans.
  std::vector<std::vector<std::pair<double, std::int32_t>>> by_value(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    const auto& col = data.columns[static_cast<std::size_t>(s.indices[d])];
    by_value[d].reserve(n);
    for (std::size_t i = 0; i < n; ++i) by_value[d].emplace_back(col[i], static_cast<std::int32_t>(i));
    std::sort(by_value[d].begin(), by_value[d].end());
  }

  // Training rows inside proposal but outside the current box, for a
  // single-dimension extension.
  auto slab_rows_of = [&](const std::vector<Interval>& proposal, std::size_t d, double slab_lo,
                          double slab_hi) {
    std::vector<std::size_t> rows;
    const auto& sorted = by_value[d];
    auto lo_it = std::upper_bound(sorted.begin(), sorted.end(),
                                  std::make_pair(slab_lo, std::numeric_limits<std::int32_t>::max()));
    auto hi_it = std::upper_bound(sorted.begin(), sorted.end(),
                                  std::make_pair(slab_hi, std::numeric_limits<std::int32_t>::max()));
    for (auto it = lo_it; it != hi_it; ++it) {
      const std::size_t row = static_cast<std::size_t>(it->second);
      bool inside = true;
      for (std::size_t e = 0; e < dims && inside; ++e) {
        if (e == d) continue;
        inside = proposal[e].contains(
            data.columns[static_cast<std::size_t>(s.indices[e])][row]);
      }
      if (inside) rows.push_back(row);
    }
    std::sort(rows.begin(), rows.end());
    return rows;
  };

  auto lebesgue_volume = [&](const std::vector<Interval>& box) {
    double vol = 1.0;
    for (std::size_t d = 0; d < dims; ++d) {
      const double span = std::max(feat_hi[d] - feat_lo[d], 1e-300);
      const double lo = std::max(box[d].lo, feat_lo[d]);
      const double hi = std::min(box[d].hi, feat_hi[d]);
      vol *= std::max(hi - lo, 0.0) / span;
    }
    return vol;
  };

  // Probe memo: a training row either clears pi for this rule's band or it
  // never will; midpoint probes are keyed by their coordinates.
  std::vector<signed char> row_probe(n, -1);  // -1 unknown, 0 fail, 1 pass
  auto probe_row = [&](std::size_t row) {
    if (row_probe[row] < 0) {
      std::vector<double> z = x;
      for (std::size_t d = 0; d < dims; ++d)
        z[static_cast<std::size_t>(s.indices[d])] =
            data.columns[static_cast<std::size_t>(s.indices[d])][row];
      row_probe[row] = sdp_at(z) >= params.pi ? 1 : 0;
    }
    return row_probe[row] == 1;
  };

  std::vector<detail::GrowDirection> dirs;
  for (std::size_t d = 0; d < dims; ++d) {
    dirs.push_back({static_cast<int>(d), false, 0, false});
    dirs.push_back({static_cast<int>(d), true, 0, false});
  }
  // Skip ladder entries the starting box already passed.
  for (auto& dir : dirs) {
    const std::size_t d = static_cast<std::size_t>(dir.dim);
    const auto& lad = ladder[d];
    if (dir.upper) {
      std::size_t pos = 0;
      while (pos < lad.size() && lad[pos] <= rule.box[d].hi) ++pos;
      dir.pos = pos;
      if (rule.box[d].hi == std::numeric_limits<double>::infinity()) dir.dead = true;
    } else {
      std::size_t pos = 0;
      while (pos < lad.size() && lad[lad.size() - 1 - pos] >= rule.box[d].lo) ++pos;
      dir.pos = pos;
      if (rule.box[d].lo == -std::numeric_limits<double>::infinity()) dir.dead = true;
    }
  }

  for (;;) {
    int best_dir = -1;
    double best_gain = 0.0;
    std::vector<Interval> best_box;

    for (std::size_t di = 0; di < dirs.size(); ++di) {
      auto& dir = dirs[di];
      if (dir.dead) continue;
      const std::size_t d = static_cast<std::size_t>(dir.dim);
      const auto& lad = ladder[d];

      // Advance to the first ladder step strictly beyond the current bound.
      double next_bound = 0.0;
      for (;;) {
        if (dir.upper) {
          next_bound = dir.pos < lad.size() ? lad[dir.pos]
                                            : std::numeric_limits<double>::infinity();
          if (next_bound > rule.box[d].hi) break;
        } else {
          next_bound = dir.pos < lad.size() ? lad[lad.size() - 1 - dir.pos]
                                            : -std::numeric_limits<double>::infinity();
          if (next_bound < rule.box[d].lo) break;
        }
        if (dir.pos >= lad.size()) {
          dir.dead = true;  // the bound is already unbounded on this side
          break;
        }
        ++dir.pos;
      }
      if (dir.dead) continue;

      std::vector<Interval> proposal = rule.box;
      double slab_lo, slab_hi;
      if (dir.upper) {
        proposal[d].hi = next_bound;
        slab_lo = rule.box[d].hi;
        slab_hi = next_bound;
      } else {
        proposal[d].lo = next_bound;
        slab_lo = next_bound;
        slab_hi = rule.box[d].lo;
      }

      // Probe the newly covered slab: its training rows (capped, evenly
      // spread) plus a synthetic grid over the slab's midpoint/far edge
      // crossed with the other dimensions' anchor and box endpoints - the
      // corner cells of the slab, which rows can miss entirely.
      const std::vector<std::size_t> slab = slab_rows_of(proposal, d, slab_lo, slab_hi);
      bool pass = true;
      if (!slab.empty()) {
        const std::size_t cap = static_cast<std::size_t>(params.max_probes_per_step);
        const std::size_t stride = std::max<std::size_t>(1, slab.size() / cap);
        for (std::size_t t = 0; t < slab.size() && pass; t += stride) pass = probe_row(slab[t]);
        if (pass && slab.size() > 1) pass = probe_row(slab.back());
      }
      if (pass) {
        const double clamped_lo = std::isfinite(slab_lo) ? slab_lo : feat_lo[d] - 1.0;
        const double clamped_hi = std::isfinite(slab_hi) ? slab_hi : feat_hi[d] + 1.0;
        if (clamped_lo < clamped_hi) {
          const double edge_d = dir.upper
                                    ? clamped_hi
                                    : clamped_lo + 1e-6 * (feat_hi[d] - feat_lo[d] + 1.0);
          const double probes_d[2] = {0.5 * (clamped_lo + clamped_hi), edge_d};
          // Enumerate other-dimension combinations: anchor, then the box
          // endpoints where finite. Deterministic order, capped.
          std::vector<std::vector<double>> other_choices(dims);
          for (std::size_t e = 0; e < dims; ++e) {
            if (e == d) continue;
            other_choices[e].push_back(x[static_cast<std::size_t>(s.indices[e])]);
            const Interval& iv = proposal[e];
            if (std::isfinite(iv.lo))
              other_choices[e].push_back(iv.lo + 1e-6 * (feat_hi[e] - feat_lo[e] + 1.0));
            if (std::isfinite(iv.hi)) other_choices[e].push_back(iv.hi);
          }
          std::size_t combos = 1;
          for (std::size_t e = 0; e < dims; ++e)
            if (e != d) combos *= other_choices[e].size();
          const std::size_t combo_cap =
              std::max<std::size_t>(1, static_cast<std::size_t>(params.max_probes_per_step) / 2);
          const std::size_t combo_stride = std::max<std::size_t>(1, combos / combo_cap);
          std::vector<double> z = x;
          for (std::size_t c = 0; c < combos && pass; c += combo_stride) {
            std::size_t rem = c;
            for (std::size_t e = 0; e < dims; ++e) {
              if (e == d) continue;
              const auto& choices = other_choices[e];
              z[static_cast<std::size_t>(s.indices[e])] = choices[rem % choices.size()];
              rem /= choices.size();
            }
            for (double pd : probes_d) {
              z[static_cast<std::size_t>(s.indices[d])] = pd;
              if (sdp_at(z) < params.pi) {
                pass = false;
                break;
              }
            }
          }
        }
      }
      if (!pass) {
        dir.dead = true;  // the failing slab stays inside every later extension
        continue;
      }

      double gain;
      if (params.volume_mode == VolumeMode::kProbability) {
        gain = static_cast<double>(slab.size()) / static_cast<double>(n);
      } else {
        gain = lebesgue_volume(proposal) - lebesgue_volume(rule.box);
      }
      if (gain <= 0.0) continue;  // growth must be strict; retried once the box widens

      const bool better =
          best_dir < 0 || gain > best_gain ||
          (gain == best_gain &&
           (dir.dim < dirs[static_cast<std::size_t>(best_dir)].dim ||
            (dir.dim == dirs[static_cast<std::size_t>(best_dir)].dim && !dir.upper)));
      if (better) {
        best_dir = static_cast<int>(di);
        best_gain = gain;
        best_box = proposal;
      }
    }

    if (best_dir < 0) break;
    rule.box = std::move(best_box);
    ++dirs[static_cast<std::size_t>(best_dir)].pos;
  }

  // Output and quality stats over the covered training rows.
  std::vector<std::size_t> covered;
  for (std::size_t i = 0; i < n; ++i)
    if (box_contains_row(rule.box, i)) covered.push_back(i);
  rule.coverage = static_cast<double>(covered.size()) / static_cast<double>(n);
  if (!covered.empty()) {
    if (classification) {
      std::map<int, std::size_t> votes;
      for (std::size_t i : covered) ++votes[static_cast<int>(data.targets[i])];
      int best_class = votes.begin()->first;
      for (const auto& [c, cnt] : votes)
        if (cnt > votes[best_class]) best_class = c;
      rule.output = static_cast<double>(best_class);
      std::size_t hits = 0;
      for (std::size_t i : covered)
        if (static_cast<int>(data.targets[i]) == best_class) ++hits;
      rule.precision = static_cast<double>(hits) / static_cast<double>(covered.size());
    } else {
      double mean = 0.0;
      for (std::size_t i : covered) mean += data.targets[i];
      mean /= static_cast<double>(covered.size());
      rule.output = mean;
      double mae = 0.0;
      for (std::size_t i : covered) mae += std::abs(data.targets[i] - mean);
      rule.precision = -mae / static_cast<double>(covered.size());
    }
  } else {
    rule.output = y;
    rule.precision = classification ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  return rule;
}

// ---------------------------------------------------------------------------
// Global rule model
// ---------------------------------------------------------------------------

struct RuleModel {
  std::vector<Rule> rules;
  Task task = Task::kRegression;
  std::size_t anchors_tried = 0;
  std::size_t anchors_without_explanation = 0;
  std::size_t anchors_failed = 0;  // growth rejected (e.g. empty intersection)

  double mean_rule_size() const {
    if (rules.empty()) return 0.0;
    double s = 0.0;
    for (const Rule& r : rules) s += static_cast<double>(r.subset.size());
    return s / static_cast<double>(rules.size());
  }
};

struct GlobalSrParams {
  double pi = 0.9;
  ExplainOptions explain;       // band policy, s, min_node_size
  RuleGrowthParams growth;
  std::size_t max_anchors = 0;  // 0 = every training row
};

struct RulePrediction {
  bool covered = false;
  double output = 0.0;
  std::size_t rule_id = 0;
};

// For each training anchor (or an evenly spaced subsample): find the minimal
// sufficient explanations, grow one rule per member, deduplicate identical
// boxes. Conflicts at prediction time go to the most precise covering rule.
inline RuleModel build_global_sr(const Forest& forest, const GlobalSrParams& params) {
  const Dataset& data = forest.training_data;
  const std::size_t n = data.n_rows();
  RuleModel model;
  model.task = forest.params.task;

  std::vector<std::size_t> anchors;
  if (params.max_anchors == 0 || params.max_anchors >= n) {
    anchors.resize(n);
    for (std::size_t i = 0; i < n; ++i) anchors[i] = i;
  } else {
    const double stride = static_cast<double>(n) / static_cast<double>(params.max_anchors);
    for (std::size_t j = 0; j < params.max_anchors; ++j)
      anchors.push_back(static_cast<std::size_t>(j * stride));
  }
  model.anchors_tried = anchors.size();

  ExplainOptions eopts = params.explain;
  eopts.pi = params.pi;
  RuleGrowthParams gopts = params.growth;
  gopts.pi = params.pi;
  gopts.min_node_size = eopts.min_node_size;

  struct AnchorResult {
    std::vector<Rule> rules;
    bool no_explanation = false;
    bool failed = false;
  };
  std::vector<AnchorResult> results(anchors.size());

  parallel_for(anchors.size(), [&](std::size_t t) {
    AnchorResult& out = results[t];
    const std::vector<double> x = data.row(anchors[t]);
    try {
      InstanceExplanation expl = explain_instance(forest, x, eopts);
      if (expl.sets.mse.empty()) {
        out.no_explanation = true;
        return;
      }
      for (const ScoredSubset& m : expl.sets.mse) {
        Rule r = grow_rule(forest, x, expl.prediction.value,
                           forest.params.task == Task::kRegression ? expl.band : DecisionBand{},
                           m.subset, gopts);
        out.rules.push_back(std::move(r));
      }
    } catch (const std::exception&) {
      out.failed = true;
    }
  });

  for (AnchorResult& r : results) {
    if (r.no_explanation) ++model.anchors_without_explanation;
    if (r.failed) ++model.anchors_failed;
    for (Rule& rule : r.rules) {
      bool dup = false;
      for (const Rule& have : model.rules)
        if (have.same_box(rule)) {
          dup = true;
          break;
        }
      if (!dup) model.rules.push_back(std::move(rule));
    }
  }
  return model;
}

inline RulePrediction rule_predict(const RuleModel& model, const std::vector<double>& x) {
  RulePrediction pred;
  double best_precision = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < model.rules.size(); ++r) {
    const Rule& rule = model.rules[r];
    if (!rule.covers(x)) continue;
    if (!pred.covered || rule.precision > best_precision) {
      pred.covered = true;
      best_precision = rule.precision;
      pred.output = rule.output;
      pred.rule_id = r;
    }
  }
  return pred;
}

// Human rendering: "IF -4.45 < x4 <= -4.06 AND x5 > 0 THEN 1.43".
inline std::string render_rule(const Rule& rule, const std::vector<std::string>& names) {
  std::string out = "IF ";
  bool first = true;
  for (std::size_t d = 0; d < rule.subset.indices.size(); ++d) {
    const int f = rule.subset.indices[d];
    const Interval& iv = rule.box[d];
    if (!first) out += " AND ";
    first = false;
    const std::string name = names.empty() ? "x" + std::to_string(f + 1)
                                           : names[static_cast<std::size_t>(f)];
    char buf[128];
    const bool lo_open = iv.lo == -std::numeric_limits<double>::infinity();
    const bool hi_open = iv.hi == std::numeric_limits<double>::infinity();
    if (lo_open && hi_open)
      std::snprintf(buf, sizeof(buf), "%s is any", name.c_str());
    else if (lo_open)
      std::snprintf(buf, sizeof(buf), "%s <= %.6g", name.c_str(), iv.hi);
    else if (hi_open)
      std::snprintf(buf, sizeof(buf), "%s > %.6g", name.c_str(), iv.lo);
    else
      std::snprintf(buf, sizeof(buf), "%.6g < %s <= %.6g", iv.lo, name.c_str(), iv.hi);
    out += buf;
  }
  char tail[64];
  std::snprintf(tail, sizeof(tail), " THEN %.6g", rule.output);
  out += tail;
  return out;
}

}  // namespace pfx

#endif  // PFX_RULES_HPP
