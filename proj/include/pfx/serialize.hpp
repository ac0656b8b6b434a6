#ifndef PFX_SERIALIZE_HPP
#define PFX_SERIALIZE_HPP

#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "pfx/explain.hpp"
#include "pfx/rules.hpp"

namespace pfx {

using Json = nlohmann::json;

inline constexpr int kModelFormatVersion = 1;

enum class HashPolicy { kError, kWarn };

// ---------------------------------------------------------------------------
// Forest <-> JSON. The document carries the fitted structure plus a content
// hash of the training table; loading re-attaches the caller-provided dataset
// and verifies the hash under the chosen policy.
// ---------------------------------------------------------------------------

inline Json forest_to_json(const Forest& forest) {
  Json doc;
  doc["format_version"] = kModelFormatVersion;
  doc["library_version"] = kLibraryVersion;
  doc["params"] = {{"n_trees", forest.params.n_trees},
                   {"min_samples_leaf", forest.params.min_samples_leaf},
                   {"mtry", forest.params.mtry},
                   {"bootstrap_size", forest.params.bootstrap_size},
                   {"seed", forest.params.seed},
                   {"task", to_string(forest.params.task)}};
  doc["data_hash"] = forest.training_data.content_hash();
  doc["n_rows"] = forest.n_rows();
  doc["n_features"] = forest.n_features();

  Json trees = Json::array();
  for (const Tree& tree : forest.trees) {
    Json tj;
    tj["rng_seed"] = tree.rng_seed;
    tj["bootstrap_counts"] = tree.bootstrap_counts;
    Json nodes = Json::array();
    for (const TreeNode& nd : tree.nodes) {
      if (nd.is_leaf()) {
        std::vector<std::int32_t> ids(tree.leaf_samples.begin() + nd.samples_begin,
                                      tree.leaf_samples.begin() + nd.samples_end);
        nodes.push_back(Json{{"samples", ids}});
      } else {
        nodes.push_back(Json::array({nd.split_feature, nd.threshold, nd.left, nd.right}));
      }
    }
    tj["nodes"] = std::move(nodes);
    trees.push_back(std::move(tj));
  }
  doc["trees"] = std::move(trees);
  return doc;
}

inline Forest forest_from_json(const Json& doc, Dataset training_data,
                               HashPolicy policy = HashPolicy::kError) {
  if (!doc.contains("format_version") || doc["format_version"].get<int>() != kModelFormatVersion)
    throw std::runtime_error("model: unsupported format version");
  training_data.validate();
  const std::uint64_t have = training_data.content_hash();
  const std::uint64_t want = doc["data_hash"].get<std::uint64_t>();
  if (have != want) {
    const std::string msg = "model: training-data hash mismatch (model was fit on different data)";
    if (policy == HashPolicy::kError) throw std::runtime_error(msg);
    std::cerr << "warning: " << msg << "\n";
  }

  Forest forest;
  const auto& pj = doc["params"];
  forest.params.n_trees = pj["n_trees"].get<int>();
  forest.params.min_samples_leaf = pj["min_samples_leaf"].get<int>();
  forest.params.mtry = pj["mtry"].get<int>();
  forest.params.bootstrap_size = pj["bootstrap_size"].get<int>();
  forest.params.seed = pj["seed"].get<std::uint64_t>();
  forest.params.task = task_from_string(pj["task"].get<std::string>());
  forest.training_data = std::move(training_data);

  const std::size_t n = forest.n_rows();
  const std::size_t p = forest.n_features();
  if (doc["n_rows"].get<std::size_t>() != n || doc["n_features"].get<std::size_t>() != p)
    throw std::runtime_error("model: dataset shape does not match the model document");

  for (const Json& tj : doc["trees"]) {
    Tree tree;
    tree.rng_seed = tj["rng_seed"].get<std::uint64_t>();
    tree.bootstrap_counts = tj["bootstrap_counts"].get<std::vector<std::uint32_t>>();
    if (tree.bootstrap_counts.size() != n)
      throw std::runtime_error("model: bootstrap count vector has wrong length");
    for (const Json& nj : tj["nodes"]) {
      TreeNode nd;
      if (nj.is_array()) {
        nd.split_feature = nj[0].get<int>();
        nd.threshold = nj[1].get<double>();
        nd.left = nj[2].get<std::int32_t>();
        nd.right = nj[3].get<std::int32_t>();
        if (nd.split_feature < 0 || static_cast<std::size_t>(nd.split_feature) >= p)
          throw std::runtime_error("model: split feature out of range");
      } else {
        auto ids = nj["samples"].get<std::vector<std::int32_t>>();
        nd.samples_begin = static_cast<std::int32_t>(tree.leaf_samples.size());
        for (std::int32_t i : ids) {
          if (i < 0 || static_cast<std::size_t>(i) >= n)
            throw std::runtime_error("model: leaf sample id out of range");
          tree.leaf_samples.push_back(i);
          nd.bootstrap_total += tree.bootstrap_counts[static_cast<std::size_t>(i)];
        }
        nd.samples_end = static_cast<std::int32_t>(tree.leaf_samples.size());
      }
      tree.nodes.push_back(nd);
    }
    if (tree.nodes.empty()) throw std::runtime_error("model: tree without nodes");
    // Children always follow their parent in the node array, so a reverse
    // pass restores the internal bootstrap totals.
    for (std::size_t v = tree.nodes.size(); v-- > 0;) {
      TreeNode& nd = tree.nodes[v];
      if (nd.is_leaf()) continue;
      if (nd.left < 0 || nd.right < 0 ||
          static_cast<std::size_t>(nd.left) >= tree.nodes.size() ||
          static_cast<std::size_t>(nd.right) >= tree.nodes.size() ||
          static_cast<std::size_t>(nd.left) <= v || static_cast<std::size_t>(nd.right) <= v)
        throw std::runtime_error("model: malformed child links");
      nd.bootstrap_total = tree.nodes[static_cast<std::size_t>(nd.left)].bootstrap_total +
                           tree.nodes[static_cast<std::size_t>(nd.right)].bootstrap_total;
    }

    // Structural audit: every training row must route to a leaf that lists it.
    for (std::size_t i = 0; i < n; ++i) {
      const std::int32_t leaf = tree.leaf_of(forest.training_data.row(i));
      const TreeNode& nd = tree.nodes[static_cast<std::size_t>(leaf)];
      bool found = false;
      for (std::int32_t sidx = nd.samples_begin; sidx < nd.samples_end && !found; ++sidx)
        found = tree.leaf_samples[static_cast<std::size_t>(sidx)] == static_cast<std::int32_t>(i);
      if (!found) throw std::runtime_error("model: leaf sample lists disagree with routing");
    }
    for (std::size_t i = 0; i < n; ++i)
      if (tree.bootstrap_counts[i] > 0)
        tree.inbag.emplace_back(static_cast<std::int32_t>(i), tree.bootstrap_counts[i]);

    const int words = static_cast<int>((p + 63) / 64);
    tree.subtree_features.assign(tree.nodes.size() * static_cast<std::size_t>(words), 0);
    for (std::size_t v = tree.nodes.size(); v-- > 0;) {
      const TreeNode& nd = tree.nodes[v];
      if (nd.is_leaf()) continue;
      std::uint64_t* row = tree.subtree_features.data() + v * static_cast<std::size_t>(words);
      row[nd.split_feature / 64] |= 1ULL << (nd.split_feature % 64);
      const std::uint64_t* lrow =
          tree.subtree_features.data() + static_cast<std::size_t>(nd.left) * words;
      const std::uint64_t* rrow =
          tree.subtree_features.data() + static_cast<std::size_t>(nd.right) * words;
      for (int w = 0; w < words; ++w) row[w] |= lrow[w] | rrow[w];
    }
    forest.trees.push_back(std::move(tree));
  }
  if (forest.trees.size() != static_cast<std::size_t>(forest.params.n_trees))
    throw std::runtime_error("model: tree count does not match params");
  detail::finalize_forest_index(forest);
  return forest;
}

inline void save_forest(const Forest& forest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("model: cannot write '" + path + "'");
  out << forest_to_json(forest).dump();
}

inline Forest load_forest(const std::string& path, Dataset training_data,
                          HashPolicy policy = HashPolicy::kError) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("model: cannot open '" + path + "'");
  Json doc = Json::parse(in);
  return forest_from_json(doc, std::move(training_data), policy);
}

// ---------------------------------------------------------------------------
// Rules and explanation reports
// ---------------------------------------------------------------------------

inline Json interval_to_json(const Interval& iv) {
  Json lo = std::isfinite(iv.lo) ? Json(iv.lo) : Json(nullptr);
  Json hi = std::isfinite(iv.hi) ? Json(iv.hi) : Json(nullptr);
  return Json::array({lo, hi});
}

inline Interval interval_from_json(const Json& j) {
  Interval iv;
  if (!j[0].is_null()) iv.lo = j[0].get<double>();
  if (!j[1].is_null()) iv.hi = j[1].get<double>();
  return iv;
}

inline Json rule_to_json(const Rule& rule, const std::vector<std::string>& names) {
  Json j;
  Json feats = Json::array();
  Json intervals = Json::array();
  for (std::size_t d = 0; d < rule.subset.indices.size(); ++d) {
    const int f = rule.subset.indices[d];
    feats.push_back(names.empty() ? std::to_string(f) : names[static_cast<std::size_t>(f)]);
    intervals.push_back(interval_to_json(rule.box[d]));
  }
  j["features"] = std::move(feats);
  j["feature_indices"] = rule.subset.indices;
  j["intervals"] = std::move(intervals);
  j["output"] = rule.output;
  j["precision"] = rule.precision;
  j["coverage"] = rule.coverage;
  j["sdp_at_anchor"] = rule.sdp_at_anchor;
  if (rule.label >= 0) {
    j["label"] = rule.label;
  } else {
    j["band"] = Json::array({rule.band.lo, rule.band.hi});
  }
  j["text"] = render_rule(rule, names);
  return j;
}

inline Rule rule_from_json(const Json& j) {
  Rule rule;
  rule.subset = SubsetS::of(j["feature_indices"].get<std::vector<int>>());
  for (const Json& iv : j["intervals"]) rule.box.push_back(interval_from_json(iv));
  rule.output = j["output"].get<double>();
  rule.precision = j["precision"].get<double>();
  rule.coverage = j["coverage"].get<double>();
  rule.sdp_at_anchor = j["sdp_at_anchor"].get<double>();
  if (j.contains("label")) {
    rule.label = j["label"].get<int>();
  } else {
    rule.band.lo = j["band"][0].get<double>();
    rule.band.hi = j["band"][1].get<double>();
  }
  return rule;
}

inline Json rule_model_to_json(const RuleModel& model, const std::vector<std::string>& names) {
  Json j;
  j["task"] = to_string(model.task);
  j["anchors_tried"] = model.anchors_tried;
  j["anchors_without_explanation"] = model.anchors_without_explanation;
  j["anchors_failed"] = model.anchors_failed;
  j["mean_rule_size"] = model.mean_rule_size();
  Json rules = Json::array();
  for (const Rule& r : model.rules) rules.push_back(rule_to_json(r, names));
  j["rules"] = std::move(rules);
  return j;
}

inline RuleModel rule_model_from_json(const Json& j) {
  RuleModel model;
  model.task = task_from_string(j["task"].get<std::string>());
  model.anchors_tried = j["anchors_tried"].get<std::size_t>();
  model.anchors_without_explanation = j["anchors_without_explanation"].get<std::size_t>();
  model.anchors_failed = j["anchors_failed"].get<std::size_t>();
  for (const Json& rj : j["rules"]) model.rules.push_back(rule_from_json(rj));
  return model;
}

inline Json explanation_to_json(std::size_t instance_id, const InstanceExplanation& expl,
                                const Forest& forest, double pi) {
  Json j;
  j["instance_id"] = instance_id;
  j["pi"] = pi;
  if (forest.params.task == Task::kRegression) {
    j["prediction"] = expl.prediction.value;
    j["band"] = Json::array({expl.band.lo, expl.band.hi});
  } else {
    j["prediction"] = static_cast<int>(expl.prediction.value);
    j["class_probs"] = expl.prediction.class_probs;
  }
  j["preselected"] = expl.sets.preselected;
  auto subsets_json = [&](const std::vector<ScoredSubset>& coll) {
    Json arr = Json::array();
    for (const ScoredSubset& e : coll)
      arr.push_back(Json{{"features", e.subset.indices}, {"sdp", e.sdp}});
    return arr;
  };
  j["ase"] = subsets_json(expl.sets.ase);
  j["mse"] = subsets_json(expl.sets.mse);
  if (!expl.sets.ase.empty()) {
    j["lxi"] = lxi(expl.sets, forest.n_features(), LxiMode::kAse);
  } else if (expl.sets.has_fallback) {
    j["fallback"] = Json{{"features", expl.sets.best_fallback.subset.indices},
                         {"sdp", expl.sets.best_fallback.sdp}};
  }
  if (!expl.sets.warnings.empty()) j["warnings"] = expl.sets.warnings;
  return j;
}

}  // namespace pfx

#endif  // PFX_SERIALIZE_HPP
