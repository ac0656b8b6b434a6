#ifndef PFX_FOREST_HPP
#define PFX_FOREST_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pfx/common.hpp"
#include "pfx/dataset.hpp"

namespace pfx {

// Experiment recipe for the minimal bootstrap count per leaf as a function of
// the training size; clamped so tiny datasets still fit.
inline int default_min_samples_leaf(std::size_t n) {
  double v = std::floor(std::sqrt(static_cast<double>(n)) *
                        std::pow(std::log(static_cast<double>(n)), 1.5) / 250.0);
  return std::max(1, static_cast<int>(v));
}

struct ForestParams {
  int n_trees = 20;
  int min_samples_leaf = 0;  // 0 = default_min_samples_leaf(n)
  int mtry = 0;              // 0 = ceil(p/3) regression, ceil(sqrt(p)) classification
  int bootstrap_size = 0;    // 0 = n (standard bootstrap); otherwise 1..n
  std::uint64_t seed = 0;
  Task task = Task::kRegression;

  ForestParams resolved(std::size_t n, std::size_t p) const {
    ForestParams r = *this;
    if (r.min_samples_leaf == 0) r.min_samples_leaf = default_min_samples_leaf(n);
    if (r.mtry == 0)
      r.mtry = task == Task::kRegression
                   ? static_cast<int>((p + 2) / 3)
                   : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p))));
    if (r.bootstrap_size == 0) r.bootstrap_size = static_cast<int>(n);
    if (r.n_trees < 1) throw std::invalid_argument("forest: n_trees must be >= 1");
    if (r.min_samples_leaf < 1) throw std::invalid_argument("forest: min_samples_leaf must be >= 1");
    if (r.mtry < 1 || static_cast<std::size_t>(r.mtry) > p)
      throw std::invalid_argument("forest: mtry must be in [1, p]");
    if (r.bootstrap_size < 1 || static_cast<std::size_t>(r.bootstrap_size) > n)
      throw std::invalid_argument("forest: bootstrap_size must be in [1, n]");
    return r;
  }
};

struct TreeNode {
  int split_feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t samples_begin = 0;  // leaf: range into Tree::leaf_samples
  std::int32_t samples_end = 0;
  std::int64_t bootstrap_total = 0;

  bool is_leaf() const { return split_feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;                 // nodes[0] is the root
  std::vector<std::int32_t> leaf_samples;      // all training ids, grouped by leaf
  std::vector<std::uint32_t> bootstrap_counts; // length n, sums to bootstrap_size
  std::vector<std::pair<std::int32_t, std::uint32_t>> inbag;  // (id, count) for count > 0
  std::vector<std::uint64_t> subtree_features; // nodes x mask_words bitset of split features
  std::uint64_t rng_seed = 0;

  // Traversal acceleration (optional, built when the memory budget allows):
  // per-node bitmaps of "row satisfies the left branch" plus the bootstrap
  // counts decomposed into bit planes, so set filtering and bootstrap mass
  // counting run word-wise instead of row-wise.
  std::vector<std::uint64_t> node_left_bits;  // nodes x sample_words
  std::vector<std::uint64_t> count_planes;    // plane_count x sample_words
  int plane_count = 0;

  bool has_bitmaps() const { return !node_left_bits.empty(); }

  // Deterministic descent; the boundary value routes left.
  std::int32_t leaf_of(const std::vector<double>& x) const {
    std::int32_t id = 0;
    while (!nodes[static_cast<std::size_t>(id)].is_leaf()) {
      const TreeNode& nd = nodes[static_cast<std::size_t>(id)];
      id = x[static_cast<std::size_t>(nd.split_feature)] <= nd.threshold ? nd.left : nd.right;
    }
    return id;
  }

  bool subtree_splits_any(std::int32_t node, const std::uint64_t* mask, int words) const {
    const std::uint64_t* row = subtree_features.data() + static_cast<std::size_t>(node) * words;
    for (int w = 0; w < words; ++w)
      if (row[w] & mask[w]) return true;
    return false;
  }
};

struct Forest {
  std::vector<Tree> trees;
  ForestParams params;  // resolved values
  Dataset training_data;
  int mask_words = 1;    // words per feature bitmask
  int sample_words = 1;  // words per training-row bitmap
  std::vector<std::vector<std::uint64_t>> class_bits;  // per-label row bitmaps

  std::size_t n_rows() const { return training_data.n_rows(); }
  std::size_t n_features() const { return training_data.n_features(); }
  int n_classes() const { return training_data.n_classes(); }
};

namespace detail {

inline constexpr std::size_t kBitmapBudgetBytes = 512ull << 20;

inline void build_tree_bitmaps(Tree& tree, const Dataset& data) {
  const std::size_t n = data.n_rows();
  const std::size_t words = (n + 63) / 64;
  tree.node_left_bits.assign(tree.nodes.size() * words, 0);
  for (std::size_t v = 0; v < tree.nodes.size(); ++v) {
    const TreeNode& nd = tree.nodes[v];
    if (nd.is_leaf()) continue;
    const std::vector<double>& col = data.columns[static_cast<std::size_t>(nd.split_feature)];
    std::uint64_t* row = tree.node_left_bits.data() + v * words;
    for (std::size_t i = 0; i < n; ++i)
      if (col[i] <= nd.threshold) row[i / 64] |= 1ULL << (i % 64);
  }
  std::uint32_t max_count = 0;
  for (std::uint32_t c : tree.bootstrap_counts) max_count = std::max(max_count, c);
  tree.plane_count = 0;
  while ((1u << tree.plane_count) <= max_count) ++tree.plane_count;
  tree.count_planes.assign(static_cast<std::size_t>(tree.plane_count) * words, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t c = tree.bootstrap_counts[i];
    for (int b = 0; b < tree.plane_count; ++b)
      if ((c >> b) & 1u) tree.count_planes[static_cast<std::size_t>(b) * words + i / 64] |= 1ULL << (i % 64);
  }
}

// Fills the derived query-side indexes; shared by fit_forest and the test
// fixtures that assemble forests by hand.
inline void finalize_forest_index(Forest& forest) {
  const std::size_t n = forest.n_rows();
  forest.sample_words = static_cast<int>((n + 63) / 64);
  forest.mask_words = static_cast<int>((forest.n_features() + 63) / 64);

  std::size_t total_nodes = 0;
  for (const Tree& t : forest.trees) total_nodes += t.nodes.size();
  const std::size_t bytes = total_nodes * static_cast<std::size_t>(forest.sample_words) * 8;
  if (bytes <= kBitmapBudgetBytes) {
    parallel_for(forest.trees.size(), [&](std::size_t l) {
      build_tree_bitmaps(forest.trees[l], forest.training_data);
    });
  }

  forest.class_bits.clear();
  if (forest.params.task == Task::kClassification) {
    const int nc = forest.n_classes();
    forest.class_bits.assign(static_cast<std::size_t>(nc),
                             std::vector<std::uint64_t>(static_cast<std::size_t>(forest.sample_words), 0));
    for (std::size_t i = 0; i < n; ++i) {
      const int c = static_cast<int>(forest.training_data.targets[i]);
      forest.class_bits[static_cast<std::size_t>(c)][i / 64] |= 1ULL << (i % 64);
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// CART growth
// ---------------------------------------------------------------------------

namespace detail {

struct GrowContext {
  const Dataset* data;
  ForestParams params;
  std::vector<std::uint32_t> counts;       // bootstrap counts, length n
  std::vector<std::int32_t> ids;           // bootstrap-positive ids, partitioned per node
  std::vector<int> feature_pool;           // for mtry draws
  std::vector<double> vals;                // scratch: sorted feature values
  std::vector<double> wts;                 // scratch: weights aligned with vals
  std::vector<double> tgts;                // scratch: targets aligned with vals
  std::vector<std::int32_t> order;         // scratch: sort permutation
  int n_classes = 0;
};

struct BestSplit {
  double score = -std::numeric_limits<double>::infinity();
  int feature = -1;
  double threshold = 0.0;
};

// Score to maximize: sum over children of (weighted target sum)^2 / weight for
// regression (equivalent to variance reduction) and sum_c count_c^2 / weight
// for classification (equivalent to Gini decrease).
inline void scan_feature_splits(GrowContext& ctx, int feature, std::int32_t begin,
                                std::int32_t end, double min_leaf, BestSplit& best) {
  const std::size_t m = static_cast<std::size_t>(end - begin);
  const std::vector<double>& col = ctx.data->columns[static_cast<std::size_t>(feature)];
  ctx.order.resize(m);
  for (std::size_t k = 0; k < m; ++k) ctx.order[k] = ctx.ids[static_cast<std::size_t>(begin) + k];
  std::sort(ctx.order.begin(), ctx.order.end(),
            [&col](std::int32_t a, std::int32_t b) { return col[static_cast<std::size_t>(a)] < col[static_cast<std::size_t>(b)]; });

  if (ctx.params.task == Task::kRegression) {
    double total_w = 0.0, total_s = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const std::int32_t i = ctx.order[k];
      const double w = ctx.counts[static_cast<std::size_t>(i)];
      total_w += w;
      total_s += w * ctx.data->targets[static_cast<std::size_t>(i)];
    }
    double left_w = 0.0, left_s = 0.0;
    for (std::size_t k = 0; k + 1 < m; ++k) {
      const std::int32_t i = ctx.order[k];
      const double w = ctx.counts[static_cast<std::size_t>(i)];
      left_w += w;
      left_s += w * ctx.data->targets[static_cast<std::size_t>(i)];
      const double v = col[static_cast<std::size_t>(i)];
      const double vnext = col[static_cast<std::size_t>(ctx.order[k + 1])];
      if (v == vnext) continue;
      const double right_w = total_w - left_w;
      if (left_w < min_leaf || right_w < min_leaf) continue;
      const double right_s = total_s - left_s;
      const double score = left_s * left_s / left_w + right_s * right_s / right_w;
      if (score > best.score) {
        best.score = score;
        best.feature = feature;
        best.threshold = v + 0.5 * (vnext - v);
      }
    }
  } else {
    const int nc = ctx.n_classes;
    static thread_local std::vector<double> left_counts, total_counts;
    left_counts.assign(static_cast<std::size_t>(nc), 0.0);
    total_counts.assign(static_cast<std::size_t>(nc), 0.0);
    double total_w = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const std::int32_t i = ctx.order[k];
      const double w = ctx.counts[static_cast<std::size_t>(i)];
      total_w += w;
      total_counts[static_cast<std::size_t>(ctx.data->targets[static_cast<std::size_t>(i)])] += w;
    }
    double left_w = 0.0;
    for (std::size_t k = 0; k + 1 < m; ++k) {
      const std::int32_t i = ctx.order[k];
      const double w = ctx.counts[static_cast<std::size_t>(i)];
      left_w += w;
      left_counts[static_cast<std::size_t>(ctx.data->targets[static_cast<std::size_t>(i)])] += w;
      const double v = col[static_cast<std::size_t>(i)];
      const double vnext = col[static_cast<std::size_t>(ctx.order[k + 1])];
      if (v == vnext) continue;
      const double right_w = total_w - left_w;
      if (left_w < min_leaf || right_w < min_leaf) continue;
      double score = 0.0;
      for (int c = 0; c < nc; ++c) {
        const double lc = left_counts[static_cast<std::size_t>(c)];
        const double rc = total_counts[static_cast<std::size_t>(c)] - lc;
        score += lc * lc / left_w + rc * rc / right_w;
      }
      if (score > best.score) {
        best.score = score;
        best.feature = feature;
        best.threshold = v + 0.5 * (vnext - v);
      }
    }
  }
}

inline bool node_is_pure(const GrowContext& ctx, std::int32_t begin, std::int32_t end) {
  const double first = ctx.data->targets[static_cast<std::size_t>(ctx.ids[static_cast<std::size_t>(begin)])];
  for (std::int32_t k = begin + 1; k < end; ++k)
    if (ctx.data->targets[static_cast<std::size_t>(ctx.ids[static_cast<std::size_t>(k)])] != first) return false;
  return true;
}

inline Tree grow_tree(const Dataset& data, const ForestParams& params, std::uint64_t tree_seed) {
  const std::size_t n = data.n_rows();
  const std::size_t p = data.n_features();
  Rng rng(tree_seed);

  Tree tree;
  tree.rng_seed = tree_seed;
  tree.bootstrap_counts.assign(n, 0);
  for (int d = 0; d < params.bootstrap_size; ++d)
    ++tree.bootstrap_counts[static_cast<std::size_t>(rng.bounded(n))];

  GrowContext ctx;
  ctx.data = &data;
  ctx.params = params;
  ctx.counts = tree.bootstrap_counts;
  ctx.n_classes = data.n_classes();
  ctx.feature_pool.resize(p);
  std::iota(ctx.feature_pool.begin(), ctx.feature_pool.end(), 0);
  for (std::size_t i = 0; i < n; ++i)
    if (ctx.counts[i] > 0) ctx.ids.push_back(static_cast<std::int32_t>(i));

  struct PendingNode {
    std::int32_t node_id;
    std::int32_t begin;
    std::int32_t end;
  };
  std::vector<PendingNode> stack;
  tree.nodes.emplace_back();
  stack.push_back({0, 0, static_cast<std::int32_t>(ctx.ids.size())});

  std::vector<int> candidates(static_cast<std::size_t>(params.mtry));
  const double min_leaf = static_cast<double>(params.min_samples_leaf);

  while (!stack.empty()) {
    PendingNode cur = stack.back();
    stack.pop_back();
    std::int64_t boot_total = 0;
    for (std::int32_t k = cur.begin; k < cur.end; ++k)
      boot_total += ctx.counts[static_cast<std::size_t>(ctx.ids[static_cast<std::size_t>(k)])];

    BestSplit best;
    if (boot_total >= 2 * params.min_samples_leaf && !node_is_pure(ctx, cur.begin, cur.end)) {
      // mtry features without replacement, evaluated in ascending order so
      // criterion ties resolve to the lowest feature index, then the scan
      // order within a feature resolves to the lowest threshold.
      for (int d = 0; d < params.mtry; ++d) {
        const std::size_t j = static_cast<std::size_t>(d) + static_cast<std::size_t>(rng.bounded(p - static_cast<std::size_t>(d)));
        std::swap(ctx.feature_pool[static_cast<std::size_t>(d)], ctx.feature_pool[j]);
        candidates[static_cast<std::size_t>(d)] = ctx.feature_pool[static_cast<std::size_t>(d)];
      }
      std::sort(candidates.begin(), candidates.end());
      for (int f : candidates) scan_feature_splits(ctx, f, cur.begin, cur.end, min_leaf, best);
    }

    TreeNode& nd = tree.nodes[static_cast<std::size_t>(cur.node_id)];
    nd.bootstrap_total = boot_total;
    if (best.feature < 0) {
      nd.split_feature = -1;  // leaf; sample ranges are filled by the routing pass
      continue;
    }
    nd.split_feature = best.feature;
    nd.threshold = best.threshold;
    const std::vector<double>& col = data.columns[static_cast<std::size_t>(best.feature)];
    auto mid_it = std::partition(ctx.ids.begin() + cur.begin, ctx.ids.begin() + cur.end,
                                 [&](std::int32_t i) { return col[static_cast<std::size_t>(i)] <= best.threshold; });
    const std::int32_t mid = static_cast<std::int32_t>(mid_it - ctx.ids.begin());
    const std::int32_t left_id = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    const std::int32_t right_id = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[static_cast<std::size_t>(cur.node_id)].left = left_id;
    tree.nodes[static_cast<std::size_t>(cur.node_id)].right = right_id;
    // Left is pushed last so it is grown first; node ids are deterministic.
    stack.push_back({right_id, mid, cur.end});
    stack.push_back({left_id, cur.begin, mid});
  }

  // Route every training row (in-bag or not) to its leaf.
  std::vector<std::vector<std::int32_t>> leaf_members(tree.nodes.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::int32_t id = 0;
    while (!tree.nodes[static_cast<std::size_t>(id)].is_leaf()) {
      const TreeNode& s = tree.nodes[static_cast<std::size_t>(id)];
      id = data.columns[static_cast<std::size_t>(s.split_feature)][i] <= s.threshold ? s.left : s.right;
    }
    leaf_members[static_cast<std::size_t>(id)].push_back(static_cast<std::int32_t>(i));
  }
  tree.leaf_samples.reserve(n);
  for (std::size_t v = 0; v < tree.nodes.size(); ++v) {
    if (!tree.nodes[v].is_leaf()) continue;
    tree.nodes[v].samples_begin = static_cast<std::int32_t>(tree.leaf_samples.size());
    for (std::int32_t i : leaf_members[v]) tree.leaf_samples.push_back(i);
    tree.nodes[v].samples_end = static_cast<std::int32_t>(tree.leaf_samples.size());
    std::int64_t check = 0;
    for (std::int32_t i : leaf_members[v]) check += tree.bootstrap_counts[static_cast<std::size_t>(i)];
    if (check != tree.nodes[v].bootstrap_total)
      throw std::logic_error("forest: leaf bootstrap accounting mismatch");
  }

  for (std::size_t i = 0; i < n; ++i)
    if (tree.bootstrap_counts[i] > 0)
      tree.inbag.emplace_back(static_cast<std::int32_t>(i), tree.bootstrap_counts[i]);

  // Bottom-up subtree feature masks (children have larger ids than parents
  // is NOT guaranteed by the growth order, so walk ids in reverse after a
  // topological fact: children are always appended after their parent).
  const int words = static_cast<int>((p + 63) / 64);
  tree.subtree_features.assign(tree.nodes.size() * static_cast<std::size_t>(words), 0);
  for (std::size_t v = tree.nodes.size(); v-- > 0;) {
    const TreeNode& nd = tree.nodes[v];
    if (nd.is_leaf()) continue;
    std::uint64_t* row = tree.subtree_features.data() + v * static_cast<std::size_t>(words);
    row[nd.split_feature / 64] |= 1ULL << (nd.split_feature % 64);
    const std::uint64_t* lrow = tree.subtree_features.data() + static_cast<std::size_t>(nd.left) * words;
    const std::uint64_t* rrow = tree.subtree_features.data() + static_cast<std::size_t>(nd.right) * words;
    for (int w = 0; w < words; ++w) row[w] |= lrow[w] | rrow[w];
  }
  return tree;
}

}  // namespace detail

inline Forest fit_forest(const Dataset& data, const ForestParams& params) {
  data.validate();
  Forest forest;
  forest.params = params.resolved(data.n_rows(), data.n_features());
  forest.params.task = data.task;
  forest.training_data = data;
  forest.mask_words = static_cast<int>((data.n_features() + 63) / 64);
  forest.trees.resize(static_cast<std::size_t>(forest.params.n_trees));
  Rng master(forest.params.seed);
  std::vector<std::uint64_t> tree_seeds(forest.trees.size());
  for (std::size_t l = 0; l < tree_seeds.size(); ++l)
    tree_seeds[l] = master.derive(l).next_u64();
  parallel_for(forest.trees.size(), [&](std::size_t l) {
    forest.trees[l] = detail::grow_tree(data, forest.params, tree_seeds[l]);
  });
  detail::finalize_forest_index(forest);
  return forest;
}

// ---------------------------------------------------------------------------
// Queries
// ---------------------------------------------------------------------------

inline std::int32_t tree_leaf(const Tree& tree, const std::vector<double>& x) {
  return tree.leaf_of(x);
}

// Adaptive-neighborhood weights: w_i = sum_l B_l(i) 1{i in leaf_l(x)} / (k N_l).
inline std::vector<double> forest_weights(const Forest& forest, const std::vector<double>& x) {
  std::vector<double> w(forest.n_rows(), 0.0);
  const double k = static_cast<double>(forest.trees.size());
  for (const Tree& tree : forest.trees) {
    const TreeNode& leaf = tree.nodes[static_cast<std::size_t>(tree.leaf_of(x))];
    if (leaf.bootstrap_total <= 0) throw std::logic_error("forest: leaf with zero bootstrap mass");
    const double denom = k * static_cast<double>(leaf.bootstrap_total);
    for (std::int32_t s = leaf.samples_begin; s < leaf.samples_end; ++s) {
      const std::int32_t i = tree.leaf_samples[static_cast<std::size_t>(s)];
      const std::uint32_t b = tree.bootstrap_counts[static_cast<std::size_t>(i)];
      if (b) w[static_cast<std::size_t>(i)] += static_cast<double>(b) / denom;
    }
  }
  return w;
}

struct Prediction {
  double value = 0.0;                  // regression mean or class label
  std::vector<double> class_probs;     // classification only
};

inline Prediction predict(const Forest& forest, const std::vector<double>& x) {
  Prediction out;
  const double k = static_cast<double>(forest.trees.size());
  if (forest.params.task == Task::kRegression) {
    double acc = 0.0;
    for (const Tree& tree : forest.trees) {
      const TreeNode& leaf = tree.nodes[static_cast<std::size_t>(tree.leaf_of(x))];
      if (leaf.bootstrap_total <= 0) throw std::logic_error("forest: leaf with zero bootstrap mass");
      const double denom = k * static_cast<double>(leaf.bootstrap_total);
      for (std::int32_t s = leaf.samples_begin; s < leaf.samples_end; ++s) {
        const std::int32_t i = tree.leaf_samples[static_cast<std::size_t>(s)];
        const std::uint32_t b = tree.bootstrap_counts[static_cast<std::size_t>(i)];
        if (b) acc += static_cast<double>(b) / denom * forest.training_data.targets[static_cast<std::size_t>(i)];
      }
    }
    out.value = acc;
    return out;
  }
  const int nc = forest.n_classes();
  out.class_probs.assign(static_cast<std::size_t>(nc), 0.0);
  for (const Tree& tree : forest.trees) {
    const TreeNode& leaf = tree.nodes[static_cast<std::size_t>(tree.leaf_of(x))];
    if (leaf.bootstrap_total <= 0) throw std::logic_error("forest: leaf with zero bootstrap mass");
    const double denom = k * static_cast<double>(leaf.bootstrap_total);
    for (std::int32_t s = leaf.samples_begin; s < leaf.samples_end; ++s) {
      const std::int32_t i = tree.leaf_samples[static_cast<std::size_t>(s)];
      const std::uint32_t b = tree.bootstrap_counts[static_cast<std::size_t>(i)];
      if (b)
        out.class_probs[static_cast<std::size_t>(forest.training_data.targets[static_cast<std::size_t>(i)])] +=
            static_cast<double>(b) / denom;
    }
  }
  int best = 0;
  for (int c = 1; c < nc; ++c)
    if (out.class_probs[static_cast<std::size_t>(c)] > out.class_probs[static_cast<std::size_t>(best)]) best = c;
  out.value = static_cast<double>(best);
  return out;
}

inline std::vector<std::int64_t> split_frequency(const Forest& forest) {
  std::vector<std::int64_t> counts(forest.n_features(), 0);
  for (const Tree& tree : forest.trees)
    for (const TreeNode& nd : tree.nodes)
      if (!nd.is_leaf()) ++counts[static_cast<std::size_t>(nd.split_feature)];
  return counts;
}

}  // namespace pfx

#endif  // PFX_FOREST_HPP
