#ifndef PFX_PROJECTED_HPP
#define PFX_PROJECTED_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "pfx/forest.hpp"

namespace pfx {

// Coordinate subset. Empty means "condition on nothing".
struct SubsetS {
  std::vector<int> indices;  // sorted, unique

  static SubsetS of(std::vector<int> idx) {
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    if (!idx.empty() && idx.front() < 0) throw std::invalid_argument("subset: negative feature index");
    return SubsetS{std::move(idx)};
  }
  static SubsetS all(std::size_t p) {
    std::vector<int> idx(p);
    for (std::size_t j = 0; j < p; ++j) idx[j] = static_cast<int>(j);
    return SubsetS{std::move(idx)};
  }
  bool empty() const { return indices.empty(); }
  std::size_t size() const { return indices.size(); }
  bool contains(int f) const { return std::binary_search(indices.begin(), indices.end(), f); }
};

// Half-open interval (lo, hi], matching the "boundary routes left" split rule.
struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  bool contains(double v) const { return v > lo && v <= hi; }
  bool operator==(const Interval& o) const { return lo == o.lo && hi == o.hi; }
};

// Result of a projected traversal: the training samples compatible with x_S
// and the axis-aligned box (over S dimensions) carved out by the retained
// splits. For intersection cells across trees, bootstrap_total holds the raw
// intersected sample count since bootstrap draws are per-tree quantities.
struct ProjectedCell {
  std::vector<std::int32_t> sample_ids;  // ascending
  std::vector<Interval> box;             // aligned with SubsetS::indices
  std::int64_t bootstrap_total = 0;
  bool frozen = false;             // some refinement stopped at min_node_size
  bool empty_intersection = false; // intersection_cell only
};

struct ProjectedWeights {
  std::vector<double> weights;  // length n, nonnegative, sums to 1
};

namespace detail {

// ---------------------------------------------------------------------------
// Shared-list level-order traversal of one tree (the projected-forest walk):
// splits on S filter the list and tighten the box on the side containing x_S,
// splits off S fan out to both children. A filter that would push the
// bootstrap mass of the list under min_node_size freezes that node instead of
// descending. Processing order is levels first, left to right, so the result
// is deterministic. Subtrees that contain no split on S cannot contribute
// constraints and are skipped wholesale via the per-node feature masks.
//
// The surviving set lives either as a row bitmap (cheap word-wise filtering
// while the set is large) or as an explicit id list once it has shrunk.
// ---------------------------------------------------------------------------

struct TraversalScratch {
  std::vector<std::uint64_t> smask;  // feature bitmask of S
  std::vector<int> dim_of;           // p -> dim index within S, or -1
  std::vector<int> touched;
  std::size_t prepared_p = 0;

  std::vector<std::uint64_t> cur_bits, tmp_bits;
  std::vector<std::int32_t> list, filtered;
  std::vector<std::int32_t> frontier, next_frontier;

  void prepare(std::size_t p, int mask_words, const SubsetS& s) {
    smask.assign(static_cast<std::size_t>(mask_words), 0);
    if (prepared_p != p) {
      dim_of.assign(p, -1);
      touched.clear();
    } else {
      for (int f : touched) dim_of[static_cast<std::size_t>(f)] = -1;
      touched.clear();
    }
    for (std::size_t d = 0; d < s.indices.size(); ++d) {
      const int f = s.indices[d];
      if (static_cast<std::size_t>(f) >= p) throw std::invalid_argument("subset: feature index out of range");
      smask[static_cast<std::size_t>(f) / 64] |= 1ULL << (f % 64);
      dim_of[static_cast<std::size_t>(f)] = static_cast<int>(d);
      touched.push_back(f);
    }
    prepared_p = p;
  }
};

inline TraversalScratch& traversal_scratch() {
  static thread_local TraversalScratch scratch;
  return scratch;
}

struct TreeCellView {
  enum class Mode { kAll, kBits, kIds };
  Mode mode = Mode::kAll;
  const std::uint64_t* bits = nullptr;  // Mode::kBits
  const std::int32_t* ids = nullptr;    // Mode::kIds, ascending
  std::size_t count = 0;                // ids (kIds) or set bits (kBits)
  std::int64_t boot_total = 0;
  bool frozen = false;
};

inline std::uint64_t tail_mask_for(std::size_t n) {
  return (n % 64 == 0) ? ~0ULL : ((1ULL << (n % 64)) - 1);
}

// Popcount plus bit-plane-weighted bootstrap mass of a candidate bitmap.
inline void bits_pop_and_boot(const std::uint64_t* bits, const Tree& tree, std::size_t words,
                              std::size_t& pop, std::int64_t& boot) {
  pop = 0;
  boot = 0;
  const std::uint64_t* planes = tree.count_planes.data();
  for (std::size_t w = 0; w < words; ++w) {
    const std::uint64_t t = bits[w];
    if (!t) continue;
    pop += static_cast<std::size_t>(__builtin_popcountll(t));
    for (int b = 0; b < tree.plane_count; ++b)
      boot += static_cast<std::int64_t>(
                  __builtin_popcountll(t & planes[static_cast<std::size_t>(b) * words + w]))
              << b;
  }
}

template <typename BoxFn>
inline TreeCellView traverse_tree_cell(const Forest& forest, const Tree& tree,
                                       const std::vector<double>& x, const SubsetS& s,
                                       int min_node_size, TraversalScratch& sc, BoxFn&& on_box) {
  const Dataset& data = forest.training_data;
  const std::size_t n = data.n_rows();
  const std::size_t words = static_cast<std::size_t>(forest.sample_words);
  const int mask_words = forest.mask_words;
  const bool use_bits = tree.has_bitmaps();
  const std::size_t switch_threshold = std::max<std::size_t>(64, 4 * words);
  const std::uint64_t tail = tail_mask_for(n);

  TreeCellView view;
  view.boot_total = static_cast<std::int64_t>(forest.params.bootstrap_size);

  if (s.empty() || tree.nodes[0].is_leaf() || !tree.subtree_splits_any(0, sc.smask.data(), mask_words))
    return view;

  sc.cur_bits.resize(words);
  sc.tmp_bits.resize(words);
  sc.frontier.clear();
  sc.frontier.push_back(0);

  while (!sc.frontier.empty()) {
    sc.next_frontier.clear();
    for (std::int32_t node : sc.frontier) {
      const TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
      const int f = nd.split_feature;
      const int dim = sc.dim_of[static_cast<std::size_t>(f)];
      if (dim < 0) {
        // Split off S: the observation goes both ways.
        const TreeNode& ln = tree.nodes[static_cast<std::size_t>(nd.left)];
        const TreeNode& rn = tree.nodes[static_cast<std::size_t>(nd.right)];
        if (!ln.is_leaf() && tree.subtree_splits_any(nd.left, sc.smask.data(), mask_words))
          sc.next_frontier.push_back(nd.left);
        if (!rn.is_leaf() && tree.subtree_splits_any(nd.right, sc.smask.data(), mask_words))
          sc.next_frontier.push_back(nd.right);
        continue;
      }

      const bool go_left = x[static_cast<std::size_t>(f)] <= nd.threshold;
      std::int64_t boot = 0;
      std::size_t pop = 0;

      if (view.mode == TreeCellView::Mode::kIds ||
          (view.mode == TreeCellView::Mode::kAll && !use_bits)) {
        const std::vector<double>& col = data.columns[static_cast<std::size_t>(f)];
        const double thr = nd.threshold;
        sc.filtered.clear();
        if (view.mode == TreeCellView::Mode::kAll) {
          for (std::size_t i = 0; i < n; ++i) {
            const bool keep = go_left ? (col[i] <= thr) : (col[i] > thr);
            if (keep) {
              sc.filtered.push_back(static_cast<std::int32_t>(i));
              boot += tree.bootstrap_counts[i];
            }
          }
        } else {
          for (std::int32_t i : sc.list) {
            const bool keep = go_left ? (col[static_cast<std::size_t>(i)] <= thr)
                                      : (col[static_cast<std::size_t>(i)] > thr);
            if (keep) {
              sc.filtered.push_back(i);
              boot += tree.bootstrap_counts[static_cast<std::size_t>(i)];
            }
          }
        }
        if (boot < min_node_size) {
          view.frozen = true;
          continue;
        }
        std::swap(sc.list, sc.filtered);
        view.mode = TreeCellView::Mode::kIds;
        view.boot_total = boot;
      } else {
        // Word-wise filtering against the node's precomputed left bitmap.
        const std::uint64_t* bm =
            tree.node_left_bits.data() + static_cast<std::size_t>(node) * words;
        if (view.mode == TreeCellView::Mode::kAll) {
          if (go_left) {
            for (std::size_t w = 0; w < words; ++w) sc.tmp_bits[w] = bm[w];
          } else {
            for (std::size_t w = 0; w < words; ++w) sc.tmp_bits[w] = ~bm[w];
            sc.tmp_bits[words - 1] &= tail;
          }
        } else {
          if (go_left) {
            for (std::size_t w = 0; w < words; ++w) sc.tmp_bits[w] = sc.cur_bits[w] & bm[w];
          } else {
            for (std::size_t w = 0; w < words; ++w) sc.tmp_bits[w] = sc.cur_bits[w] & ~bm[w];
          }
        }
        bits_pop_and_boot(sc.tmp_bits.data(), tree, words, pop, boot);
        if (boot < min_node_size) {
          view.frozen = true;
          continue;
        }
        std::swap(sc.cur_bits, sc.tmp_bits);
        view.boot_total = boot;
        if (pop <= switch_threshold) {
          sc.list.clear();
          for (std::size_t w = 0; w < words; ++w) {
            std::uint64_t t = sc.cur_bits[w];
            while (t) {
              sc.list.push_back(static_cast<std::int32_t>(w * 64 +
                                                          static_cast<std::size_t>(__builtin_ctzll(t))));
              t &= t - 1;
            }
          }
          view.mode = TreeCellView::Mode::kIds;
        } else {
          view.mode = TreeCellView::Mode::kBits;
        }
      }

      on_box(dim, go_left, nd.threshold);
      const std::int32_t child = go_left ? nd.left : nd.right;
      const TreeNode& cn = tree.nodes[static_cast<std::size_t>(child)];
      if (!cn.is_leaf() && tree.subtree_splits_any(child, sc.smask.data(), mask_words))
        sc.next_frontier.push_back(child);
    }
    std::swap(sc.frontier, sc.next_frontier);
  }

  if (view.mode == TreeCellView::Mode::kBits) {
    view.bits = sc.cur_bits.data();
    std::size_t pop;
    std::int64_t boot;
    bits_pop_and_boot(sc.cur_bits.data(), tree, words, pop, boot);
    view.count = pop;
  } else if (view.mode == TreeCellView::Mode::kIds) {
    view.ids = sc.list.data();
    view.count = sc.list.size();
  }
  return view;
}

// Iterate (sample id, bootstrap count > 0) over a cell view, ascending by id.
template <typename Fn>
inline void for_each_cell_sample(const Tree& tree, const TreeCellView& view, std::size_t words,
                                 Fn&& fn) {
  switch (view.mode) {
    case TreeCellView::Mode::kAll:
      for (const auto& [i, b] : tree.inbag) fn(i, b);
      break;
    case TreeCellView::Mode::kIds:
      for (std::size_t t = 0; t < view.count; ++t) {
        const std::int32_t i = view.ids[t];
        const std::uint32_t b = tree.bootstrap_counts[static_cast<std::size_t>(i)];
        if (b) fn(i, b);
      }
      break;
    case TreeCellView::Mode::kBits:
      for (std::size_t w = 0; w < words; ++w) {
        std::uint64_t t = view.bits[w];
        while (t) {
          const auto i = static_cast<std::int32_t>(w * 64 + static_cast<std::size_t>(__builtin_ctzll(t)));
          t &= t - 1;
          const std::uint32_t b = tree.bootstrap_counts[static_cast<std::size_t>(i)];
          if (b) fn(i, b);
        }
      }
      break;
  }
}

// Bootstrap mass of cell members whose row bit is set in `marks`.
inline std::int64_t cell_marked_boot(const Tree& tree, const TreeCellView& view,
                                     const std::uint64_t* marks, std::size_t words) {
  std::int64_t boot = 0;
  const std::uint64_t* planes = tree.count_planes.data();
  switch (view.mode) {
    case TreeCellView::Mode::kAll:
      if (tree.has_bitmaps()) {
        for (std::size_t w = 0; w < words; ++w) {
          const std::uint64_t t = marks[w];
          if (!t) continue;
          for (int b = 0; b < tree.plane_count; ++b)
            boot += static_cast<std::int64_t>(
                        __builtin_popcountll(t & planes[static_cast<std::size_t>(b) * words + w]))
                    << b;
        }
      } else {
        for (const auto& [i, b] : tree.inbag)
          if (marks[static_cast<std::size_t>(i) / 64] >> (static_cast<std::size_t>(i) % 64) & 1ULL)
            boot += b;
      }
      break;
    case TreeCellView::Mode::kIds:
      for (std::size_t t = 0; t < view.count; ++t) {
        const std::int32_t i = view.ids[t];
        if (marks[static_cast<std::size_t>(i) / 64] >> (static_cast<std::size_t>(i) % 64) & 1ULL)
          boot += tree.bootstrap_counts[static_cast<std::size_t>(i)];
      }
      break;
    case TreeCellView::Mode::kBits:
      for (std::size_t w = 0; w < words; ++w) {
        const std::uint64_t t = view.bits[w] & marks[w];
        if (!t) continue;
        for (int b = 0; b < tree.plane_count; ++b)
          boot += static_cast<std::int64_t>(
                      __builtin_popcountll(t & planes[static_cast<std::size_t>(b) * words + w]))
                  << b;
      }
      break;
  }
  return boot;
}

inline int resolve_min_node_size(const Forest& forest, int min_node_size) {
  if (min_node_size == 0) return forest.params.min_samples_leaf;
  if (min_node_size < 1) throw std::invalid_argument("projected: min_node_size must be >= 1");
  return min_node_size;
}

// Row bitmap of {i : lo <= Y_i <= hi}, cached per (forest targets, band).
inline const std::vector<std::uint64_t>& interval_row_mask(const Forest& forest, double lo,
                                                           double hi) {
  struct Cache {
    const void* data_key = nullptr;
    double lo = 0.0, hi = 0.0;
    std::vector<std::uint64_t> bits;
  };
  static thread_local Cache cache;
  const std::vector<double>& y = forest.training_data.targets;
  if (cache.data_key == static_cast<const void*>(y.data()) && cache.lo == lo && cache.hi == hi &&
      cache.bits.size() == static_cast<std::size_t>(forest.sample_words))
    return cache.bits;
  cache.data_key = y.data();
  cache.lo = lo;
  cache.hi = hi;
  cache.bits.assign(static_cast<std::size_t>(forest.sample_words), 0);
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] >= lo && y[i] <= hi) cache.bits[i / 64] |= 1ULL << (i % 64);
  return cache.bits;
}

// Weighted projected mass of {lo <= Y <= hi}: the workhorse behind the SDP
// and the projected CDF.
inline double projected_interval_mass(const Forest& forest, const std::vector<double>& x,
                                      const SubsetS& s, int min_node_size, double lo, double hi) {
  const int mns = resolve_min_node_size(forest, min_node_size);
  auto& sc = traversal_scratch();
  sc.prepare(forest.n_features(), forest.mask_words, s);
  const std::size_t words = static_cast<std::size_t>(forest.sample_words);
  const std::vector<double>& y = forest.training_data.targets;
  const double k = static_cast<double>(forest.trees.size());
  const bool bitmapped = !forest.trees.empty() && forest.trees.front().has_bitmaps();
  const std::uint64_t* marks = bitmapped ? interval_row_mask(forest, lo, hi).data() : nullptr;

  double mass = 0.0;
  for (const Tree& tree : forest.trees) {
    auto view = traverse_tree_cell(forest, tree, x, s, mns, sc, [](int, bool, double) {});
    if (view.boot_total <= 0) throw std::logic_error("projected: cell with zero bootstrap mass");
    std::int64_t in_band = 0;
    if (view.mode == TreeCellView::Mode::kIds || marks == nullptr) {
      for_each_cell_sample(tree, view, words, [&](std::int32_t i, std::uint32_t b) {
        const double t = y[static_cast<std::size_t>(i)];
        if (t >= lo && t <= hi) in_band += b;
      });
    } else {
      in_band = cell_marked_boot(tree, view, marks, words);
    }
    mass += static_cast<double>(in_band) / (k * static_cast<double>(view.boot_total));
  }
  return mass;
}

inline double projected_label_mass(const Forest& forest, const std::vector<double>& x,
                                   const SubsetS& s, int min_node_size, int label) {
  const int mns = resolve_min_node_size(forest, min_node_size);
  auto& sc = traversal_scratch();
  sc.prepare(forest.n_features(), forest.mask_words, s);
  const std::size_t words = static_cast<std::size_t>(forest.sample_words);
  const std::vector<double>& y = forest.training_data.targets;
  const double k = static_cast<double>(forest.trees.size());
  const double target = static_cast<double>(label);
  const std::uint64_t* marks = forest.class_bits.empty()
                                   ? nullptr
                                   : forest.class_bits[static_cast<std::size_t>(label)].data();

  double mass = 0.0;
  for (const Tree& tree : forest.trees) {
    auto view = traverse_tree_cell(forest, tree, x, s, mns, sc, [](int, bool, double) {});
    if (view.boot_total <= 0) throw std::logic_error("projected: cell with zero bootstrap mass");
    std::int64_t in_class = 0;
    if (view.mode == TreeCellView::Mode::kIds || marks == nullptr || !tree.has_bitmaps()) {
      for_each_cell_sample(tree, view, words, [&](std::int32_t i, std::uint32_t b) {
        if (y[static_cast<std::size_t>(i)] == target) in_class += b;
      });
    } else {
      in_class = cell_marked_boot(tree, view, marks, words);
    }
    mass += static_cast<double>(in_class) / (k * static_cast<double>(view.boot_total));
  }
  return mass;
}

}  // namespace detail

// Projected traversal of a single tree.
inline ProjectedCell projected_traverse(const Forest& forest, std::size_t tree_index,
                                        const std::vector<double>& x, const SubsetS& s,
                                        int min_node_size = 0) {
  const int mns = detail::resolve_min_node_size(forest, min_node_size);
  auto& sc = detail::traversal_scratch();
  sc.prepare(forest.n_features(), forest.mask_words, s);

  ProjectedCell cell;
  cell.box.assign(s.size(), Interval{});
  auto view = detail::traverse_tree_cell(
      forest, forest.trees[tree_index], x, s, mns, sc, [&](int dim, bool left, double thr) {
        Interval& iv = cell.box[static_cast<std::size_t>(dim)];
        if (left)
          iv.hi = std::min(iv.hi, thr);
        else
          iv.lo = std::max(iv.lo, thr);
      });
  cell.bootstrap_total = view.boot_total;
  cell.frozen = view.frozen;
  switch (view.mode) {
    case detail::TreeCellView::Mode::kAll:
      cell.sample_ids.resize(forest.n_rows());
      for (std::size_t i = 0; i < cell.sample_ids.size(); ++i)
        cell.sample_ids[i] = static_cast<std::int32_t>(i);
      break;
    case detail::TreeCellView::Mode::kIds:
      cell.sample_ids.assign(view.ids, view.ids + view.count);
      break;
    case detail::TreeCellView::Mode::kBits:
      cell.sample_ids.reserve(view.count);
      for (std::size_t w = 0; w < static_cast<std::size_t>(forest.sample_words); ++w) {
        std::uint64_t t = view.bits[w];
        while (t) {
          cell.sample_ids.push_back(
              static_cast<std::int32_t>(w * 64 + static_cast<std::size_t>(__builtin_ctzll(t))));
          t &= t - 1;
        }
      }
      break;
  }
  return cell;
}

// Runs the traversal for every tree and hands each cell to `fn` as
// fn(tree, TreeCellView). Cells are produced in tree order.
template <typename Fn>
inline void for_each_tree_cell(const Forest& forest, const std::vector<double>& x,
                               const SubsetS& s, int min_node_size, Fn&& fn) {
  const int mns = detail::resolve_min_node_size(forest, min_node_size);
  auto& sc = detail::traversal_scratch();
  sc.prepare(forest.n_features(), forest.mask_words, s);
  for (const Tree& tree : forest.trees) {
    auto view = detail::traverse_tree_cell(forest, tree, x, s, mns, sc, [](int, bool, double) {});
    fn(tree, view);
  }
}

inline ProjectedWeights projected_weights(const Forest& forest, const std::vector<double>& x,
                                          const SubsetS& s, int min_node_size = 0) {
  ProjectedWeights out;
  out.weights.assign(forest.n_rows(), 0.0);
  const double k = static_cast<double>(forest.trees.size());
  const std::size_t words = static_cast<std::size_t>(forest.sample_words);
  for_each_tree_cell(forest, x, s, min_node_size, [&](const Tree& tree, detail::TreeCellView view) {
    if (view.boot_total <= 0) throw std::logic_error("projected: cell with zero bootstrap mass");
    const double denom = k * static_cast<double>(view.boot_total);
    detail::for_each_cell_sample(tree, view, words, [&](std::int32_t i, std::uint32_t b) {
      out.weights[static_cast<std::size_t>(i)] += static_cast<double>(b) / denom;
    });
  });
  return out;
}

inline double projected_cdf(const Forest& forest, const std::vector<double>& x, const SubsetS& s,
                            double y, int min_node_size = 0) {
  if (forest.params.task != Task::kRegression)
    throw std::invalid_argument("projected_cdf: regression forests only");
  return detail::projected_interval_mass(forest, x, s, min_node_size,
                                         -std::numeric_limits<double>::infinity(), y);
}

inline double projected_mean(const Forest& forest, const std::vector<double>& x, const SubsetS& s,
                             int min_node_size = 0) {
  if (forest.params.task != Task::kRegression)
    throw std::invalid_argument("projected_mean: regression forests only");
  const std::vector<double>& y = forest.training_data.targets;
  const double k = static_cast<double>(forest.trees.size());
  const std::size_t words = static_cast<std::size_t>(forest.sample_words);
  double acc = 0.0;
  for_each_tree_cell(forest, x, s, min_node_size, [&](const Tree& tree, detail::TreeCellView view) {
    if (view.boot_total <= 0) throw std::logic_error("projected: cell with zero bootstrap mass");
    const double denom = k * static_cast<double>(view.boot_total);
    detail::for_each_cell_sample(tree, view, words, [&](std::int32_t i, std::uint32_t b) {
      acc += static_cast<double>(b) / denom * y[static_cast<std::size_t>(i)];
    });
  });
  return acc;
}

// Weighted empirical distribution of targets under the projected weights.
// Sorted by target with cumulative mass; backs quantiles and CDF curves.
struct WeightedTargetDist {
  std::vector<double> targets;  // ascending, unique
  std::vector<double> cum;      // cumulative mass after each target group
  double total = 0.0;

  double cdf(double y) const {
    auto it = std::upper_bound(targets.begin(), targets.end(), y);
    if (it == targets.begin()) return 0.0;
    return cum[static_cast<std::size_t>(it - targets.begin()) - 1];
  }

  // Generalized inverse: the smallest support point with cdf >= alpha.
  double quantile(double alpha) const {
    if (targets.empty()) throw std::logic_error("weighted distribution: empty support");
    for (std::size_t g = 0; g < targets.size(); ++g)
      if (cum[g] >= alpha) return targets[g];
    return targets.back();
  }

  double min_support() const { return targets.front(); }
  double max_support() const { return targets.back(); }
};

inline WeightedTargetDist projected_distribution(const Forest& forest,
                                                 const std::vector<double>& x, const SubsetS& s,
                                                 int min_node_size = 0) {
  static thread_local std::vector<double> w;
  static thread_local std::vector<std::int32_t> touched;
  w.resize(forest.n_rows(), 0.0);
  touched.clear();

  const double k = static_cast<double>(forest.trees.size());
  const std::size_t words = static_cast<std::size_t>(forest.sample_words);
  for_each_tree_cell(forest, x, s, min_node_size, [&](const Tree& tree, detail::TreeCellView view) {
    if (view.boot_total <= 0) throw std::logic_error("projected: cell with zero bootstrap mass");
    const double denom = k * static_cast<double>(view.boot_total);
    detail::for_each_cell_sample(tree, view, words, [&](std::int32_t i, std::uint32_t b) {
      if (w[static_cast<std::size_t>(i)] == 0.0) touched.push_back(i);
      w[static_cast<std::size_t>(i)] += static_cast<double>(b) / denom;
    });
  });

  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(touched.size());
  for (std::int32_t i : touched) {
    pairs.emplace_back(forest.training_data.targets[static_cast<std::size_t>(i)],
                       w[static_cast<std::size_t>(i)]);
    w[static_cast<std::size_t>(i)] = 0.0;
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  WeightedTargetDist dist;
  double cum = 0.0;
  for (std::size_t t = 0; t < pairs.size(); ++t) {
    cum += pairs[t].second;
    if (t + 1 < pairs.size() && pairs[t + 1].first == pairs[t].first) continue;
    dist.targets.push_back(pairs[t].first);
    dist.cum.push_back(cum);
  }
  dist.total = cum;
  return dist;
}

inline double projected_quantile(const Forest& forest, const std::vector<double>& x,
                                 const SubsetS& s, double alpha, int min_node_size = 0) {
  if (forest.params.task != Task::kRegression)
    throw std::invalid_argument("projected_quantile: regression forests only");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("projected_quantile: alpha must be in (0,1)");
  return projected_distribution(forest, x, s, min_node_size).quantile(alpha);
}

// Intersection over all trees of the per-tree projected cells: the box is the
// dimension-wise intersection and the sample set is the set intersection.
inline ProjectedCell intersection_cell(const Forest& forest, const std::vector<double>& x,
                                       const SubsetS& s, int min_node_size = 0) {
  ProjectedCell cell;
  cell.box.assign(s.size(), Interval{});
  std::vector<std::int32_t> acc, tmp, tree_ids;
  bool acc_all = true;

  const int mns = detail::resolve_min_node_size(forest, min_node_size);
  auto& sc = detail::traversal_scratch();
  sc.prepare(forest.n_features(), forest.mask_words, s);
  const std::size_t words = static_cast<std::size_t>(forest.sample_words);
  for (const Tree& tree : forest.trees) {
    auto view = detail::traverse_tree_cell(
        forest, tree, x, s, mns, sc, [&](int dim, bool left, double thr) {
          Interval& iv = cell.box[static_cast<std::size_t>(dim)];
          if (left)
            iv.hi = std::min(iv.hi, thr);
          else
            iv.lo = std::max(iv.lo, thr);
        });
    cell.frozen = cell.frozen || view.frozen;
    if (view.mode == detail::TreeCellView::Mode::kAll) continue;  // no-op for intersection
    tree_ids.clear();
    if (view.mode == detail::TreeCellView::Mode::kIds) {
      tree_ids.assign(view.ids, view.ids + view.count);
    } else {
      for (std::size_t w = 0; w < words; ++w) {
        std::uint64_t t = view.bits[w];
        while (t) {
          tree_ids.push_back(
              static_cast<std::int32_t>(w * 64 + static_cast<std::size_t>(__builtin_ctzll(t))));
          t &= t - 1;
        }
      }
    }
    if (acc_all) {
      acc = tree_ids;
      acc_all = false;
    } else {
      tmp.clear();
      std::set_intersection(acc.begin(), acc.end(), tree_ids.begin(), tree_ids.end(),
                            std::back_inserter(tmp));
      acc.swap(tmp);
    }
  }

  if (acc_all) {
    cell.sample_ids.resize(forest.n_rows());
    for (std::size_t i = 0; i < cell.sample_ids.size(); ++i)
      cell.sample_ids[i] = static_cast<std::int32_t>(i);
  } else {
    cell.sample_ids = std::move(acc);
  }
  cell.bootstrap_total = static_cast<std::int64_t>(cell.sample_ids.size());
  cell.empty_intersection = cell.sample_ids.empty();
  return cell;
}

}  // namespace pfx

#endif  // PFX_PROJECTED_HPP
