#ifndef PFX_SYNTHETIC_HPP
#define PFX_SYNTHETIC_HPP

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfx/common.hpp"
#include "pfx/dataset.hpp"

namespace pfx {

// Synthetic benchmark generators. Both come with per-instance ground-truth
// active sets so discovery metrics can be scored without external labels.
struct SyntheticData {
  Dataset data;
  std::vector<std::vector<int>> truth_sets;  // 0-based active feature indices per row
};

// Shared covariance recipe: Sigma = off_diag * J_p + (diag - off_diag) * I_p.
// A draw is sqrt(diag - off_diag) * eps_j + sqrt(off_diag) * g with g shared
// across the row, which factors Sigma exactly and avoids a dense Cholesky.
namespace detail {
inline void fill_equicorrelated(std::vector<std::vector<double>>& columns, std::size_t n,
                                double diag, double off_diag, Rng& rng) {
  const double indep = std::sqrt(diag - off_diag);
  const double shared = std::sqrt(off_diag);
  const std::size_t p = columns.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double g = rng.normal();
    for (std::size_t j = 0; j < p; ++j) columns[j][i] = indep * rng.normal() + shared * g;
  }
}
}  // namespace detail

// Regression: Y = (X1 + X2) 1{X5 <= 0} + (X3 + X4) 1{X5 > 0} on equicorrelated
// Gaussian features (diag 5.8, off-diagonal 0.8). Features beyond the first
// five are pure noise. Active set is {0,1,4} or {2,3,4} depending on sign(X5).
inline SyntheticData gen_linear_switch(std::size_t n, std::size_t p, std::uint64_t seed) {
  if (p < 5) throw std::invalid_argument("gen_linear_switch: p must be >= 5");
  if (n == 0) throw std::invalid_argument("gen_linear_switch: n must be >= 1");
  SyntheticData out;
  out.data.task = Task::kRegression;
  out.data.columns.assign(p, std::vector<double>(n));
  out.data.targets.resize(n);
  out.data.feature_names.resize(p);
  for (std::size_t j = 0; j < p; ++j) out.data.feature_names[j] = "x" + std::to_string(j + 1);

  Rng rng(seed);
  detail::fill_equicorrelated(out.data.columns, n, 5.8, 0.8, rng);

  out.truth_sets.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x5 = out.data.columns[4][i];
    if (x5 <= 0.0) {
      out.data.targets[i] = out.data.columns[0][i] + out.data.columns[1][i];
      out.truth_sets[i] = {0, 1, 4};
    } else {
      out.data.targets[i] = out.data.columns[2][i] + out.data.columns[3][i];
      out.truth_sets[i] = {2, 3, 4};
    }
  }
  return out;
}

struct MoonParams {
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  double jitter_std = 0.1;     // Gaussian jitter on the two moon coordinates
  std::size_t noise_dims = 100;
  double noise_diag = 5.8;
  double noise_off_diag = 0.8;
  bool flip_on_z1 = true;      // flip the label where the first noise feature > 0
};

// Classification: two interleaving half-circles in (x1, x2) with jittered
// coordinates, plus equicorrelated Gaussian noise features z1..zK. When
// enabled, the label flips wherever z1 > 0, which makes z1 a necessary part
// of any faithful explanation. Columns: [x1, x2, z1, ..., zK].
inline SyntheticData gen_moon_noise(const MoonParams& params) {
  if (params.n < 2) throw std::invalid_argument("gen_moon_noise: n must be >= 2");
  const std::size_t n = params.n;
  const std::size_t p = 2 + params.noise_dims;
  SyntheticData out;
  out.data.task = Task::kClassification;
  out.data.columns.assign(p, std::vector<double>(n));
  out.data.targets.resize(n);
  out.data.feature_names.resize(p);
  out.data.feature_names[0] = "x1";
  out.data.feature_names[1] = "x2";
  for (std::size_t j = 0; j < params.noise_dims; ++j)
    out.data.feature_names[2 + j] = "z" + std::to_string(j + 1);

  Rng rng(params.seed);
  for (std::size_t i = 0; i < n; ++i) {
    const bool lower = (rng.next_u64() & 1ULL) != 0;
    const double t = rng.uniform01() * 3.14159265358979323846;
    double cx, cy;
    if (!lower) {
      cx = std::cos(t);
      cy = std::sin(t);
    } else {
      cx = 1.0 - std::cos(t);
      cy = 0.5 - std::sin(t);
    }
    out.data.columns[0][i] = cx + params.jitter_std * rng.normal();
    out.data.columns[1][i] = cy + params.jitter_std * rng.normal();
    out.data.targets[i] = lower ? 1.0 : 0.0;
  }

  if (params.noise_dims > 0) {
    std::vector<std::vector<double>> noise(params.noise_dims, std::vector<double>(n));
    detail::fill_equicorrelated(noise, n, params.noise_diag, params.noise_off_diag, rng);
    for (std::size_t j = 0; j < params.noise_dims; ++j) out.data.columns[2 + j] = std::move(noise[j]);
  }

  out.truth_sets.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (params.flip_on_z1 && params.noise_dims > 0 && out.data.columns[2][i] > 0.0)
      out.data.targets[i] = 1.0 - out.data.targets[i];
    out.truth_sets[i] = params.noise_dims > 0 ? std::vector<int>{0, 1, 2} : std::vector<int>{0, 1};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Truth / selection sidecar files: one row per instance,
//   instance_id,f0;f1;f2
// with 0-based feature indices. The same format is used to ingest selections
// produced by external attribution methods.
// ---------------------------------------------------------------------------

inline void save_selection_file(const std::string& path,
                                const std::vector<std::vector<int>>& sets) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("selection file: cannot write '" + path + "'");
  out << "instance_id,features\n";
  for (std::size_t i = 0; i < sets.size(); ++i) {
    out << i << ',';
    for (std::size_t k = 0; k < sets[i].size(); ++k) {
      if (k) out << ';';
      out << sets[i][k];
    }
    out << '\n';
  }
}

inline std::vector<std::vector<int>> load_selection_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("selection file: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("selection file: empty '" + path + "'");
  std::vector<std::pair<std::size_t, std::vector<int>>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("selection file: malformed row " + std::to_string(lineno));
    std::size_t id = static_cast<std::size_t>(std::stoull(line.substr(0, comma)));
    std::vector<int> feats;
    std::string rest = line.substr(comma + 1);
    std::string cur;
    auto flush = [&]() {
      if (!cur.empty()) {
        feats.push_back(std::stoi(cur));
        cur.clear();
      }
    };
    for (char c : rest) {
      if (c == ';')
        flush();
      else if (c != '\r' && c != ' ')
        cur.push_back(c);
    }
    flush();
    rows.emplace_back(id, std::move(feats));
    ++lineno;
  }
  std::size_t max_id = 0;
  for (const auto& r : rows) max_id = std::max(max_id, r.first);
  std::vector<std::vector<int>> out(rows.empty() ? 0 : max_id + 1);
  for (auto& r : rows) out[r.first] = std::move(r.second);
  return out;
}

}  // namespace pfx

#endif  // PFX_SYNTHETIC_HPP
