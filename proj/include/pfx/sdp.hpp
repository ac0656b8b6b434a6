#ifndef PFX_SDP_HPP
#define PFX_SDP_HPP

#include <cmath>
#include <stdexcept>

#include "pfx/projected.hpp"

namespace pfx {

enum class BandProvenance { kFixedRadius, kAdaptiveQuantile };

// Closed decision interval [lo, hi] around a regression prediction.
struct DecisionBand {
  double lo = 0.0;
  double hi = 0.0;
  BandProvenance provenance = BandProvenance::kFixedRadius;

  // Radius form: stay within sqrt(t) of the prediction.
  static DecisionBand fixed_radius(double y, double t) {
    if (!(t >= 0.0)) throw std::invalid_argument("band: radius t must be >= 0");
    const double r = std::sqrt(t);
    return DecisionBand{y - r, y + r, BandProvenance::kFixedRadius};
  }

  bool contains(double y) const { return y >= lo && y <= hi; }
};

struct SdpResult {
  double value = 0.0;
  SubsetS subset;
  DecisionBand band;  // regression only
  int label = -1;     // classification only
};

// Probability that the response stays inside the band when only X_S is fixed.
// Counting is closed on both ends so atoms sitting exactly on a bound are
// kept, which is what the squared-distance condition implies.
inline SdpResult sdp_regression(const Forest& forest, const std::vector<double>& x, double y,
                                const DecisionBand& band, const SubsetS& s,
                                int min_node_size = 0) {
  (void)y;
  if (forest.params.task != Task::kRegression)
    throw std::invalid_argument("sdp_regression: forest is not a regression model");
  if (!(band.lo <= band.hi)) throw std::invalid_argument("sdp_regression: band.lo > band.hi");
  SdpResult res;
  res.subset = s;
  res.band = band;
  res.value = detail::projected_interval_mass(forest, x, s, min_node_size, band.lo, band.hi);
  return res;
}

// Probability that the label stays equal to `label` when only X_S is fixed.
inline SdpResult sdp_classification(const Forest& forest, const std::vector<double>& x, int label,
                                    const SubsetS& s, int min_node_size = 0) {
  if (forest.params.task != Task::kClassification)
    throw std::invalid_argument("sdp_classification: forest is not a classification model");
  if (label < 0 || label >= forest.n_classes())
    throw std::invalid_argument("sdp_classification: unknown class label");
  SdpResult res;
  res.subset = s;
  res.label = label;
  res.value = detail::projected_label_mass(forest, x, s, min_node_size, label);
  return res;
}

// Instance-adaptive band from the conditional quantiles of Y | X = x:
// [q_alpha1, q_{1-alpha2}] under the full-feature projected distribution.
inline DecisionBand adaptive_band(const Forest& forest, const std::vector<double>& x,
                                  double alpha1, double alpha2) {
  if (forest.params.task != Task::kRegression)
    throw std::invalid_argument("adaptive_band: regression forests only");
  if (!(alpha1 > 0.0 && alpha2 > 0.0 && alpha1 + alpha2 < 1.0))
    throw std::invalid_argument("adaptive_band: need alpha1, alpha2 > 0 and alpha1 + alpha2 < 1");
  const SubsetS all = SubsetS::all(forest.n_features());
  const WeightedTargetDist dist = projected_distribution(forest, x, all);
  DecisionBand band;
  band.lo = dist.quantile(alpha1);
  band.hi = dist.quantile(1.0 - alpha2);
  band.provenance = BandProvenance::kAdaptiveQuantile;
  if (band.lo > band.hi) throw std::logic_error("adaptive_band: quantile crossing");
  return band;
}

}  // namespace pfx

#endif  // PFX_SDP_HPP
