#ifndef GROUNDGEN_INTERP_HPP
#define GROUNDGEN_INTERP_HPP

#include <Eigen/Core>

#include <vector>

#include "groundgen/features.hpp"
#include "groundgen/probes.hpp"

namespace groundgen::interp {

enum class DistanceMetric {
  GreatCircle,      // haversine, km
  PlanarEquirect,   // local equirectangular approximation, km
};

// Sparse anchors carrying features, interpolated with a normalized Gaussian
// kernel over distance. The interpolate-then-classify baseline's substrate.
struct SparseFeatureField {
  std::vector<geo::GeoLocation> locations;
  Eigen::MatrixXd features;  // one row per anchor
  double sigma_km = 2.0;
  DistanceMetric metric = DistanceMetric::GreatCircle;

  void validate() const;
  int dim() const { return static_cast<int>(features.cols()); }
  int size() const { return static_cast<int>(features.rows()); }

  static SparseFeatureField from_features(
      const std::vector<features::FeatureVector>& feats, double sigma_km);
};

double distance_km(const geo::GeoLocation& a, const geo::GeoLocation& b,
                   DistanceMetric metric);

// f(q) = sum_i w_i f_i with w_i = exp(-d(q,x_i)^2 / (2 sigma^2)), weights
// normalized to sum to one. If every weight underflows to zero the nearest
// anchor's feature is returned and a warning is logged.
Eigen::VectorXd interpolate(const SparseFeatureField& field,
                            const geo::GeoLocation& query);

// Kernel weights for one query (normalized); exposed for property tests.
Eigen::VectorXd kernel_weights(const SparseFeatureField& field,
                               const geo::GeoLocation& query, bool& underflow);

std::vector<int> interpolate_then_classify(
    const SparseFeatureField& field, const probes::ProbeModel& probe,
    const std::vector<geo::GeoLocation>& queries);

}  // namespace groundgen::interp

#endif
