#include "groundgen/interp.hpp"

#include <atomic>
#include <cmath>
#include <numbers>

namespace groundgen::interp {

void SparseFeatureField::validate() const {
  if (features.rows() < 1) throw ConfigError("feature field needs an anchor");
  if (static_cast<long>(locations.size()) != features.rows())
    throw DimensionError("anchor locations do not match feature rows");
  if (!(sigma_km > 0.0)) throw ConfigError("kernel bandwidth must be positive");
}

SparseFeatureField SparseFeatureField::from_features(
    const std::vector<features::FeatureVector>& feats, double sigma_km) {
  SparseFeatureField field;
  field.sigma_km = sigma_km;
  field.features = features::feature_matrix(feats);
  for (const auto& f : feats) {
    if (!f.location)
      throw ConfigError("anchor feature is missing its location");
    field.locations.push_back(*f.location);
  }
  field.validate();
  return field;
}

double distance_km(const geo::GeoLocation& a, const geo::GeoLocation& b,
                   DistanceMetric metric) {
  if (metric == DistanceMetric::GreatCircle) return geo::haversine_km(a, b);
  constexpr double deg = std::numbers::pi / 180.0;
  constexpr double kEarthRadiusKm = 6371.0088;
  const double lat_mid = 0.5 * (a.lat + b.lat) * deg;
  const double dy = (b.lat - a.lat) * deg * kEarthRadiusKm;
  const double dx = (b.lon - a.lon) * deg * kEarthRadiusKm * std::cos(lat_mid);
  return std::sqrt(dx * dx + dy * dy);
}

Eigen::VectorXd kernel_weights(const SparseFeatureField& field,
                               const geo::GeoLocation& query, bool& underflow) {
  field.validate();
  const int n = field.size();
  Eigen::VectorXd w(n);
  const double inv_two_sigma_sq = 1.0 / (2.0 * field.sigma_km * field.sigma_km);
  for (int i = 0; i < n; ++i) {
    const double d = distance_km(query, field.locations[static_cast<std::size_t>(i)],
                                 field.metric);
    w[i] = std::exp(-d * d * inv_two_sigma_sq);
  }
  const double total = w.sum();
  underflow = !(total > 0.0);
  if (!underflow) w /= total;
  return w;
}

namespace {
std::atomic<long> g_underflows{0};
}

Eigen::VectorXd interpolate(const SparseFeatureField& field,
                            const geo::GeoLocation& query) {
  bool underflow = false;
  const Eigen::VectorXd w = kernel_weights(field, query, underflow);
  if (underflow) {
    // Every kernel weight vanished; fall back to the nearest anchor.
    const long count = g_underflows.fetch_add(1);
    if (count % 10000 == 0)
      log_warn("kernel weights underflowed; using the nearest anchor "
               "(occurrence " + std::to_string(count + 1) + ")");
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < field.size(); ++i) {
      const double d = distance_km(
          query, field.locations[static_cast<std::size_t>(i)], field.metric);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return field.features.row(best).transpose();
  }
  return field.features.transpose() * w;
}

std::vector<int> interpolate_then_classify(
    const SparseFeatureField& field, const probes::ProbeModel& probe,
    const std::vector<geo::GeoLocation>& queries) {
  field.validate();
  if (!probe.trained()) throw StateError("probe is not trained");
  std::vector<int> out;
  out.reserve(queries.size());
  if (probe.kind == probes::ProbeKind::SvmRbf) {
    if (probe.svm->dim() != field.dim())
      throw DimensionError("probe feature dimension does not match field");
    for (const auto& q : queries)
      out.push_back(probe.svm->predict(interpolate(field, q)));
  } else {
    if (field.dim() != probes::kCnnFeatureDim)
      throw DimensionError("probe feature dimension does not match field");
    Eigen::MatrixXd feats(static_cast<long>(queries.size()), field.dim());
    for (std::size_t i = 0; i < queries.size(); ++i)
      feats.row(static_cast<long>(i)) = interpolate(field, queries[i]).transpose();
    out = probe.cnn->classify_features(feats);
  }
  return out;
}

}  // namespace groundgen::interp
