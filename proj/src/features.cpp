#include "sio/features.hpp"

#include <cmath>
#include <stdexcept>

namespace sio {

static Vec3 mean_abs(const std::vector<ImuSample>& s, bool gyro) {
  Vec3 acc = Vec3::Zero();
  for (const auto& m : s) acc += (gyro ? m.gyro : m.accel).cwiseAbs();
  return acc / static_cast<double>(s.size());
}

static Vec3 diff_std(const std::vector<ImuSample>& s, bool gyro) {
  const std::size_t n = s.size() - 1;
  Vec3 mean = Vec3::Zero();
  for (std::size_t k = 0; k < n; ++k)
    mean += (gyro ? s[k + 1].gyro - s[k].gyro : s[k + 1].accel - s[k].accel);
  mean /= static_cast<double>(n);
  Vec3 var = Vec3::Zero();
  for (std::size_t k = 0; k < n; ++k) {
    const Vec3 d =
        (gyro ? s[k + 1].gyro - s[k].gyro : s[k + 1].accel - s[k].accel) - mean;
    var += d.cwiseProduct(d);
  }
  var /= static_cast<double>(n);
  return var.cwiseSqrt();
}

FeatureVec window_features(const ImuSegment& seg) {
  if (seg.samples.size() < 4)
    throw std::invalid_argument("window_features: needs at least 4 samples");
  FeatureVec f;
  f << mean_abs(seg.samples, true), diff_std(seg.samples, true),
      mean_abs(seg.samples, false), diff_std(seg.samples, false);
  return f;
}

}  // namespace sio
