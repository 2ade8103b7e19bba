#include "sio/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace sio {

void SimConfig::validate() const {
  if (!(duration_s > 0.0) || !(scan_rate_hz > 0.0) || !(imu_rate_hz > 0.0))
    throw std::invalid_argument("SimConfig: rates and duration must be positive");
  if (imu_rate_hz < 10.0 * scan_rate_hz)
    throw std::invalid_argument("SimConfig: imu rate must be >= 10x scan rate");
  if (landmark_count < 100 || points_per_scan < 10)
    throw std::invalid_argument("SimConfig: too few landmarks or scan points");
  if (!(room_extent_m > 0.0) || !(sensing_range_m > 0.0))
    throw std::invalid_argument("SimConfig: extents must be positive");
  if (gyro_noise_std < 0.0 || accel_noise_std < 0.0)
    throw std::invalid_argument("SimConfig: noise std must be >= 0");
}

namespace {

struct EulerState {
  double yaw = 0.0, pitch = 0.0, roll = 0.0;
  double yaw_dot = 0.0, pitch_dot = 0.0, roll_dot = 0.0;
};

Mat3 rotation_zyx(double yaw, double pitch, double roll) {
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const double cr = std::cos(roll), sr = std::sin(roll);
  Mat3 R;
  // clang-format off
  R << cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
       sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
           -sp,                cp * sr,                cp * cr;
  // clang-format on
  return R;
}

// Body rates from Euler-angle rates for R = Rz(yaw) Ry(pitch) Rx(roll).
Vec3 body_rates(const EulerState& e) {
  return Vec3(
      e.roll_dot - e.yaw_dot * std::sin(e.pitch),
      e.pitch_dot * std::cos(e.roll) +
          e.yaw_dot * std::cos(e.pitch) * std::sin(e.roll),
      e.yaw_dot * std::cos(e.pitch) * std::cos(e.roll) -
          e.pitch_dot * std::sin(e.roll));
}

// Sum of sinusoids with analytic derivatives.
struct Sinusoids {
  std::vector<double> amp, freq, phase;  // freq in rad/s

  double value(double t) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < amp.size(); ++k)
      acc += amp[k] * std::sin(freq[k] * t + phase[k]);
    return acc;
  }
  double d1(double t) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < amp.size(); ++k)
      acc += amp[k] * freq[k] * std::cos(freq[k] * t + phase[k]);
    return acc;
  }
  double d2(double t) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < amp.size(); ++k)
      acc -= amp[k] * freq[k] * freq[k] * std::sin(freq[k] * t + phase[k]);
    return acc;
  }
};

TrajectorySample figure_eight(const SimConfig& cfg, double t) {
  // One lap per minute; amplitudes well inside the landmark box. Gentle
  // rates keep the zeroth-order-hold integration error of a 200 Hz stream
  // below the self-consistency budget.
  const double T = std::min(60.0, std::max(20.0, cfg.duration_s / 2.0));
  const double w = 2.0 * M_PI / T;
  const double ax = 0.2 * cfg.room_extent_m, ay = 0.1 * cfg.room_extent_m;
  const double az = 0.01 * cfg.room_extent_m;

  TrajectorySample s;
  s.p = Vec3(ax * std::sin(w * t), ay * std::sin(2.0 * w * t),
             az * std::sin(w * t));
  s.v = Vec3(ax * w * std::cos(w * t), 2.0 * ay * w * std::cos(2.0 * w * t),
             az * w * std::cos(w * t));
  s.a = Vec3(-ax * w * w * std::sin(w * t),
             -4.0 * ay * w * w * std::sin(2.0 * w * t),
             -az * w * w * std::sin(w * t));

  EulerState e;
  // Heading follows the planar velocity; never singular because the two
  // cosine factors cannot vanish simultaneously.
  e.yaw = std::atan2(s.v.y(), s.v.x());
  const double speed2 = s.v.x() * s.v.x() + s.v.y() * s.v.y();
  e.yaw_dot = (s.v.x() * s.a.y() - s.v.y() * s.a.x()) / speed2;
  // Small wobble, zero at t = 0 so sequences start level.
  e.roll = 0.05 * std::sin(2.0 * w * t);
  e.roll_dot = 0.05 * 2.0 * w * std::cos(2.0 * w * t);
  e.pitch = 0.04 * std::sin(3.0 * w * t);
  e.pitch_dot = 0.04 * 3.0 * w * std::cos(3.0 * w * t);

  s.R = rotation_zyx(e.yaw, e.pitch, e.roll);
  s.omega_body = body_rates(e);
  return s;
}

TrajectorySample random_smooth(const SimConfig& cfg, double t) {
  // Deterministic in the seed; gentle bandwidth for the same reason as the
  // figure eight.
  std::mt19937_64 rng(cfg.seed ^ 0x5eed5eedULL);
  std::uniform_real_distribution<double> uf(0.05, 0.25);   // rad/s
  std::uniform_real_distribution<double> ua(0.5, 2.5);     // m
  std::uniform_real_distribution<double> uph(0.0, 2.0 * M_PI);

  Sinusoids pos[3];
  for (int axis = 0; axis < 3; ++axis) {
    for (int k = 0; k < 3; ++k) {
      const double scale = axis == 2 ? 0.15 : 1.0;
      pos[axis].amp.push_back(scale * ua(rng));
      pos[axis].freq.push_back(uf(rng));
      pos[axis].phase.push_back(uph(rng));
    }
  }
  Sinusoids ang[3];  // yaw, pitch, roll; pitch/roll zero-phased (level start)
  for (int axis = 0; axis < 3; ++axis) {
    for (int k = 0; k < 2; ++k) {
      ang[axis].amp.push_back((axis == 0 ? 0.6 : 0.08) * uf(rng) * 4.0);
      ang[axis].freq.push_back(uf(rng));
      ang[axis].phase.push_back(axis == 0 ? uph(rng) : 0.0);
    }
  }

  TrajectorySample s;
  for (int axis = 0; axis < 3; ++axis) {
    s.p[axis] = pos[axis].value(t) - pos[axis].value(0.0);
    s.v[axis] = pos[axis].d1(t);
    s.a[axis] = pos[axis].d2(t);
  }
  EulerState e;
  e.yaw = ang[0].value(t);
  e.yaw_dot = ang[0].d1(t);
  e.pitch = ang[1].value(t);
  e.pitch_dot = ang[1].d1(t);
  e.roll = ang[2].value(t);
  e.roll_dot = ang[2].d1(t);
  s.R = rotation_zyx(e.yaw, e.pitch, e.roll);
  s.omega_body = body_rates(e);
  return s;
}

double smoothstep5(double u) { return u * u * u * (10.0 + u * (-15.0 + 6.0 * u)); }
double smoothstep5_d1(double u) { return 30.0 * u * u * (1.0 + u * (-2.0 + u)); }
double smoothstep5_d2(double u) { return 60.0 * u * (1.0 + u * (-3.0 + 2.0 * u)); }

TrajectorySample polyline(const SimConfig& cfg, double t) {
  // Quintic-blended legs between seeded waypoints: velocity and
  // acceleration vanish at every waypoint, so the path is C^2.
  std::mt19937_64 rng(cfg.seed ^ 0x9017e11eULL);
  const double half = 0.3 * cfg.room_extent_m;
  std::uniform_real_distribution<double> upos(-half, half);
  const int legs = std::max(2, static_cast<int>(cfg.duration_s / 15.0));
  std::vector<Vec3> wp;
  wp.emplace_back(0.0, 0.0, 0.0);
  for (int k = 0; k < legs; ++k)
    wp.emplace_back(upos(rng), upos(rng), 0.1 * upos(rng));

  const double leg_T = cfg.duration_s / static_cast<double>(legs);
  int leg = std::min(legs - 1, static_cast<int>(t / leg_T));
  const double u = std::clamp((t - leg * leg_T) / leg_T, 0.0, 1.0);

  const Vec3 d = wp[leg + 1] - wp[leg];
  TrajectorySample s;
  s.p = wp[leg] + smoothstep5(u) * d;
  s.v = smoothstep5_d1(u) * d / leg_T;
  s.a = smoothstep5_d2(u) * d / (leg_T * leg_T);

  // Yaw turns from the previous leg's heading to the current one with the
  // same quintic timing, so it is C^2 too.
  auto heading = [&](int k) {
    const Vec3 dd = wp[k + 1] - wp[k];
    return std::atan2(dd.y(), dd.x());
  };
  const double h_prev = heading(leg == 0 ? 0 : leg - 1);
  const double diff = std::remainder(heading(leg) - h_prev, 2.0 * M_PI);
  EulerState e;
  e.yaw = h_prev + smoothstep5(u) * diff;
  e.yaw_dot = smoothstep5_d1(u) * diff / leg_T;
  s.R = rotation_zyx(e.yaw, 0.0, 0.0);
  s.omega_body = body_rates(e);
  return s;
}

}  // namespace

TrajectorySample sample_trajectory(const SimConfig& cfg, double t) {
  switch (cfg.trajectory) {
    case TrajectoryRecipe::FigureEight:
      return figure_eight(cfg, t);
    case TrajectoryRecipe::RandomSmooth:
      return random_smooth(cfg, t);
    case TrajectoryRecipe::Polyline:
      return polyline(cfg, t);
  }
  throw std::logic_error("sample_trajectory: unknown recipe");
}

SequenceBundle simulate(const SimConfig& cfg) {
  cfg.validate();
  SequenceBundle bundle;
  bundle.meta.imu_rate_hz = cfg.imu_rate_hz;
  bundle.meta.scan_rate_hz = cfg.scan_rate_hz;
  bundle.meta.gravity = cfg.gravity;

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Landmark world: uniform box, flatter in z than in the plane.
  const double half = 0.5 * cfg.room_extent_m;
  const double half_z = cfg.room_extent_m / 6.0;
  std::uniform_real_distribution<double> ux(-half, half);
  std::uniform_real_distribution<double> uz(-half_z, half_z);
  std::vector<Vec3> landmarks;
  landmarks.reserve(cfg.landmark_count);
  for (int i = 0; i < cfg.landmark_count; ++i)
    landmarks.emplace_back(ux(rng), ux(rng), uz(rng));

  // IMU stream: ideal specific force and body rates + bias + noise.
  const long n_imu = std::lround(cfg.duration_s * cfg.imu_rate_hz);
  bundle.imu.reserve(n_imu + 1);
  for (long k = 0; k <= n_imu; ++k) {
    const double t = static_cast<double>(k) / cfg.imu_rate_hz;
    const auto s = sample_trajectory(cfg, t);
    ImuSample m;
    m.t = t;
    m.gyro = s.omega_body + cfg.gyro_bias;
    m.accel = s.R.transpose() * (s.a - cfg.gravity) + cfg.accel_bias;
    if (cfg.gyro_noise_std > 0.0)
      for (int i = 0; i < 3; ++i) m.gyro[i] += cfg.gyro_noise_std * gauss(rng);
    if (cfg.accel_noise_std > 0.0)
      for (int i = 0; i < 3; ++i)
        m.accel[i] += cfg.accel_noise_std * gauss(rng);
    bundle.imu.push_back(m);
  }

  // Scans: landmarks within range, in the sensor frame; nearest kept when
  // over the cap (stable ordering for determinism).
  const long n_scans = std::lround(cfg.duration_s * cfg.scan_rate_hz);
  for (long j = 0; j <= n_scans; ++j) {
    const double t = static_cast<double>(j) / cfg.scan_rate_hz;
    const auto s = sample_trajectory(cfg, t);
    std::vector<std::pair<double, int>> in_range;
    for (int i = 0; i < cfg.landmark_count; ++i) {
      const double d2 = (landmarks[i] - s.p).squaredNorm();
      if (d2 <= cfg.sensing_range_m * cfg.sensing_range_m)
        in_range.emplace_back(d2, i);
    }
    if (static_cast<int>(in_range.size()) > cfg.points_per_scan) {
      std::nth_element(in_range.begin(),
                       in_range.begin() + cfg.points_per_scan, in_range.end());
      in_range.resize(cfg.points_per_scan);
    }
    std::sort(in_range.begin(), in_range.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    Scan scan;
    scan.t = t;
    scan.cloud.frame = "sensor";
    scan.cloud.points.reserve(in_range.size());
    for (const auto& [d2, i] : in_range)
      scan.cloud.points.push_back(s.R.transpose() * (landmarks[i] - s.p));
    bundle.scans.push_back(std::move(scan));
  }

  Trajectory gt;
  for (const auto& scan : bundle.scans) {
    const auto s = sample_trajectory(cfg, scan.t);
    gt.states.push_back(NavState{s.R, s.v, s.p, scan.t});
  }
  bundle.ground_truth = std::move(gt);

  bundle.validate();
  return bundle;
}

}  // namespace sio
