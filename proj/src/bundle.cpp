#include "sio/bundle.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sio/util.hpp"

namespace sio {

namespace fs = std::filesystem;
using nlohmann::json;

void SequenceBundle::validate() const {
  if (imu.size() < 2)
    throw std::invalid_argument("SequenceBundle: needs at least 2 IMU samples");
  for (std::size_t i = 1; i < imu.size(); ++i)
    if (!(imu[i].t > imu[i - 1].t))
      throw std::invalid_argument(
          "SequenceBundle: IMU timestamps must be strictly increasing");
  for (std::size_t i = 1; i < scans.size(); ++i)
    if (!(scans[i].t > scans[i - 1].t))
      throw std::invalid_argument(
          "SequenceBundle: scan timestamps must be strictly increasing");
  for (std::size_t i = 0; i < scans.size(); ++i) {
    if (scans[i].t < imu.front().t || scans[i].t > imu.back().t)
      throw std::invalid_argument(
          "SequenceBundle: scan " + std::to_string(i) + " at t=" +
          fmt_double(scans[i].t) + " not bracketed by IMU samples");
  }
  if (ground_truth) ground_truth->validate();
}

static void save_imu_csv(const std::vector<ImuSample>& imu,
                         const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os << "t,wx,wy,wz,ax,ay,az\n";
  for (const auto& s : imu) {
    os << fmt_double(s.t);
    for (int i = 0; i < 3; ++i) os << ',' << fmt_double(s.gyro[i]);
    for (int i = 0; i < 3; ++i) os << ',' << fmt_double(s.accel[i]);
    os << '\n';
  }
}

static std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

static std::vector<ImuSample> load_imu_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read '" + path + "'");
  std::string line;
  int lineno = 0;
  std::getline(is, line);
  ++lineno;
  if (split_csv(line) != std::vector<std::string>{"t", "wx", "wy", "wz", "ax",
                                                  "ay", "az"})
    throw std::runtime_error(path + ":1: expected header t,wx,wy,wz,ax,ay,az");
  std::vector<ImuSample> imu;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 7)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 7 fields");
    try {
      ImuSample s;
      s.t = parse_double(f[0]);
      s.gyro = Vec3(parse_double(f[1]), parse_double(f[2]), parse_double(f[3]));
      s.accel =
          Vec3(parse_double(f[4]), parse_double(f[5]), parse_double(f[6]));
      imu.push_back(s);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  return imu;
}

void save_states_csv(const Trajectory& traj, const std::string& path) {
  traj.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os << "#states v1\n# t R(9 row-major) v(3) p(3)\n";
  for (const auto& s : traj.states) {
    os << fmt_double(s.t);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) os << ' ' << fmt_double(s.R(r, c));
    for (int i = 0; i < 3; ++i) os << ' ' << fmt_double(s.v[i]);
    for (int i = 0; i < 3; ++i) os << ' ' << fmt_double(s.p[i]);
    os << '\n';
  }
}

Trajectory load_states_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read '" + path + "'");
  Trajectory traj;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto toks = split_ws(line);
    if (toks.size() != 16)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 16 fields");
    try {
      NavState s;
      s.t = parse_double(toks[0]);
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
          s.R(r, c) = parse_double(toks[1 + 3 * r + c]);
      for (int i = 0; i < 3; ++i) s.v[i] = parse_double(toks[10 + i]);
      for (int i = 0; i < 3; ++i) s.p[i] = parse_double(toks[13 + i]);
      traj.states.push_back(s);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  traj.validate();
  return traj;
}

void export_bundle(const SequenceBundle& bundle, const std::string& dir) {
  bundle.validate();
  fs::create_directories(fs::path(dir) / "scans");
  save_imu_csv(bundle.imu, (fs::path(dir) / "imu.csv").string());

  std::ofstream idx((fs::path(dir) / "scans.txt").string(), std::ios::binary);
  if (!idx) throw std::runtime_error("cannot write scans.txt");
  for (std::size_t i = 0; i < bundle.scans.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "scans/scan_%06zu.xyz", i);
    write_cloud_xyz(bundle.scans[i].cloud, (fs::path(dir) / name).string());
    idx << fmt_double(bundle.scans[i].t) << ' ' << name << '\n';
  }
  idx.close();

  if (bundle.ground_truth) {
    save_tum(*bundle.ground_truth, (fs::path(dir) / "gt.tum").string());
    save_states_csv(*bundle.ground_truth,
                    (fs::path(dir) / "gt_states.csv").string());
  }

  json meta;
  meta["format_version"] = 1;
  meta["imu_rate_hz"] = bundle.meta.imu_rate_hz;
  meta["scan_rate_hz"] = bundle.meta.scan_rate_hz;
  meta["gravity"] = {bundle.meta.gravity.x(), bundle.meta.gravity.y(),
                     bundle.meta.gravity.z()};
  std::vector<double> ext;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) ext.push_back(bundle.meta.extrinsics(r, c));
  meta["extrinsics"] = ext;
  std::ofstream mos((fs::path(dir) / "meta.json").string(), std::ios::binary);
  mos << meta.dump(2) << '\n';
}

SequenceBundle ingest_bundle(const std::string& dir) {
  SequenceBundle bundle;
  const fs::path base(dir);

  {
    std::ifstream is((base / "meta.json").string());
    if (!is)
      throw std::runtime_error("cannot read '" + (base / "meta.json").string() +
                               "'");
    json meta = json::parse(is);
    bundle.meta.imu_rate_hz = meta.at("imu_rate_hz").get<double>();
    bundle.meta.scan_rate_hz = meta.at("scan_rate_hz").get<double>();
    const auto g = meta.at("gravity");
    bundle.meta.gravity = Vec3(g.at(0), g.at(1), g.at(2));
    if (meta.contains("extrinsics")) {
      const auto e = meta.at("extrinsics");
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
          bundle.meta.extrinsics(r, c) = e.at(4 * r + c).get<double>();
    }
  }

  bundle.imu = load_imu_csv((base / "imu.csv").string());

  const std::string idx_path = (base / "scans.txt").string();
  std::ifstream idx(idx_path);
  if (!idx) throw std::runtime_error("cannot read '" + idx_path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(idx, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto toks = split_ws(line);
    if (toks.size() != 2)
      throw std::runtime_error(idx_path + ":" + std::to_string(lineno) +
                               ": expected '<t> <path>'");
    Scan scan;
    try {
      scan.t = parse_double(toks[0]);
    } catch (const std::exception& e) {
      throw std::runtime_error(idx_path + ":" + std::to_string(lineno) + ": " +
                               e.what());
    }
    scan.cloud = read_cloud((base / toks[1]).string());
    // Non-identity extrinsics apply to clouds only; IMU frame is the body.
    if (!bundle.meta.extrinsics.isIdentity(1e-15)) {
      Pose ext;
      ext.R = bundle.meta.extrinsics.block<3, 3>(0, 0);
      ext.p = bundle.meta.extrinsics.block<3, 1>(0, 3);
      scan.cloud = transform_cloud(ext, scan.cloud);
    }
    bundle.scans.push_back(std::move(scan));
  }

  if (fs::exists(base / "gt_states.csv")) {
    bundle.ground_truth = load_states_csv((base / "gt_states.csv").string());
  } else if (fs::exists(base / "gt.tum")) {
    bundle.ground_truth = load_tum((base / "gt.tum").string());
  }

  bundle.validate();
  return bundle;
}

}  // namespace sio
