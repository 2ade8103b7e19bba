#include "sio/pseudolabel.hpp"

#include <fstream>
#include <stdexcept>

#include "sio/util.hpp"

namespace sio {

SourceSelection select_source(const Pose& dT_icp, const Pose& dT_pgo,
                              const PointCloud& p_i, const PointCloud& p_next,
                              double tau) {
  SourceSelection sel;
  sel.s_icp = symmetric_overlap(dT_icp, p_i, p_next, tau);
  sel.s_pgo = symmetric_overlap(dT_pgo, p_i, p_next, tau);
  if (sel.s_pgo > sel.s_icp) {
    sel.source = LabelSource::Pgo;
    sel.dT = dT_pgo;
  } else {
    sel.source = LabelSource::Icp;
    sel.dT = dT_icp;
  }
  return sel;
}

std::pair<Pose, Vec3> make_pseudo_states(const Pose& T_i, const Pose& dT,
                                         double dt) {
  if (!(dt > 0.0))
    throw std::invalid_argument("make_pseudo_states: dt must be positive");
  const Pose T_next = compose_se3(T_i, dT);
  const Vec3 v_next = (T_next.p - T_i.p) / dt;
  return {T_next, v_next};
}

static void put_state(std::ostream& os, const Mat3& R, const Vec3& v,
                      const Vec3& p) {
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) os << ' ' << fmt_double(R(r, c));
  for (int i = 0; i < 3; ++i) os << ' ' << fmt_double(v[i]);
  for (int i = 0; i < 3; ++i) os << ' ' << fmt_double(p[i]);
}

void save_labels(const LabelSet& set, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write label file '" + path + "'");
  os << "#labels v1\n";
  os << "init " << fmt_double(set.init.t);
  put_state(os, set.init.R, set.init.v, set.init.p);
  os << '\n';
  for (const auto& l : set.labels) {
    os << "seg " << fmt_double(l.t_i) << ' ' << fmt_double(l.t_next) << ' '
       << (l.source == LabelSource::Icp ? "ICP" : "PGO") << ' '
       << fmt_double(l.s_icp) << ' ' << fmt_double(l.s_pgo);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) os << ' ' << fmt_double(l.dT.R(r, c));
    for (int i = 0; i < 3; ++i) os << ' ' << fmt_double(l.dT.p[i]);
    put_state(os, l.derived.R, l.derived.v, l.derived.p);
    os << '\n';
  }
}

LabelSet load_labels(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read label file '" + path + "'");
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& why) {
    throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + why);
  };
  std::getline(is, line);
  ++lineno;
  if (line != "#labels v1") fail("missing '#labels v1' header");

  LabelSet set;
  bool have_init = false;
  while (std::getline(is, line)) {
    ++lineno;
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    auto num = [&](std::size_t i) { return parse_double(toks.at(i)); };
    auto get_mat = [&](std::size_t off) {
      Mat3 m;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = num(off + 3 * r + c);
      return m;
    };
    auto get_vec = [&](std::size_t off) {
      return Vec3(num(off), num(off + 1), num(off + 2));
    };
    try {
      if (toks[0] == "init" && toks.size() == 17) {
        set.init.t = num(1);
        set.init.R = get_mat(2);
        set.init.v = get_vec(11);
        set.init.p = get_vec(14);
        have_init = true;
      } else if (toks[0] == "seg" && toks.size() == 33) {
        PseudoLabel l;
        l.t_i = num(1);
        l.t_next = num(2);
        if (toks[3] == "ICP")
          l.source = LabelSource::Icp;
        else if (toks[3] == "PGO")
          l.source = LabelSource::Pgo;
        else
          fail("unknown label source '" + toks[3] + "'");
        l.s_icp = num(4);
        l.s_pgo = num(5);
        l.dT.R = get_mat(6);
        l.dT.p = get_vec(15);
        l.derived.R = get_mat(18);
        l.derived.v = get_vec(27);
        l.derived.p = get_vec(30);
        l.derived.t = l.t_next;
        set.labels.push_back(l);
      } else {
        fail("unrecognized record '" + toks[0] + "' with " +
             std::to_string(toks.size()) + " fields");
      }
    } catch (const std::out_of_range&) {
      fail("truncated record");
    }
  }
  if (!have_init) fail("missing init record");
  return set;
}

}  // namespace sio
