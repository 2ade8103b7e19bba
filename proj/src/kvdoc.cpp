#include "sio/kvdoc.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sio/util.hpp"

namespace sio {

static std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void KvDoc::set_int(const std::string& key, long long v) {
  entries_.emplace_back(key, std::to_string(v));
}

void KvDoc::set_double(const std::string& key, double v) {
  entries_.emplace_back(key, fmt_double(v));
}

void KvDoc::set_string(const std::string& key, const std::string& v) {
  entries_.emplace_back(key, v);
}

void KvDoc::set_vector(const std::string& key, const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += fmt_double(v[i]);
  }
  entries_.emplace_back(key, out);
}

bool KvDoc::has(const std::string& key) const {
  for (const auto& [k, _] : entries_)
    if (k == key) return true;
  return false;
}

const std::string& KvDoc::raw(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  throw std::out_of_range("KvDoc: missing key '" + key + "'");
}

long long KvDoc::get_int(const std::string& key) const {
  return std::stoll(raw(key));
}

double KvDoc::get_double(const std::string& key) const {
  return parse_double(raw(key));
}

std::string KvDoc::get_string(const std::string& key) const {
  return raw(key);
}

Eigen::VectorXd KvDoc::get_vector(const std::string& key) const {
  const auto toks = split_ws(raw(key));
  Eigen::VectorXd v(static_cast<Eigen::Index>(toks.size()));
  for (std::size_t i = 0; i < toks.size(); ++i) v[i] = parse_double(toks[i]);
  return v;
}

std::string KvDoc::serialize() const {
  std::string out = "#kv " + doc_type_ + " v" + std::to_string(version_) + "\n";
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

KvDoc KvDoc::parse(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line.rfind("#kv ", 0) != 0)
    throw std::runtime_error("KvDoc: missing '#kv <type> v<N>' header");
  const auto toks = split_ws(line.substr(4));
  if (toks.size() != 2 || toks[1].size() < 2 || toks[1][0] != 'v')
    throw std::runtime_error("KvDoc: malformed header '" + line + "'");
  KvDoc doc(toks[0], std::stoi(toks[1].substr(1)));
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos)
      throw std::runtime_error("KvDoc: line " + std::to_string(lineno) +
                               " is not 'key = value'");
    doc.entries_.emplace_back(trim(line.substr(0, eq)),
                              trim(line.substr(eq + 3)));
  }
  return doc;
}

void KvDoc::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("KvDoc: cannot write '" + path + "'");
  os << serialize();
}

KvDoc KvDoc::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("KvDoc: cannot read '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse(buf.str());
}

}  // namespace sio
