// Versioned key-value text document used for model and GMM checkpoints.
//
// Format: first line "#kv <doc-type> v<version>", then one "key = value"
// per line in insertion order. Values are scalars, strings, or
// whitespace-separated numeric vectors printed with round-trippable
// precision, so save -> load -> save is byte-exact.

#ifndef SIO_KVDOC_HPP
#define SIO_KVDOC_HPP

#include <string>
#include <vector>

#include <Eigen/Core>

namespace sio {

class KvDoc {
 public:
  KvDoc() = default;
  KvDoc(std::string doc_type, int version)
      : doc_type_(std::move(doc_type)), version_(version) {}

  const std::string& doc_type() const { return doc_type_; }
  int version() const { return version_; }

  void set_int(const std::string& key, long long v);
  void set_double(const std::string& key, double v);
  void set_string(const std::string& key, const std::string& v);
  void set_vector(const std::string& key, const Eigen::VectorXd& v);

  bool has(const std::string& key) const;
  long long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  Eigen::VectorXd get_vector(const std::string& key) const;

  std::string serialize() const;
  static KvDoc parse(const std::string& text);

  void save(const std::string& path) const;
  static KvDoc load(const std::string& path);

 private:
  const std::string& raw(const std::string& key) const;

  std::string doc_type_ = "generic";
  int version_ = 1;
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace sio

#endif  // SIO_KVDOC_HPP
