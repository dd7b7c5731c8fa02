#pragma once

#include "hack/model.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace hack {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// `frame,beta_0..,psi_0..,theta_0..,eta,tau`, one row per frame.
std::string params_to_csv(const std::vector<FullParams>& frames);
std::vector<FullParams> params_from_csv(const std::string& text, const std::string& source = "<memory>");
void write_params_csv(const std::filesystem::path& path, const std::vector<FullParams>& frames);
std::vector<FullParams> read_params_csv(const std::filesystem::path& path);

/// `frame,<name>_0,..` for a channels x T block.
std::string series_to_csv(const MatrixXd& series, const std::string& name);
MatrixXd series_from_csv(const std::string& text, const std::string& source = "<memory>");

/// key=value lines; `#` starts a comment. Later keys override earlier ones.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& source = "<memory>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  double get(const std::string& key, double fallback) const;
  int get(const std::string& key, int fallback) const;
  bool get(const std::string& key, bool fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  std::string get(const std::string& key, const char* fallback) const { return get(key, std::string(fallback)); }
  /// Keys never read through a getter.
  std::vector<std::string> unused() const;
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> used_;
  std::string source_;
};

}  // namespace hack
