#include "hack/params_io.hpp"

#include "hack/archive.hpp"

#include <charconv>
#include <sstream>

namespace hack {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_number(const std::string& s, const std::string& where) {
  const std::string t = trim(s);
  double v = 0.0;
  auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) throw IoError(where + ": not a number: '" + t + "'");
  return v;
}

int count_prefix(const std::vector<std::string>& header, const std::string& prefix) {
  int n = 0;
  for (const auto& h : header)
    if (h.rfind(prefix, 0) == 0) ++n;
  return n;
}

}  // namespace

std::string params_to_csv(const std::vector<FullParams>& frames) {
  std::ostringstream out;
  const int B = frames.empty() ? 0 : static_cast<int>(frames.front().beta.size());
  const int P = frames.empty() ? 0 : static_cast<int>(frames.front().psi.size());
  const int T = frames.empty() ? 0 : static_cast<int>(frames.front().pose.theta.size());
  out << "frame";
  for (int i = 0; i < B; ++i) out << ",beta_" << i;
  for (int i = 0; i < P; ++i) out << ",psi_" << i;
  for (int i = 0; i < T; ++i) out << ",theta_" << i;
  out << ",eta,tau\n";
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const FullParams& p = frames[f];
    require_dims(p.beta.size() == B && p.psi.size() == P && p.pose.theta.size() == T,
                 "params csv: frame " + std::to_string(f) + " has different parameter counts");
    out << f;
    for (int i = 0; i < B; ++i) out << ',' << format_double(p.beta[i]);
    for (int i = 0; i < P; ++i) out << ',' << format_double(p.psi[i]);
    for (int i = 0; i < T; ++i) out << ',' << format_double(p.pose.theta.data()[i]);
    out << ',' << format_double(p.larynx.eta) << ',' << format_double(p.larynx.tau) << '\n';
  }
  return out.str();
}

std::vector<FullParams> params_from_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError(source + ": empty params csv");
  std::vector<std::string> header = split(trim(line), ',');
  for (auto& h : header) h = trim(h);
  if (header.empty() || header.front() != "frame") throw IoError(source + ": header must start with 'frame'");
  const int B = count_prefix(header, "beta_");
  const int P = count_prefix(header, "psi_");
  const int T = count_prefix(header, "theta_");
  if (T % 3 != 0) throw IoError(source + ": theta column count must be a multiple of 3");
  if (static_cast<int>(header.size()) != 1 + B + P + T + 2 || header[header.size() - 2] != "eta" ||
      header.back() != "tau")
    throw IoError(source + ": header must be frame,beta_*,psi_*,theta_*,eta,tau");
  std::vector<FullParams> frames;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    const std::string where = source + ":" + std::to_string(lineno);
    if (cells.size() != header.size())
      throw IoError(where + ": expected " + std::to_string(header.size()) + " columns, got " +
                    std::to_string(cells.size()));
    FullParams p;
    p.beta.resize(B);
    p.psi.resize(P);
    p.pose.theta.resize(3, T / 3);
    std::size_t c = 1;
    for (int i = 0; i < B; ++i) p.beta[i] = parse_number(cells[c++], where);
    for (int i = 0; i < P; ++i) p.psi[i] = parse_number(cells[c++], where);
    for (int i = 0; i < T; ++i) p.pose.theta.data()[i] = parse_number(cells[c++], where);
    p.larynx.eta = parse_number(cells[c++], where);
    p.larynx.tau = parse_number(cells[c++], where);
    frames.push_back(std::move(p));
  }
  return frames;
}

void write_params_csv(const std::filesystem::path& path, const std::vector<FullParams>& frames) {
  write_text_file(path, params_to_csv(frames));
}

std::vector<FullParams> read_params_csv(const std::filesystem::path& path) {
  return params_from_csv(read_text_file(path), path.string());
}

std::string series_to_csv(const MatrixXd& series, const std::string& name) {
  std::ostringstream out;
  out << "frame";
  for (Eigen::Index c = 0; c < series.rows(); ++c) out << ',' << name << '_' << c;
  out << '\n';
  for (Eigen::Index t = 0; t < series.cols(); ++t) {
    out << t;
    for (Eigen::Index c = 0; c < series.rows(); ++c) out << ',' << format_double(series(c, t));
    out << '\n';
  }
  return out.str();
}

MatrixXd series_from_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError(source + ": empty csv");
  const auto header = split(trim(line), ',');
  if (header.empty() || trim(header.front()) != "frame") throw IoError(source + ": header must start with 'frame'");
  const Eigen::Index C = static_cast<Eigen::Index>(header.size()) - 1;
  std::vector<VectorXd> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    const std::string where = source + ":" + std::to_string(lineno);
    if (static_cast<Eigen::Index>(cells.size()) != C + 1)
      throw IoError(where + ": expected " + std::to_string(C + 1) + " columns");
    VectorXd r(C);
    for (Eigen::Index c = 0; c < C; ++c) r[c] = parse_number(cells[static_cast<std::size_t>(c + 1)], where);
    rows.push_back(r);
  }
  MatrixXd out(C, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t) out.col(static_cast<Eigen::Index>(t)) = rows[t];
  return out;
}

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& source) {
  KeyValueConfig cfg;
  cfg.source_ = source;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError(source + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw IoError(source + ":" + std::to_string(lineno) + ": empty key");
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  return parse(read_text_file(path), path.string());
}

double KeyValueConfig::get(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  used_[key] = true;
  return parse_number(it->second, source_ + ": " + key);
}

int KeyValueConfig::get(const std::string& key, int fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  used_[key] = true;
  int v = 0;
  const std::string& s = it->second;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError(source_ + ": " + key + ": not an integer: '" + s + "'");
  return v;
}

bool KeyValueConfig::get(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  used_[key] = true;
  const std::string& s = it->second;
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw IoError(source_ + ": " + key + ": not a boolean: '" + s + "'");
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  used_[key] = true;
  std::uint64_t v = 0;
  const std::string& s = it->second;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError(source_ + ": " + key + ": not an unsigned integer: '" + s + "'");
  return v;
}

std::string KeyValueConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  used_[key] = true;
  return it->second;
}

std::vector<std::string> KeyValueConfig::unused() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (!used_.count(k)) out.push_back(k);
  return out;
}

std::string KeyValueConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

}  // namespace hack
