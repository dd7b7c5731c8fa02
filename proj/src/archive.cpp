#include "hack/archive.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <vector>

namespace hack {

namespace fs = std::filesystem;

ArchiveWriter::ArchiveWriter(fs::path dir, std::string format, int version) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw IoError("archive: cannot create " + dir_.string() + ": " + ec.message());
  manifest_["format"] = std::move(format);
  manifest_["version"] = version;
  manifest_["tensors"] = nlohmann::json::array();
}

void ArchiveWriter::put(const std::string& name, const Tensor& t, const std::string& role) {
  const std::string file = name + ".hck";
  write_tensor(dir_ / file, t);
  manifest_["tensors"].push_back({{"name", name}, {"file", file}, {"dims", t.dims}, {"role", role}});
}

void ArchiveWriter::finish() { write_text_file(dir_ / "manifest.json", manifest_.dump(2) + "\n"); }

ArchiveReader::ArchiveReader(fs::path dir, const std::string& format, int version) : dir_(std::move(dir)) {
  const fs::path path = dir_ / "manifest.json";
  if (!fs::exists(path)) throw IoError("archive: missing manifest " + path.string());
  try {
    manifest_ = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("archive: malformed manifest " + path.string() + ": " + e.what());
  }
  const std::string got = manifest_.value("format", std::string());
  if (got != format) throw IoError("archive: format '" + got + "' where '" + format + "' was expected");
  const int v = manifest_.value("version", -1);
  if (v != version)
    throw IoError("archive: version mismatch: archive has version " + std::to_string(v) + ", reader supports " +
                  std::to_string(version));
}

const nlohmann::json* ArchiveReader::entry(const std::string& name) const {
  for (const auto& t : manifest_["tensors"])
    if (t.value("name", std::string()) == name) return &t;
  return nullptr;
}

bool ArchiveReader::has(const std::string& name) const { return entry(name) != nullptr; }

Tensor ArchiveReader::get(const std::string& name) const {
  const auto* e = entry(name);
  if (e == nullptr) throw IoError("archive: missing tensor '" + name + "' in manifest");
  const fs::path file = dir_ / (*e)["file"].get<std::string>();
  if (!fs::exists(file)) throw IoError("archive: missing tensor file " + file.string() + " for '" + name + "'");
  Tensor t = read_tensor(file);
  const auto dims = (*e)["dims"].get<std::vector<std::uint32_t>>();
  if (dims != t.dims) throw DimensionError("archive: tensor '" + name + "' dims disagree with its manifest entry");
  return t;
}

std::uint64_t hash_directory(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  std::uint64_t h = fnv1a(nullptr, 0);
  for (const auto& f : files) {
    const std::string name = f.generic_string();
    h = fnv1a(name.data(), name.size(), h);
    const std::string body = read_text_file(dir / f);
    h = fnv1a(body.data(), body.size(), h);
  }
  return h;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace hack
