#pragma once

#include "hack/tensor_io.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace hack {

/// Directory of HCK1 tensor files indexed by manifest.json. Each tensor
/// entry carries name, file, dims and a semantic role.
class ArchiveWriter {
 public:
  ArchiveWriter(std::filesystem::path dir, std::string format, int version);

  void put(const std::string& name, const Tensor& t, const std::string& role);
  nlohmann::json& meta() { return manifest_; }
  /// Writes manifest.json; call once after every put.
  void finish();

 private:
  std::filesystem::path dir_;
  nlohmann::json manifest_;
};

class ArchiveReader {
 public:
  /// Throws IoError on a missing manifest, wrong format or version.
  ArchiveReader(std::filesystem::path dir, const std::string& format, int version);

  bool has(const std::string& name) const;
  /// Reads a tensor and checks its dims against the manifest entry.
  Tensor get(const std::string& name) const;
  const nlohmann::json& meta() const { return manifest_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  const nlohmann::json* entry(const std::string& name) const;
  std::filesystem::path dir_;
  nlohmann::json manifest_;
};

/// FNV-1a over every regular file (sorted relative paths and contents).
std::uint64_t hash_directory(const std::filesystem::path& dir);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace hack
