#pragma once

#include "hack/common.hpp"

#include <filesystem>
#include <memory>
#include <vector>

namespace hack {

/// Connectivity and texture layout shared by every mesh registered to the
/// same template.
struct Topology {
  Faces faces;
  UvCoords uv;
  std::uint64_t id = 0;
  /// Faces incident to each vertex.
  std::vector<std::vector<int>> vertex_faces;

  /// Validates faces/uv against `num_vertices` and fills id + adjacency.
  static std::shared_ptr<const Topology> create(Faces faces, UvCoords uv, int num_vertices);
};

/// Fixed-topology triangle mesh in millimeters. Immutable once built.
class Mesh {
 public:
  Mesh() = default;
  Mesh(Vertices vertices, Faces faces, UvCoords uv);
  Mesh(Vertices vertices, std::shared_ptr<const Topology> topology);

  const Vertices& vertices() const { return vertices_; }
  const Faces& faces() const { return topology_->faces; }
  const UvCoords& uv() const { return topology_->uv; }
  const Topology& topology() const { return *topology_; }
  const std::shared_ptr<const Topology>& shared_topology() const { return topology_; }
  std::uint64_t topology_id() const { return topology_->id; }

  int num_vertices() const { return static_cast<int>(vertices_.cols()); }
  int num_faces() const { return static_cast<int>(topology_->faces.cols()); }

  /// Same topology, new positions.
  Mesh with_vertices(Vertices vertices) const;

 private:
  Vertices vertices_;
  std::shared_ptr<const Topology> topology_;
};

/// Throws DimensionError unless both meshes share one topology.
void require_same_topology(const Mesh& a, const Mesh& b, const char* context);

/// Wavefront OBJ with v/vt/f records, triangles only, one vt per v.
Mesh load_obj(const std::filesystem::path& path);
void save_obj(const Mesh& mesh, const std::filesystem::path& path);
std::string to_obj_string(const Mesh& mesh);
Mesh parse_obj(const std::string& text, const std::string& source_name = "<memory>");

/// Area-weighted vertex normals (unit length, outward for CCW faces).
Vertices vertex_normals(const Mesh& mesh);

}  // namespace hack
