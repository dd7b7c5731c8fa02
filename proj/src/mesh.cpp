#include "hack/mesh.hpp"

#include <Eigen/Geometry>

#include <charconv>
#include <fstream>
#include <sstream>

namespace hack {

std::shared_ptr<const Topology> Topology::create(Faces faces, UvCoords uv, int num_vertices) {
  if (uv.cols() != num_vertices)
    throw DimensionError("mesh: uv count " + std::to_string(uv.cols()) + " != vertex count " +
                         std::to_string(num_vertices));
  for (Eigen::Index f = 0; f < faces.cols(); ++f) {
    for (int c = 0; c < 3; ++c) {
      const int idx = faces(c, f);
      if (idx < 0 || idx >= num_vertices)
        throw DimensionError("mesh: face " + std::to_string(f) + " index " + std::to_string(idx) +
                             " out of range [0, " + std::to_string(num_vertices) + ")");
    }
    if (faces(0, f) == faces(1, f) || faces(1, f) == faces(2, f) || faces(0, f) == faces(2, f))
      throw DimensionError("mesh: degenerate face " + std::to_string(f));
  }
  for (Eigen::Index i = 0; i < uv.cols(); ++i) {
    if (!(uv(0, i) >= 0.0 && uv(0, i) < 1.0 && uv(1, i) >= 0.0 && uv(1, i) < 1.0))
      throw DimensionError("mesh: uv of vertex " + std::to_string(i) + " outside [0,1)^2");
  }
  auto topo = std::make_shared<Topology>();
  topo->faces = std::move(faces);
  topo->uv = std::move(uv);
  std::uint64_t h = fnv1a(topo->faces.data(), sizeof(int) * static_cast<std::size_t>(topo->faces.size()));
  topo->id = fnv1a(topo->uv.data(), sizeof(double) * static_cast<std::size_t>(topo->uv.size()), h);
  topo->vertex_faces.resize(static_cast<std::size_t>(num_vertices));
  for (Eigen::Index f = 0; f < topo->faces.cols(); ++f)
    for (int c = 0; c < 3; ++c) topo->vertex_faces[topo->faces(c, f)].push_back(static_cast<int>(f));
  return topo;
}

Mesh::Mesh(Vertices vertices, Faces faces, UvCoords uv)
    : vertices_(std::move(vertices)),
      topology_(Topology::create(std::move(faces), std::move(uv), static_cast<int>(vertices_.cols()))) {}

Mesh::Mesh(Vertices vertices, std::shared_ptr<const Topology> topology)
    : vertices_(std::move(vertices)), topology_(std::move(topology)) {
  if (!topology_ || topology_->uv.cols() != vertices_.cols())
    throw DimensionError("mesh: vertex count does not match topology");
}

Mesh Mesh::with_vertices(Vertices vertices) const { return Mesh(std::move(vertices), topology_); }

void require_same_topology(const Mesh& a, const Mesh& b, const char* context) {
  if (a.num_vertices() != b.num_vertices() || a.topology_id() != b.topology_id())
    throw DimensionError(std::string(context) + ": topology mismatch");
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

[[noreturn]] void parse_fail(const std::string& src, int line, const std::string& msg) {
  throw IoError(src + ":" + std::to_string(line) + ": " + msg);
}

double parse_number(std::string_view tok, const std::string& src, int line) {
  double v = 0.0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    parse_fail(src, line, "bad number '" + std::string(tok) + "'");
  return v;
}

}  // namespace

std::string to_obj_string(const Mesh& mesh) {
  std::string out;
  out.reserve(static_cast<std::size_t>(mesh.num_vertices()) * 80);
  const auto& v = mesh.vertices();
  for (int i = 0; i < mesh.num_vertices(); ++i)
    out += "v " + fmt_double(v(0, i)) + " " + fmt_double(v(1, i)) + " " + fmt_double(v(2, i)) + "\n";
  const auto& uv = mesh.uv();
  for (int i = 0; i < mesh.num_vertices(); ++i)
    out += "vt " + fmt_double(uv(0, i)) + " " + fmt_double(uv(1, i)) + "\n";
  const auto& f = mesh.faces();
  for (int j = 0; j < mesh.num_faces(); ++j) {
    out += "f";
    for (int c = 0; c < 3; ++c) {
      const std::string idx = std::to_string(f(c, j) + 1);
      out += " " + idx + "/" + idx;
    }
    out += "\n";
  }
  return out;
}

void save_obj(const Mesh& mesh, const std::filesystem::path& path) {
  if (path.empty()) throw IoError("save_obj: empty path");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("save_obj: cannot open " + path.string());
  const std::string text = to_obj_string(mesh);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw IoError("save_obj: write failed " + path.string());
}

Mesh parse_obj(const std::string& text, const std::string& src) {
  std::vector<double> pos, tex;
  std::vector<int> face_idx;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      std::string a, b, c;
      if (!(ls >> a >> b >> c)) parse_fail(src, lineno, "vertex needs 3 coordinates");
      pos.push_back(parse_number(a, src, lineno));
      pos.push_back(parse_number(b, src, lineno));
      pos.push_back(parse_number(c, src, lineno));
    } else if (tag == "vt") {
      std::string a, b;
      if (!(ls >> a >> b)) parse_fail(src, lineno, "texture coordinate needs 2 values");
      tex.push_back(parse_number(a, src, lineno));
      tex.push_back(parse_number(b, src, lineno));
    } else if (tag == "f") {
      std::string tok;
      int count = 0;
      while (ls >> tok) {
        const auto slash = tok.find('/');
        const std::string vpart = tok.substr(0, slash);
        int vi = 0;
        auto res = std::from_chars(vpart.data(), vpart.data() + vpart.size(), vi);
        if (res.ec != std::errc() || vi <= 0) parse_fail(src, lineno, "bad face index '" + tok + "'");
        if (slash != std::string::npos) {
          const auto rest = tok.substr(slash + 1);
          const std::string tpart = rest.substr(0, rest.find('/'));
          if (!tpart.empty() && tpart != vpart)
            parse_fail(src, lineno, "vt index must equal v index (one uv per vertex)");
        }
        face_idx.push_back(vi - 1);
        ++count;
      }
      if (count != 3) parse_fail(src, lineno, "only triangles are supported");
    }
  }
  const int n = static_cast<int>(pos.size() / 3);
  if (tex.size() / 2 != pos.size() / 3)
    throw IoError(src + ": missing UVs (" + std::to_string(tex.size() / 2) + " vt for " + std::to_string(n) +
                  " v)");
  Vertices v = Eigen::Map<const Vertices>(pos.data(), 3, n);
  UvCoords uv = Eigen::Map<const UvCoords>(tex.data(), 2, n);
  Faces f = Eigen::Map<const Faces>(face_idx.data(), 3, static_cast<Eigen::Index>(face_idx.size() / 3));
  for (Eigen::Index j = 0; j < f.cols(); ++j)
    for (int c = 0; c < 3; ++c)
      if (f(c, j) >= n)
        throw IoError(src + ": face " + std::to_string(j) + " index " + std::to_string(f(c, j) + 1) +
                      " out of range (" + std::to_string(n) + " vertices)");
  try {
    return Mesh(std::move(v), std::move(f), std::move(uv));
  } catch (const DimensionError& e) {
    throw IoError(src + ": " + e.what());
  }
}

Mesh load_obj(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_obj: cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_obj(ss.str(), path.string());
}

Vertices vertex_normals(const Mesh& mesh) {
  Vertices n = Vertices::Zero(3, mesh.num_vertices());
  const auto& v = mesh.vertices();
  const auto& f = mesh.faces();
  for (int j = 0; j < mesh.num_faces(); ++j) {
    const Eigen::Vector3d a = v.col(f(0, j)), b = v.col(f(1, j)), c = v.col(f(2, j));
    const Eigen::Vector3d fn = (b - a).cross(c - a);
    for (int k = 0; k < 3; ++k) n.col(f(k, j)) += fn;
  }
  for (int i = 0; i < n.cols(); ++i) {
    const double len = n.col(i).norm();
    if (len > 0.0) n.col(i) /= len;
  }
  return n;
}

}  // namespace hack
