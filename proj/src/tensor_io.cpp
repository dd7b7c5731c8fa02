#include "hack/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace hack {
namespace {

constexpr char kMagic[4] = {'H', 'C', 'K', '1'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::vector<unsigned char>& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw IoError("tensor: truncated header");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

}  // namespace

std::size_t Tensor::numel() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

Tensor Tensor::from_matrix(const MatrixXd& m) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  t.data.resize(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.data[k++] = static_cast<float>(m(r, c));
  return t;
}

Tensor Tensor::from_vertices(const Vertices& v) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(v.cols()), 3u};
  t.data.resize(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) t.data[i] = static_cast<float>(v.data()[i]);
  return t;
}

Tensor Tensor::from_vector(const VectorXd& v) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(v.size())};
  t.data.resize(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) t.data[i] = static_cast<float>(v[i]);
  return t;
}

MatrixXd Tensor::to_matrix() const {
  require_dims(dims.size() == 2, "tensor: expected rank 2");
  MatrixXd m(dims[0], dims[1]);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = data[k++];
  return m;
}

Vertices Tensor::to_vertices() const {
  require_dims(dims.size() == 2 && dims[1] == 3, "tensor: expected N x 3 vertices");
  Vertices v(3, dims[0]);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = data[i];
  return v;
}

VectorXd Tensor::to_vector() const {
  VectorXd v(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) v[static_cast<Eigen::Index>(i)] = data[i];
  return v;
}

std::vector<unsigned char> encode_tensor(const Tensor& t) {
  if (t.numel() != t.data.size()) throw DimensionError("tensor: dims do not match payload size");
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) put_u32(out, d);
  out.reserve(out.size() + 4 * t.data.size());
  for (float f : t.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

Tensor decode_tensor(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw IoError("tensor: bad magic (expected HCK1)");
  std::size_t pos = 4;
  Tensor t;
  const std::uint32_t rank = get_u32(bytes, pos);
  t.dims.resize(rank);
  for (auto& d : t.dims) d = get_u32(bytes, pos);
  const std::size_t n = t.numel();
  if (bytes.size() != pos + 4 * n) throw IoError("tensor: payload size does not match dims");
  t.data.resize(n);
  for (auto& f : t.data) f = std::bit_cast<float>(get_u32(bytes, pos));
  return t;
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode_tensor(t);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open tensor: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace hack
