#include "doctest.h"
#include "fixtures.hpp"
#include "hack/archive.hpp"
#include "hack/params_io.hpp"
#include "hack/tensor_io.hpp"

#include <cstring>

using namespace hack;

TEST_CASE("tensor bytes follow the HCK1 layout") {
  Tensor t;
  t.dims = {2, 3};
  t.data = {1.0f, -2.0f, 3.5f, 0.0f, 1e-7f, 6.0f};
  const auto bytes = encode_tensor(t);
  REQUIRE(bytes.size() == 4 + 4 + 2 * 4 + 6 * 4);
  CHECK(std::memcmp(bytes.data(), "HCK1", 4) == 0);
  auto u32 = [&](std::size_t at) {
    return std::uint32_t(bytes[at]) | std::uint32_t(bytes[at + 1]) << 8 | std::uint32_t(bytes[at + 2]) << 16 |
           std::uint32_t(bytes[at + 3]) << 24;
  };
  CHECK(u32(4) == 2);
  CHECK(u32(8) == 2);
  CHECK(u32(12) == 3);
  float f;
  std::uint32_t raw = u32(16 + 4 * 2);
  std::memcpy(&f, &raw, 4);
  CHECK(f == 3.5f);
  CHECK(decode_tensor(bytes) == t);
}

TEST_CASE("tensor decoding rejects corrupt input") {
  Tensor t;
  t.dims = {4};
  t.data = {1, 2, 3, 4};
  auto bytes = encode_tensor(t);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_tensor(truncated), IoError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_tensor(bad_magic), IoError);
}

TEST_CASE("tensor file round trip and matrix layout") {
  fixtures::TempDir dir("tensor");
  MatrixXd m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  const Tensor t = Tensor::from_matrix(m);
  CHECK(t.data == std::vector<float>{1, 2, 3, 4, 5, 6});
  write_tensor(dir.path() / "m.hck", t);
  const Tensor back = read_tensor(dir.path() / "m.hck");
  CHECK(back == t);
  CHECK(back.to_matrix() == m);
  Vertices v(3, 2);
  v << 1, 2, 3, 4, 5, 6;
  const Tensor tv = Tensor::from_vertices(v);
  CHECK(tv.dims == std::vector<std::uint32_t>{2, 3});
  CHECK(tv.to_vertices() == v);
}

TEST_CASE("shortest decimal formatting round trips") {
  std::mt19937_64 rng(61);
  std::normal_distribution<double> g(0.0, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = g(rng);
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(0.0) == "0");
}

TEST_CASE("params csv round trip") {
  const HackModel& model = fixtures::small_truth().model;
  std::mt19937_64 rng(62);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<FullParams> frames;
  for (int t = 0; t < 5; ++t) {
    FullParams p = FullParams::zeros(model);
    p.beta = VectorXd::NullaryExpr(model.num_betas(), [&] { return g(rng); });
    p.psi = VectorXd::NullaryExpr(model.num_expressions, [&] { return g(rng); });
    p.pose.theta = Eigen::Matrix3Xd::NullaryExpr(3, kNumJoints, [&] { return g(rng); });
    p.larynx = {g(rng), g(rng)};
    frames.push_back(p);
  }
  const std::string csv = params_to_csv(frames);
  CHECK(csv.rfind("frame,beta_0,", 0) == 0);
  const auto back = params_from_csv(csv);
  REQUIRE(back.size() == frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    CHECK(back[t].beta == frames[t].beta);
    CHECK(back[t].psi == frames[t].psi);
    CHECK(back[t].pose.theta == frames[t].pose.theta);
    CHECK(back[t].larynx.eta == frames[t].larynx.eta);
    CHECK(back[t].larynx.tau == frames[t].larynx.tau);
  }
  CHECK(params_to_csv(back) == csv);
  CHECK_THROWS_AS(params_from_csv("frame,beta_0,eta,tau\n0,1,2\n"), Error);
}

TEST_CASE("series csv round trip") {
  MatrixXd s(2, 3);
  s << 0.1, 0.2, 0.3, -1, 1e-20, 7;
  CHECK(series_from_csv(series_to_csv(s, "psi")) == s);
}

TEST_CASE("key value config") {
  const KeyValueConfig c = KeyValueConfig::parse("# comment\nepochs = 10\nlr=0.5 # trailing\nflag=true\nname=abc\nepochs=12\n");
  CHECK(c.get("epochs", 0) == 12);
  CHECK(c.get("lr", 0.0) == 0.5);
  CHECK(c.get("flag", false));
  CHECK(c.get("name", "x") == "abc");
  CHECK(c.get("missing", 3) == 3);
  CHECK(c.unused().empty());
  const KeyValueConfig d = KeyValueConfig::parse("a=1\nb=2\n");
  d.get("a", 0);
  CHECK(d.unused() == std::vector<std::string>{"b"});
  CHECK_THROWS_AS(KeyValueConfig::parse("novalue\n"), Error);
  const KeyValueConfig e = KeyValueConfig::parse("n=abc\n");
  CHECK_THROWS_AS(e.get("n", 0), Error);
  CHECK(KeyValueConfig::parse(c.to_text()).to_text() == c.to_text());
}

TEST_CASE("archive manifest checks format and version") {
  fixtures::TempDir dir("archive");
  {
    ArchiveWriter w(dir.path(), "test-format", 3);
    Tensor t;
    t.dims = {2};
    t.data = {1, 2};
    w.put("x", t, "values");
    w.finish();
  }
  const ArchiveReader r(dir.path(), "test-format", 3);
  CHECK(r.has("x"));
  CHECK_FALSE(r.has("y"));
  CHECK(r.get("x").data == std::vector<float>{1, 2});
  CHECK_THROWS_AS(r.get("y"), IoError);
  CHECK_THROWS_AS(ArchiveReader(dir.path(), "test-format", 4), IoError);
  CHECK_THROWS_AS(ArchiveReader(dir.path(), "other", 3), IoError);
  CHECK_THROWS_AS(ArchiveReader(dir.path() / "missing", "test-format", 3), IoError);
}

TEST_CASE("directory hash depends on names and contents") {
  fixtures::TempDir a("hash_a"), b("hash_b");
  write_text_file(a.path() / "f.txt", "one");
  write_text_file(b.path() / "f.txt", "one");
  CHECK(hash_directory(a.path()) == hash_directory(b.path()));
  write_text_file(b.path() / "f.txt", "two");
  CHECK(hash_directory(a.path()) != hash_directory(b.path()));
  write_text_file(b.path() / "f.txt", "one");
  write_text_file(b.path() / "g.txt", "");
  CHECK(hash_directory(a.path()) != hash_directory(b.path()));
}
