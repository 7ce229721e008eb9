#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tail/matrix.hpp"

#include <Eigen/Dense>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>

using namespace tail;

namespace {

Mat random_mat(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Mat m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

} // namespace

TEST_CASE("matrix product matches Eigen") {
  Mat a = random_mat(9, 14, 1), b = random_mat(14, 6, 2);
  Mat c = a * b;
  Eigen::MatrixXd ea(9, 14), eb(14, 6);
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 14; ++j) ea(i, j) = a(i, j);
  for (int i = 0; i < 14; ++i)
    for (int j = 0; j < 6; ++j) eb(i, j) = b(i, j);
  Eigen::MatrixXd ec = ea * eb;
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 6; ++j) CHECK(c(i, j) == doctest::Approx(ec(i, j)).epsilon(1e-12));
}

TEST_CASE("transpose involution and shape") {
  Mat a = random_mat(5, 8, 3);
  Mat att = transpose(transpose(a));
  CHECK(att == a);
  CHECK(transpose(a).rows() == 8);
  CHECK(transpose(a).cols() == 5);
}

TEST_CASE("dimension mismatch raises DimensionError") {
  Mat a(3, 4), b(5, 6);
  CHECK_THROWS_AS(a + b, DimensionError);
  CHECK_THROWS_AS(a * b, DimensionError);
  CHECK_THROWS_AS(a * Vec(3, 0.0), DimensionError);
}

TEST_CASE("norms") {
  Vec v = {3.0, -4.0};
  CHECK(norm2(v) == doctest::Approx(5.0));
  CHECK(norm_inf(v) == doctest::Approx(4.0));
  CHECK(all_finite(v));
  v.push_back(std::nan(""));
  CHECK(!all_finite(v));
}

TEST_CASE("sigma_max exact on diagonal matrix") {
  Mat d(3, 3);
  d(0, 0) = 2.0;
  d(1, 1) = -7.0;
  d(2, 2) = 0.5;
  CHECK(sigma_max(d) == doctest::Approx(7.0).epsilon(1e-10));
}

TEST_CASE("sigma_max matches Eigen JacobiSVD on random matrices") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    Mat a = random_mat(20, 15, seed);
    Eigen::MatrixXd ea(20, 15);
    for (int i = 0; i < 20; ++i)
      for (int j = 0; j < 15; ++j) ea(i, j) = a(i, j);
    const double ref = Eigen::JacobiSVD<Eigen::MatrixXd>(ea).singularValues()(0);
    CHECK(sigma_max(a) == doctest::Approx(ref).epsilon(1e-9));
  }
}

TEST_CASE("save/load roundtrip is exact") {
  Mat a = random_mat(7, 11, 42);
  const std::string path = "tmp_mat_roundtrip.tmat";
  save_mat(a, path);
  Mat b = load_mat(path);
  CHECK(a == b);
  std::remove(path.c_str());
}

TEST_CASE("matrix file header is 16 bytes little-endian with magic and dtype") {
  Mat a(2, 3);
  a(0, 0) = 1.5;
  const std::string path = "tmp_mat_header.tmat";
  save_mat(a, path);
  std::ifstream in(path, std::ios::binary);
  unsigned char hdr[16];
  in.read(reinterpret_cast<char*>(hdr), 16);
  CHECK(std::memcmp(hdr, "TMAT", 4) == 0);
  auto u32 = [&](int off) {
    return std::uint32_t(hdr[off]) | std::uint32_t(hdr[off + 1]) << 8 |
           std::uint32_t(hdr[off + 2]) << 16 | std::uint32_t(hdr[off + 3]) << 24;
  };
  CHECK(u32(4) == 1);  // dtype f64
  CHECK(u32(8) == 2);  // rows
  CHECK(u32(12) == 3); // cols
  double first = 0.0;
  in.read(reinterpret_cast<char*>(&first), 8);
  CHECK(first == 1.5);
  std::remove(path.c_str());
}

TEST_CASE("load rejects corrupted magic") {
  const std::string path = "tmp_mat_bad.tmat";
  {
    std::ofstream out(path, std::ios::binary);
    out << "JUNKJUNKJUNKJUNKJUNK";
  }
  CHECK_THROWS(load_mat(path));
  std::remove(path.c_str());
}
