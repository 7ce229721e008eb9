#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tail/dpca.hpp"

#include <Eigen/Dense>

#include <cmath>
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

Eigen::MatrixXd to_eigen(const Mat& a) {
  Eigen::MatrixXd e(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) e(i, j) = a(i, j);
  return e;
}

} // namespace

TEST_CASE("orthogonal columns: singular values and decoder in closed form") {
  // H = [3 e1, 2 e2]: sigma = {3, 2}, left singular vectors e1, e2
  Mat H(4, 2);
  H(0, 0) = 3.0;
  H(1, 1) = 2.0;
  auto proj = fit({H, {}}, 2);
  CHECK(proj.singular_values[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(proj.singular_values[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(proj.T_D(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(proj.T_D(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(proj.T_D(2, 0)) < 1e-12);
  CHECK(std::abs(proj.T_D(3, 1)) < 1e-12);
}

TEST_CASE("single column: rank-one closed form") {
  Mat H(3, 1);
  H(0, 0) = 1.0;
  H(1, 0) = 2.0;
  H(2, 0) = 2.0;
  auto proj = fit({H, {}}, 1);
  CHECK(proj.singular_values[0] == doctest::Approx(3.0).epsilon(1e-12));
  // decoder is the normalized column (sign convention: largest entry positive)
  CHECK(proj.T_D(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(proj.T_D(1, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  Vec col = {1.0, 2.0, 2.0};
  Vec rec = decode(proj, encode(proj, col));
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(rec[i] == doctest::Approx(col[i]).epsilon(1e-12));
}

TEST_CASE("bi-orthogonality T_E T_D = I") {
  Mat H = random_mat(50, 12, 3);
  for (std::size_t n_l : {1, 5, 12}) {
    auto proj = fit({H, {}}, n_l);
    Mat I = proj.T_E * proj.T_D;
    for (std::size_t i = 0; i < n_l; ++i)
      for (std::size_t j = 0; j < n_l; ++j)
        CHECK(std::abs(I(i, j) - (i == j ? 1.0 : 0.0)) < 1e-10);
  }
}

TEST_CASE("full-rank projector reconstructs training columns exactly") {
  Mat H = random_mat(40, 8, 4);
  auto proj = fit({H, {}}, 8);
  Vec errs = reconstruction_error(proj, H);
  for (double e : errs) CHECK(e < 1e-10);
}

TEST_CASE("reconstruction error matches discarded singular values") {
  // Eckart-Young: sum of squared column residuals = sum of discarded sigma^2
  Mat H = random_mat(60, 10, 5);
  auto full = fit({H, {}}, 10);
  for (std::size_t n_l : {2, 5, 8}) {
    auto proj = fit({H, {}}, n_l);
    Vec errs = reconstruction_error(proj, H);
    double total = 0.0;
    for (double e : errs) total += e * e;
    double expect = 0.0;
    for (std::size_t i = n_l; i < 10; ++i)
      expect += full.singular_values[i] * full.singular_values[i];
    CHECK(total == doctest::Approx(expect).epsilon(1e-8));
  }
}

TEST_CASE("dual eigenproblem agrees with a direct SVD oracle") {
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    Mat H = random_mat(80, 15, seed);
    auto proj = fit({H, {}}, 6);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(H), Eigen::ComputeThinU);
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(proj.singular_values[j] ==
            doctest::Approx(svd.singularValues()(long(j))).epsilon(1e-8));
      // align the oracle column to the library's sign convention
      double peak = 0.0;
      long arg = 0;
      for (long i = 0; i < 80; ++i)
        if (std::abs(svd.matrixU()(i, long(j))) > peak) {
          peak = std::abs(svd.matrixU()(i, long(j)));
          arg = i;
        }
      const double sign = svd.matrixU()(arg, long(j)) > 0 ? 1.0 : -1.0;
      for (long i = 0; i < 80; ++i)
        CHECK(std::abs(proj.T_D(std::size_t(i), j) -
                       sign * svd.matrixU()(i, long(j))) < 1e-8);
    }
  }
}

TEST_CASE("projector is idempotent") {
  Mat H = random_mat(30, 9, 6);
  auto proj = fit({H, {}}, 4);
  Vec x = Vec(30, 0.0);
  for (std::size_t i = 0; i < 30; ++i) x[i] = std::sin(double(i));
  Vec once = decode(proj, encode(proj, x));
  Vec twice = decode(proj, encode(proj, once));
  for (std::size_t i = 0; i < 30; ++i)
    CHECK(twice[i] == doctest::Approx(once[i]).epsilon(1e-10));
}

TEST_CASE("fit is deterministic") {
  Mat H = random_mat(45, 11, 7);
  auto a = fit({H, {}}, 5);
  auto b = fit({H, {}}, 5);
  CHECK(a.T_E == b.T_E);
  CHECK(a.T_D == b.T_D);
  CHECK(a.singular_values == b.singular_values);
  CHECK(a.dataset_fingerprint == b.dataset_fingerprint);
}

TEST_CASE("rank deficiency raises RankError") {
  Mat H(20, 3);
  for (std::size_t i = 0; i < 20; ++i) {
    H(i, 0) = double(i);
    H(i, 1) = 2.0 * double(i);  // linearly dependent
    H(i, 2) = double(i) + 1.0;
  }
  CHECK_THROWS_AS(fit({H, {}}, 3), RankError);
  CHECK_NOTHROW(fit({H, {}}, 2));
}

TEST_CASE("requesting more components than columns is rejected") {
  Mat H = random_mat(10, 4, 8);
  CHECK_THROWS(fit({H, {}}, 5));
  CHECK_THROWS(fit({H, {}}, 0));
}

TEST_CASE("mean centering stores the column mean") {
  Mat H = random_mat(12, 6, 9);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 0; j < 6; ++j) H(i, j) += 10.0;  // strong offset
  auto proj = fit({H, {}}, 3, true);
  REQUIRE(proj.mean.size() == 12);
  for (double m : proj.mean) CHECK(m > 8.0);
  // centered encode/decode roundtrip of a training column stays close
  Vec col(12);
  for (std::size_t i = 0; i < 12; ++i) col[i] = H(i, 2);
  Vec rec = decode(proj, encode(proj, col));
  CHECK(norm2(rec - col) < norm2(col));
}

TEST_CASE("projector JSON roundtrip") {
  Mat H = random_mat(25, 7, 10);
  auto proj = fit({H, {}}, 4);
  auto back = projector_from_json(to_json(proj));
  CHECK(back.T_E == proj.T_E);
  CHECK(back.T_D == proj.T_D);
  CHECK(back.n_l == proj.n_l);
  CHECK(back.singular_values == proj.singular_values);
  CHECK(back.dataset_fingerprint == proj.dataset_fingerprint);
}
