#include "tail/matrix.hpp"

#include "tail/kernels.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>

namespace tail {

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

namespace {
void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": shape mismatch");
}
} // namespace

Mat operator+(const Mat& a, const Mat& b) {
  check_same_shape(a, b, "mat add");
  Mat c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows() * a.cols(); ++i)
    c.data()[i] = a.data()[i] + b.data()[i];
  return c;
}

Mat operator-(const Mat& a, const Mat& b) {
  check_same_shape(a, b, "mat sub");
  Mat c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows() * a.cols(); ++i)
    c.data()[i] = a.data()[i] - b.data()[i];
  return c;
}

Mat operator*(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) throw DimensionError("mat mul: inner dims differ");
  Mat c(a.rows(), b.cols());
  kernels::gemm(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

Mat operator*(double s, const Mat& a) {
  Mat c(a.rows(), a.cols());
  kernels::scale(s, a.data(), c.data(), a.rows() * a.cols());
  return c;
}

Vec operator*(const Mat& a, const Vec& x) {
  if (a.cols() != x.size()) throw DimensionError("mat-vec: dims differ");
  Vec y(a.rows());
  kernels::gemv(a.data(), a.rows(), a.cols(), x.data(), y.data());
  return y;
}

Mat transpose(const Mat& a) {
  Mat t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Vec operator+(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw DimensionError("vec add: size mismatch");
  Vec c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] + b[i];
  return c;
}

Vec operator-(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw DimensionError("vec sub: size mismatch");
  Vec c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] - b[i];
  return c;
}

Vec operator*(double s, const Vec& a) {
  Vec c(a.size());
  kernels::scale(s, a.data(), c.data(), a.size());
  return c;
}

double norm2(const Vec& v) {
  return std::sqrt(kernels::dot(v.data(), v.data(), v.size()));
}

double norm_inf(const Vec& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double max_abs(const Mat& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows() * a.cols(); ++i)
    m = std::max(m, std::abs(a.data()[i]));
  return m;
}

bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

double sigma_max(const Mat& a, int iters, double tol) {
  if (a.empty()) return 0.0;
  const std::size_t n = a.cols();
  Vec x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = 1.0 + 0.5 * std::cos(double(i));
  double nx = norm2(x);
  for (std::size_t i = 0; i < n; ++i) x[i] /= nx;
  double sigma = 0.0;
  Mat at = transpose(a);
  for (int it = 0; it < iters; ++it) {
    Vec ax = a * x;
    Vec y = at * ax;
    double ny = norm2(y);
    if (ny == 0.0) return 0.0;
    double s = std::sqrt(ny);
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / ny;
    if (it > 0 && std::abs(s - sigma) <= tol * std::max(1.0, s)) {
      sigma = s;
      break;
    }
    sigma = s;
  }
  return sigma;
}

namespace {
constexpr char kMagic[4] = {'T', 'M', 'A', 'T'};
}

void save_mat(const Mat& a, const std::string& path) {
  const std::string tmp = path + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw std::runtime_error("save_mat: cannot open " + tmp);
  std::uint32_t dtype = 1, rows = std::uint32_t(a.rows()), cols = std::uint32_t(a.cols());
  std::fwrite(kMagic, 1, 4, f);
  std::fwrite(&dtype, 4, 1, f);
  std::fwrite(&rows, 4, 1, f);
  std::fwrite(&cols, 4, 1, f);
  if (a.rows() * a.cols() > 0)
    std::fwrite(a.data(), sizeof(double), a.rows() * a.cols(), f);
  std::fclose(f);
  std::filesystem::rename(tmp, path);
}

Mat load_mat(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("load_mat: cannot open " + path);
  char magic[4];
  std::uint32_t dtype = 0, rows = 0, cols = 0;
  bool ok = std::fread(magic, 1, 4, f) == 4 && std::memcmp(magic, kMagic, 4) == 0 &&
            std::fread(&dtype, 4, 1, f) == 1 && dtype == 1 &&
            std::fread(&rows, 4, 1, f) == 1 && std::fread(&cols, 4, 1, f) == 1;
  if (!ok) {
    std::fclose(f);
    throw std::runtime_error("load_mat: bad header in " + path);
  }
  Mat a(rows, cols);
  std::size_t want = std::size_t(rows) * cols;
  std::size_t got = want ? std::fread(a.data(), sizeof(double), want, f) : 0;
  std::fclose(f);
  if (got != want) throw std::runtime_error("load_mat: truncated payload in " + path);
  return a;
}

} // namespace tail
