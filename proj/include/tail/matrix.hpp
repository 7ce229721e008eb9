#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tail {

using Vec = std::vector<double>;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Mat identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }

  bool operator==(const Mat&) const = default;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  Vec data_;
};

Mat operator+(const Mat& a, const Mat& b);
Mat operator-(const Mat& a, const Mat& b);
Mat operator*(const Mat& a, const Mat& b);   // kernels::gemm
Mat operator*(double s, const Mat& a);
Vec operator*(const Mat& a, const Vec& x);   // kernels::gemv
Mat transpose(const Mat& a);

Vec operator+(const Vec& a, const Vec& b);
Vec operator-(const Vec& a, const Vec& b);
Vec operator*(double s, const Vec& a);

double norm2(const Vec& v);
double norm_inf(const Vec& v);
double max_abs(const Mat& a);
bool all_finite(const Vec& v);

// Largest singular value by power iteration on A^T A (matvec only, no
// explicit Gram matrix). Deterministic start vector.
double sigma_max(const Mat& a, int iters = 200, double tol = 1e-12);

// Binary persistence: 16-byte header (magic "TMAT", dtype u32 = 1 for f64,
// rows u32, cols u32, little endian) followed by row-major payload.
void save_mat(const Mat& a, const std::string& path);
Mat load_mat(const std::string& path);

} // namespace tail
