#pragma once

#include "tail/matrix.hpp"

#include <string>
#include <vector>

namespace tail {

// Columns are data points (signals of length n_d).
struct SignalDataset {
  Mat H;  // n_d x n_t
  std::vector<std::string> labels;  // optional trajectory ids, one per column

  std::size_t n_d() const { return H.rows(); }
  std::size_t n_t() const { return H.cols(); }
};

struct RankError : NumericalError {
  using NumericalError::NumericalError;
};

// Dual-PCA projector: encoder T_E (n_l x n_d) and decoder T_D (n_d x n_l)
// built from the n_t x n_t Gram eigenproblem of H. T_E T_D = I and the
// columns of T_D are the leading left singular vectors of H.
struct DPCAProjector {
  Mat T_E;
  Mat T_D;
  std::size_t n_l = 0;
  Vec singular_values;  // all n_t values, descending
  Vec mean;             // empty unless fitted with mean_center
  std::uint64_t dataset_fingerprint = 0;

  std::size_t n_d() const { return T_D.rows(); }
};

// Fit via the dual (n_t x n_t) eigenproblem. mean_center is off by default:
// the projector acts on raw signals. Sign convention: each retained
// component's largest-magnitude entry is positive.
DPCAProjector fit(const SignalDataset& data, std::size_t n_l,
                  bool mean_center = false);

Vec encode(const DPCAProjector& proj, const Vec& x);
Vec decode(const DPCAProjector& proj, const Vec& z);

// Per-column 2-norm reconstruction errors ||h - T_D T_E h||.
Vec reconstruction_error(const DPCAProjector& proj, const Mat& columns);

std::uint64_t dataset_fingerprint(const Mat& H);

std::string to_json(const DPCAProjector& proj);
DPCAProjector projector_from_json(const std::string& text);

} // namespace tail
