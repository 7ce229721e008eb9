#pragma once

#include "tail/matrix.hpp"

#include <complex>
#include <string>
#include <vector>

namespace tail {

// Discrete-time LTI state-space system (A, B, C, D) at sample time Ts.
// Immutable after construction; all operations are pure.
struct DiscreteStateSpace {
  Mat A, B, C, D;
  double Ts = 0.0;

  DiscreteStateSpace() = default;
  DiscreteStateSpace(Mat a, Mat b, Mat c, Mat d, double ts);

  std::size_t n_states() const { return A.rows(); }
  std::size_t n_inputs() const { return D.cols(); }
  std::size_t n_outputs() const { return D.rows(); }

  static DiscreteStateSpace gain(double g, double ts);
};

struct FrequencyResponse {
  std::vector<double> omegas;                 // normalized, in [0, pi]
  std::vector<Mat> real_parts;
  std::vector<Mat> imag_parts;

  std::complex<double> scalar_at(std::size_t k) const {
    return {real_parts[k](0, 0), imag_parts[k](0, 0)};
  }
};

// y(k) = C x(k) + D u(k), x(k+1) = A x(k) + B u(k), x(0) = 0.
// u and y are row-per-channel (n_u x N, n_y x N).
Mat simulate(const DiscreteStateSpace& sys, const Mat& u);

// SISO convenience: single input / output as plain vectors.
Vec simulate(const DiscreteStateSpace& sys, const Vec& u);

// C (e^{iw} I - A)^{-1} B + D on the given grid.
FrequencyResponse freq_response(const DiscreteStateSpace& sys,
                                const std::vector<double>& omegas);

// Default hybrid grid: log-spaced low end plus linear cover up to pi.
std::vector<double> default_omega_grid(std::size_t n = 2048);

// S = (I + PK)^{-1}: closed-loop map r -> e.
DiscreteStateSpace sensitivity(const DiscreteStateSpace& P, const DiscreteStateSpace& K);

// J = (I + PK)^{-1} P: closed-loop map f -> (-error contribution), i.e. e = Sr - Jf.
DiscreteStateSpace process_sensitivity(const DiscreteStateSpace& P, const DiscreteStateSpace& K);

// Grid under-estimate of the L-infinity norm: max largest singular value
// over the grid points.
double linf_norm(const FrequencyResponse& fr);

double spectral_radius(const DiscreteStateSpace& sys);

// JSON document {A,B,C,D,Ts} with row-major matrix arrays.
std::string to_json(const DiscreteStateSpace& sys);
DiscreteStateSpace state_space_from_json(const std::string& text);

} // namespace tail
