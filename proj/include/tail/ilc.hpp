#pragma once

#include "tail/matrix.hpp"

#include <optional>
#include <vector>

namespace tail {

// Lifted learning filter L and robustness filter Q for horizon N.
struct ILCFilters {
  Mat L;
  Mat Q;
  double lambda_reg = 0.0;
  std::optional<double> q_cutoff_hz;  // nullopt -> Q = I
};

struct ILCTrialState {
  std::size_t k = 0;  // trial index
  Vec f;              // feedforward, length N
  Vec e;              // error of the latest trial, length N
  std::vector<double> e_norm2_history;
  std::vector<double> e_norminf_history;
};

struct DivergenceError : NumericalError {
  using NumericalError::NumericalError;
};

// L = (J^T J + lambda I)^{-1} J^T; exact inverse for lambda = 0 and
// invertible J (throws if the normal matrix is singular at lambda = 0).
Mat design_L(const Mat& J_N, double lambda_reg);

// Zero-phase robustness lowpass Q = F^T F with F a causal first-order lifted
// lowpass with unit DC gain; Q = I when no cutoff is given.
Mat design_Q(std::size_t N, std::optional<double> cutoff_hz, double Ts);

// One trial of e_k = S_N r - J_N f_k ; f_{k+1} = Q (L e_k + f_k).
ILCTrialState ilc_trial(const ILCTrialState& state, const Vec& r, const Mat& S_N,
                        const Mat& J_N, const ILCFilters& filters);

// Largest singular value of Q (I - J_N L): finite-horizon surrogate of the
// H-infinity convergence criterion.
double convergence_margin(const Mat& J_N, const Mat& L, const Mat& Q);

struct LimitPolicies {
  Vec e_inf;
  Vec f_inf;
};

// Fixed point of the trial recursion:
// f_inf = (I - Q(I - L J))^{-1} Q L S r ; e_inf = S r - J f_inf.
LimitPolicies limit_policies(const Mat& S_N, const Mat& J_N, const Mat& L,
                             const Mat& Q, const Vec& r);

struct ExpertResult {
  Vec f_star;
  Vec e_final;
  std::vector<double> e_norm2_history;
  std::size_t trials = 0;
  double margin = 0.0;
  bool margin_warning = false;  // margin >= 1 observed before running
};

struct ExpertOptions {
  double tol = 1e-8;
  std::size_t max_trials = 100;
  bool check_margin = true;
};

ExpertResult run_expert(const Vec& r, const Mat& S_N, const Mat& J_N,
                        const ILCFilters& filters, const ExpertOptions& opt = {});

} // namespace tail
