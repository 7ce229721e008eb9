#include "tail/ilc.hpp"

#include "eigen_bridge.hpp"
#include "tail/kernels.hpp"

#include <cmath>

namespace tail {

Mat design_L(const Mat& J_N, double lambda_reg) {
  if (J_N.rows() != J_N.cols()) throw DimensionError("design_L: J must be square");
  if (lambda_reg < 0.0) throw std::invalid_argument("design_L: lambda must be >= 0");
  const std::size_t N = J_N.rows();
  Mat Jt = transpose(J_N);
  Mat G = Jt * J_N;
  for (std::size_t i = 0; i < N; ++i) G(i, i) += lambda_reg;
  Eigen::FullPivLU<EMat> lu(emap(G));
  if (!lu.isInvertible())
    throw NumericalError(
        "design_L: normal matrix singular; use a positive lambda_reg");
  EMat L = lu.solve(emap(Jt));
  return from_eigen(L);
}

Mat design_Q(std::size_t N, std::optional<double> cutoff_hz, double Ts) {
  if (!cutoff_hz) return Mat::identity(N);
  const double nyquist = 0.5 / Ts;
  if (!(*cutoff_hz > 0.0) || *cutoff_hz >= nyquist)
    throw std::invalid_argument("design_Q: cutoff must be in (0, Nyquist)");
  // causal first-order lowpass with unit DC gain, h(k) = (1-alpha) alpha^k
  const double alpha = std::exp(-2.0 * std::acos(-1.0) * (*cutoff_hz) * Ts);
  Vec h(N);
  double p = 1.0 - alpha;
  for (std::size_t k = 0; k < N; ++k) {
    h[k] = p;
    p *= alpha;
  }
  Mat F(N, N);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j <= i; ++j) F(i, j) = h[i - j];
  Mat Q = transpose(F) * F;
  // enforce exact symmetry against roundoff
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      double v = 0.5 * (Q(i, j) + Q(j, i));
      Q(i, j) = Q(j, i) = v;
    }
  return Q;
}

ILCTrialState ilc_trial(const ILCTrialState& state, const Vec& r, const Mat& S_N,
                        const Mat& J_N, const ILCFilters& filters) {
  const std::size_t N = r.size();
  if (S_N.rows() != N || J_N.rows() != N || filters.L.rows() != N ||
      filters.Q.rows() != N)
    throw DimensionError("ilc_trial: inconsistent horizon");
  Vec f = state.f.empty() ? Vec(N, 0.0) : state.f;
  if (f.size() != N) throw DimensionError("ilc_trial: feedforward length mismatch");

  Vec e = S_N * r - J_N * f;
  Vec update = filters.L * e;
  for (std::size_t i = 0; i < N; ++i) update[i] += f[i];
  Vec f_next = filters.Q * update;

  if (!all_finite(e) || !all_finite(f_next))
    throw DivergenceError("ilc_trial: non-finite values at trial " +
                          std::to_string(state.k));

  ILCTrialState next;
  next.k = state.k + 1;
  next.f = std::move(f_next);
  next.e_norm2_history = state.e_norm2_history;
  next.e_norminf_history = state.e_norminf_history;
  next.e_norm2_history.push_back(norm2(e));
  next.e_norminf_history.push_back(norm_inf(e));
  next.e = std::move(e);
  return next;
}

double convergence_margin(const Mat& J_N, const Mat& L, const Mat& Q) {
  if (J_N.cols() != L.rows() || L.cols() != J_N.rows() || Q.cols() != J_N.rows())
    throw DimensionError("convergence_margin: inconsistent dimensions");
  Mat M = Q * (Mat::identity(J_N.rows()) - J_N * L);
  return sigma_max(M, 500);
}

LimitPolicies limit_policies(const Mat& S_N, const Mat& J_N, const Mat& L,
                             const Mat& Q, const Vec& r) {
  const std::size_t N = r.size();
  Mat M = Mat::identity(N) - Q * (Mat::identity(N) - L * J_N);
  Eigen::FullPivLU<EMat> lu(emap(M));
  if (!lu.isInvertible())
    throw NumericalError("limit_policies: non-convergent configuration, "
                         "I - Q(I - L J) is singular");
  Vec rhs = Q * (L * (S_N * r));
  Eigen::VectorXd x = lu.solve(Eigen::Map<const Eigen::VectorXd>(rhs.data(), N));
  LimitPolicies out;
  out.f_inf.assign(x.data(), x.data() + N);
  out.e_inf = S_N * r - J_N * out.f_inf;
  return out;
}

ExpertResult run_expert(const Vec& r, const Mat& S_N, const Mat& J_N,
                        const ILCFilters& filters, const ExpertOptions& opt) {
  ExpertResult res;
  res.margin = opt.check_margin
                   ? convergence_margin(J_N, filters.L, filters.Q)
                   : 0.0;
  res.margin_warning = opt.check_margin && res.margin >= 1.0;

  ILCTrialState state;
  std::size_t growth_streak = 0;
  for (std::size_t k = 0; k < opt.max_trials; ++k) {
    Vec f_prev = state.f.empty() ? Vec(r.size(), 0.0) : state.f;
    state = ilc_trial(state, r, S_N, J_N, filters);

    const auto& hist = state.e_norm2_history;
    if (hist.size() >= 2 && hist.back() > hist[hist.size() - 2]) {
      if (++growth_streak >= 5)
        throw DivergenceError("run_expert: error norm grew over 5 consecutive trials");
    } else {
      growth_streak = 0;
    }

    double df = norm2(state.f - f_prev);
    double base = std::max(norm2(f_prev), 1e-300);
    if (df / base < opt.tol || df == 0.0) break;
  }
  res.trials = state.k;
  res.f_star = state.f;
  res.e_final = S_N * r - J_N * state.f;
  res.e_norm2_history = state.e_norm2_history;
  return res;
}

} // namespace tail
