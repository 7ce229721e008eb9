#include "tail/lti.hpp"

#include "eigen_bridge.hpp"
#include "tail/kernels.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace tail {

DiscreteStateSpace::DiscreteStateSpace(Mat a, Mat b, Mat c, Mat d, double ts)
    : A(std::move(a)), B(std::move(b)), C(std::move(c)), D(std::move(d)), Ts(ts) {
  if (Ts <= 0.0) throw std::invalid_argument("state space: Ts must be > 0");
  const std::size_t ns = A.rows();
  if (A.cols() != ns) throw DimensionError("state space: A must be square");
  if (B.rows() != ns) throw DimensionError("state space: B rows != states");
  if (C.cols() != ns) throw DimensionError("state space: C cols != states");
  if (D.rows() != C.rows() && !(C.rows() == 0 && ns == 0))
    throw DimensionError("state space: D rows != outputs");
  if (ns == 0) {
    // static system: allow empty A,B,C with D defining the io dimensions
    if (C.rows() != D.rows()) C = Mat(D.rows(), 0);
    if (B.cols() != D.cols()) B = Mat(0, D.cols());
  } else {
    if (D.cols() != B.cols()) throw DimensionError("state space: D cols != inputs");
  }
}

DiscreteStateSpace DiscreteStateSpace::gain(double g, double ts) {
  Mat d(1, 1);
  d(0, 0) = g;
  return DiscreteStateSpace(Mat(0, 0), Mat(0, 1), Mat(1, 0), d, ts);
}

Mat simulate(const DiscreteStateSpace& sys, const Mat& u) {
  if (u.rows() != sys.n_inputs())
    throw DimensionError("simulate: input has wrong channel count");
  const std::size_t N = u.cols(), ns = sys.n_states();
  const std::size_t ny = sys.n_outputs(), nu = sys.n_inputs();
  Mat y(ny, N);
  Vec x(ns, 0.0), xn(ns), uk(nu), ck(ny), dk(ny);
  for (std::size_t k = 0; k < N; ++k) {
    for (std::size_t i = 0; i < nu; ++i) uk[i] = u(i, k);
    kernels::gemv(sys.C.data(), ny, ns, x.data(), ck.data());
    kernels::gemv(sys.D.data(), ny, nu, uk.data(), dk.data());
    for (std::size_t i = 0; i < ny; ++i) y(i, k) = ck[i] + dk[i];
    if (ns) {
      kernels::gemv(sys.A.data(), ns, ns, x.data(), xn.data());
      for (std::size_t i = 0; i < ns; ++i) {
        xn[i] += kernels::dot(sys.B.row(i), uk.data(), nu);
      }
      x = xn;
    }
  }
  return y;
}

Vec simulate(const DiscreteStateSpace& sys, const Vec& u) {
  if (sys.n_inputs() != 1 || sys.n_outputs() != 1)
    throw DimensionError("simulate(vec): system is not SISO");
  Mat um(1, u.size());
  std::copy(u.begin(), u.end(), um.data());
  Mat ym = simulate(sys, um);
  return Vec(ym.data(), ym.data() + ym.cols());
}

FrequencyResponse freq_response(const DiscreteStateSpace& sys,
                                const std::vector<double>& omegas) {
  for (std::size_t k = 1; k < omegas.size(); ++k)
    if (omegas[k] <= omegas[k - 1])
      throw std::invalid_argument("freq_response: grid must be strictly increasing");
  FrequencyResponse fr;
  fr.omegas = omegas;
  const std::size_t ns = sys.n_states();
  Eigen::MatrixXcd A = emap(sys.A).cast<std::complex<double>>();
  Eigen::MatrixXcd B = emap(sys.B).cast<std::complex<double>>();
  Eigen::MatrixXcd C = emap(sys.C).cast<std::complex<double>>();
  Eigen::MatrixXcd D = emap(sys.D).cast<std::complex<double>>();
  for (double w : omegas) {
    Eigen::MatrixXcd H;
    if (ns == 0) {
      H = D;
    } else {
      std::complex<double> z = std::polar(1.0, w);
      Eigen::MatrixXcd zIA = -A;
      zIA.diagonal().array() += z;
      Eigen::FullPivLU<Eigen::MatrixXcd> lu(zIA);
      if (!lu.isInvertible())
        throw NumericalError("freq_response: z on the eigenvalue of A at omega=" +
                             std::to_string(w));
      H = C * lu.solve(B) + D;
    }
    Mat re(H.rows(), H.cols()), im(H.rows(), H.cols());
    for (Eigen::Index i = 0; i < H.rows(); ++i)
      for (Eigen::Index j = 0; j < H.cols(); ++j) {
        re(i, j) = H(i, j).real();
        im(i, j) = H(i, j).imag();
      }
    fr.real_parts.push_back(std::move(re));
    fr.imag_parts.push_back(std::move(im));
  }
  return fr;
}

std::vector<double> default_omega_grid(std::size_t n) {
  const double pi = std::acos(-1.0);
  std::vector<double> grid;
  grid.reserve(n + 2);
  grid.push_back(0.0);
  const std::size_t n_log = n / 2, n_lin = n - n_log;
  for (std::size_t k = 0; k < n_log; ++k) {
    double t = double(k) / double(n_log - 1);
    grid.push_back(pi * std::pow(10.0, -5.0 * (1.0 - t)));
  }
  for (std::size_t k = 1; k <= n_lin; ++k)
    grid.push_back(pi * double(k) / double(n_lin));
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end(),
                         [](double a, double b) { return b - a < 1e-14; }),
             grid.end());
  return grid;
}

namespace {

struct ClosedLoopParts {
  Mat Acl, Bs, Cs, Ds, Bj, Cj, Dj;
  double Ts;
};

ClosedLoopParts close_loop(const DiscreteStateSpace& P, const DiscreteStateSpace& K) {
  if (P.n_inputs() != K.n_outputs() || P.n_outputs() != K.n_inputs())
    throw DimensionError("close_loop: P and K io dimensions are not conformable");
  if (P.Ts != K.Ts) throw std::invalid_argument("close_loop: sample times differ");
  const std::size_t np = P.n_states(), nk = K.n_states();
  const std::size_t ny = P.n_outputs(), nu = P.n_inputs();

  EMat Dp = emap(P.D), Dk = emap(K.D);
  EMat IDD = EMat::Identity(ny, ny) + Dp * Dk;
  Eigen::FullPivLU<EMat> lu(IDD);
  if (!lu.isInvertible())
    throw NumericalError("close_loop: algebraic loop, I + Dp*Dk is singular");
  EMat M = lu.inverse();

  EMat Ap = emap(P.A), Bp = emap(P.B), Cp = emap(P.C);
  EMat Ak = emap(K.A), Bk = emap(K.B), Ck = emap(K.C);

  EMat MCp = M * Cp;             // ny x np
  EMat MDpCk = M * Dp * Ck;      // ny x nk

  EMat Acl(np + nk, np + nk);
  Acl.block(0, 0, np, np) = Ap - Bp * Dk * MCp;
  Acl.block(0, np, np, nk) = Bp * (Ck - Dk * MDpCk);
  Acl.block(np, 0, nk, np) = -Bk * MCp;
  Acl.block(np, np, nk, nk) = Ak - Bk * MDpCk;

  EMat Bs(np + nk, ny);
  Bs.block(0, 0, np, ny) = Bp * Dk * M;
  Bs.block(np, 0, nk, ny) = Bk * M;

  EMat Cs(ny, np + nk);
  Cs.block(0, 0, ny, np) = -MCp;
  Cs.block(0, np, ny, nk) = -MDpCk;

  EMat Bj(np + nk, nu);
  Bj.block(0, 0, np, nu) = Bp * (EMat::Identity(nu, nu) - Dk * M * Dp);
  Bj.block(np, 0, nk, nu) = -Bk * M * Dp;

  EMat Cj = -Cs;
  EMat Dj = M * Dp;

  ClosedLoopParts out;
  out.Acl = from_eigen(Acl);
  out.Bs = from_eigen(Bs);
  out.Cs = from_eigen(Cs);
  out.Ds = from_eigen(M);
  out.Bj = from_eigen(Bj);
  out.Cj = from_eigen(Cj);
  out.Dj = from_eigen(Dj);
  out.Ts = P.Ts;
  return out;
}

} // namespace

DiscreteStateSpace sensitivity(const DiscreteStateSpace& P, const DiscreteStateSpace& K) {
  auto cl = close_loop(P, K);
  return DiscreteStateSpace(cl.Acl, cl.Bs, cl.Cs, cl.Ds, cl.Ts);
}

DiscreteStateSpace process_sensitivity(const DiscreteStateSpace& P,
                                       const DiscreteStateSpace& K) {
  auto cl = close_loop(P, K);
  return DiscreteStateSpace(cl.Acl, cl.Bj, cl.Cj, cl.Dj, cl.Ts);
}

double linf_norm(const FrequencyResponse& fr) {
  if (fr.omegas.empty()) throw std::invalid_argument("linf_norm: empty grid");
  double peak = 0.0;
  for (std::size_t k = 0; k < fr.omegas.size(); ++k) {
    const Mat& re = fr.real_parts[k];
    const Mat& im = fr.imag_parts[k];
    if (re.rows() == 1 && re.cols() == 1) {
      peak = std::max(peak, std::hypot(re(0, 0), im(0, 0)));
      continue;
    }
    Eigen::MatrixXcd H(re.rows(), re.cols());
    for (std::size_t i = 0; i < re.rows(); ++i)
      for (std::size_t j = 0; j < re.cols(); ++j)
        H(i, j) = {re(i, j), im(i, j)};
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(H);
    peak = std::max(peak, svd.singularValues()(0));
  }
  return peak;
}

double spectral_radius(const DiscreteStateSpace& sys) {
  if (sys.n_states() == 0) return 0.0;
  Eigen::EigenSolver<EMat> es(emap(sys.A), false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

namespace {
nlohmann::json mat_to_json(const Mat& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = std::vector<double>(m.data(), m.data() + m.rows() * m.cols());
  return j;
}

Mat mat_from_json(const nlohmann::json& j) {
  Mat m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != m.rows() * m.cols())
    throw std::runtime_error("state space json: matrix payload size mismatch");
  std::copy(data.begin(), data.end(), m.data());
  return m;
}
} // namespace

std::string to_json(const DiscreteStateSpace& sys) {
  nlohmann::json j;
  j["A"] = mat_to_json(sys.A);
  j["B"] = mat_to_json(sys.B);
  j["C"] = mat_to_json(sys.C);
  j["D"] = mat_to_json(sys.D);
  j["Ts"] = sys.Ts;
  return j.dump(2);
}

DiscreteStateSpace state_space_from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  return DiscreteStateSpace(mat_from_json(j.at("A")), mat_from_json(j.at("B")),
                            mat_from_json(j.at("C")), mat_from_json(j.at("D")),
                            j.at("Ts").get<double>());
}

} // namespace tail
