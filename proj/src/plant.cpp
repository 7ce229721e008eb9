#include "tail/plant.hpp"

#include "eigen_bridge.hpp"

#include <json.hpp>

#include <cmath>

namespace tail {

namespace {
constexpr std::size_t kMaxLiftedHorizon = 25000;  // dense N x N memory guard
const double kPi = std::acos(-1.0);
} // namespace

void PlantConfig::validate() const {
  if (!(mass > 0.0)) throw ConfigError("plant: mass must be > 0");
  if (!(Ts > 0.0)) throw ConfigError("plant: Ts must be > 0");
  const double nyquist = 0.5 / Ts;
  for (const auto& m : modes) {
    if (!(m.freq_hz > 0.0) || m.freq_hz >= nyquist)
      throw ConfigError("plant: mode frequency must lie below Nyquist");
    if (!(m.damping > 0.0) || !(m.damping < 1.0))
      throw ConfigError("plant: damping ratio must be in (0,1)");
  }
  if (crossover_hz && !(*crossover_hz > 0.0))
    throw ConfigError("plant: crossover must be > 0");
}

namespace {

struct SisoSS {
  Mat A, B, C;
  double D = 0.0;
};

// exact ZOH of 1/(m s^2)
SisoSS zoh_double_integrator(double m, double Ts) {
  SisoSS s;
  s.A = Mat(2, 2);
  s.A(0, 0) = 1.0; s.A(0, 1) = Ts;
  s.A(1, 1) = 1.0;
  s.B = Mat(2, 1);
  s.B(0, 0) = Ts * Ts / (2.0 * m);
  s.B(1, 0) = Ts / m;
  s.C = Mat(1, 2);
  s.C(0, 0) = 1.0;
  return s;
}

// exact ZOH of g/(s^2 + 2 zeta w s + w^2), underdamped
SisoSS zoh_mode(const ParasiticMode& mode, double Ts) {
  const double w = 2.0 * kPi * mode.freq_hz;
  const double a = -mode.damping * w;
  const double b = w * std::sqrt(1.0 - mode.damping * mode.damping);

  // Ac = [[0,1],[-w^2, 2a]]; exp(Ac*Ts) = e^{aTs}(cos(bTs) I + sin(bTs)/b (Ac - a I))
  const double ea = std::exp(a * Ts);
  const double cb = std::cos(b * Ts), sb = std::sin(b * Ts) / b;
  SisoSS s;
  s.A = Mat(2, 2);
  s.A(0, 0) = ea * (cb - a * sb);
  s.A(0, 1) = ea * sb;
  s.A(1, 0) = ea * (-w * w * sb);
  s.A(1, 1) = ea * (cb + a * sb);

  // Bd = Ac^{-1}(Ad - I) Bc, Bc = [0, g]^T, Ac^{-1} = [[2a? ...]]
  // Ac^{-1} = (1/w^2) [[-2a_c, -1],[w^2, 0]] with a_c = zeta*w = -a
  const double g = mode.gain;
  const double ad00 = s.A(0, 0) - 1.0, ad01 = s.A(0, 1);
  const double ad10 = s.A(1, 0), ad11 = s.A(1, 1) - 1.0;
  // (Ad - I) Bc
  const double v0 = ad01 * g, v1 = ad11 * g;
  s.B = Mat(2, 1);
  s.B(0, 0) = (2.0 * a * v0 - v1) / (w * w);
  s.B(1, 0) = v0;
  (void)ad00; (void)ad10;
  s.C = Mat(1, 2);
  s.C(0, 0) = 1.0;
  return s;
}

// parallel sum of SISO blocks sharing the input
DiscreteStateSpace parallel(const std::vector<SisoSS>& blocks, double Ts) {
  std::size_t ns = 0;
  for (const auto& b : blocks) ns += b.A.rows();
  Mat A(ns, ns), B(ns, 1), C(1, ns), D(1, 1);
  std::size_t at = 0;
  for (const auto& b : blocks) {
    const std::size_t n = b.A.rows();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) A(at + i, at + j) = b.A(i, j);
      B(at + i, 0) = b.B(i, 0);
      C(0, at + i) = b.C(0, i);
    }
    D(0, 0) += b.D;
    at += n;
  }
  return DiscreteStateSpace(A, B, C, D, Ts);
}

// series u -> s1 -> s2
DiscreteStateSpace series(const DiscreteStateSpace& s1, const DiscreteStateSpace& s2) {
  const std::size_t n1 = s1.n_states(), n2 = s2.n_states();
  Mat A(n1 + n2, n1 + n2), B(n1 + n2, 1), C(1, n1 + n2), D(1, 1);
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t j = 0; j < n1; ++j) A(i, j) = s1.A(i, j);
    B(i, 0) = s1.B(i, 0);
  }
  for (std::size_t i = 0; i < n2; ++i) {
    for (std::size_t j = 0; j < n2; ++j) A(n1 + i, n1 + j) = s2.A(i, j);
    for (std::size_t j = 0; j < n1; ++j) A(n1 + i, j) = s2.B(i, 0) * s1.C(0, j);
    B(n1 + i, 0) = s2.B(i, 0) * s1.D(0, 0);
    C(0, n1 + i) = s2.C(0, i);
  }
  for (std::size_t j = 0; j < n1; ++j) C(0, j) = s2.D(0, 0) * s1.C(0, j);
  D(0, 0) = s2.D(0, 0) * s1.D(0, 0);
  return DiscreteStateSpace(A, B, C, D, s1.Ts);
}

// Tustin discretization of a continuous SISO system
DiscreteStateSpace tustin(const Mat& Ac, const Mat& Bc, const Mat& Cc, double Dc,
                          double Ts) {
  EMat A = emap(Ac);
  const std::size_t n = Ac.rows();
  EMat M = (EMat::Identity(n, n) - 0.5 * Ts * A).partialPivLu().inverse();
  EMat Ad = M * (EMat::Identity(n, n) + 0.5 * Ts * A);
  EMat Bd = M * emap(Bc) * Ts;
  EMat Cd = emap(Cc) * M;
  EMat Dd = emap(Cc) * M * emap(Bc) * (0.5 * Ts);
  Mat D(1, 1);
  D(0, 0) = Dc + Dd(0, 0);
  return DiscreteStateSpace(from_eigen(Ad), from_eigen(Bd), from_eigen(Cd), D, Ts);
}

} // namespace

DiscreteStateSpace build_plant(const PlantConfig& cfg) {
  cfg.validate();
  std::vector<SisoSS> blocks;
  blocks.push_back(zoh_double_integrator(cfg.mass, cfg.Ts));
  for (const auto& m : cfg.modes) blocks.push_back(zoh_mode(m, cfg.Ts));
  return parallel(blocks, cfg.Ts);
}

DiscreteStateSpace build_controller(const PlantConfig& cfg) {
  cfg.validate();
  double fc = cfg.crossover_hz ? *cfg.crossover_hz : 20.0;
  if (!cfg.crossover_hz && !cfg.modes.empty()) {
    double fmin = cfg.modes.front().freq_hz;
    for (const auto& m : cfg.modes) fmin = std::min(fmin, m.freq_hz);
    fc = fmin / 10.0;
  }
  const double wc = 2.0 * kPi * fc;
  const double wz = wc / 3.0, wp = 3.0 * wc, wi = wc / 10.0;

  // PI part (s + wi)/s
  Mat Ai(1, 1), Bi(1, 1), Ci(1, 1);
  Bi(0, 0) = 1.0;
  Ci(0, 0) = wi;
  DiscreteStateSpace pi_d = tustin(Ai, Bi, Ci, 1.0, cfg.Ts);

  // lead-lag (wp/wz)(s + wz)/(s + wp)
  Mat Al(1, 1), Bl(1, 1), Cl(1, 1);
  Al(0, 0) = -wp;
  Bl(0, 0) = 1.0;
  Cl(0, 0) = (wp / wz) * (wz - wp);
  DiscreteStateSpace lead_d = tustin(Al, Bl, Cl, wp / wz, cfg.Ts);

  DiscreteStateSpace K = series(pi_d, lead_d);

  // scale so |P K| = 1 at the crossover frequency
  DiscreteStateSpace P = build_plant(cfg);
  const double omega_c = wc * cfg.Ts;
  auto frP = freq_response(P, {omega_c});
  auto frK = freq_response(K, {omega_c});
  const double mag = std::abs(frP.scalar_at(0)) * std::abs(frK.scalar_at(0));
  if (!(mag > 0.0)) throw ConfigError("controller: degenerate loop gain at crossover");
  const double kp = 1.0 / mag;
  K.C = kp * K.C;
  K.D = kp * K.D;

  DiscreteStateSpace S = sensitivity(P, K);
  const double rho = spectral_radius(S);
  if (rho >= 1.0)
    throw ConfigError("controller: closed loop unstable, spectral radius = " +
                      std::to_string(rho));
  return K;
}

Vec mass_feedforward(const Trajectory& traj, double m) {
  if (traj.acc.size() != traj.r.size())
    throw DimensionError("mass_feedforward: trajectory lacks acceleration array");
  Vec f(traj.acc.size());
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = m * traj.acc[k];
  return f;
}

Mat lift(const DiscreteStateSpace& sys, std::size_t N, std::size_t shift) {
  if (N < 1) throw std::invalid_argument("lift: N must be >= 1");
  if (N > kMaxLiftedHorizon)
    throw std::invalid_argument("lift: horizon exceeds dense memory guard");
  if (sys.n_inputs() != 1 || sys.n_outputs() != 1)
    throw DimensionError("lift: SISO systems only");
  Vec pulse(N + shift, 0.0);
  pulse[0] = 1.0;
  Vec h = simulate(sys, pulse);
  Mat T(N, N);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j <= i; ++j) T(i, j) = h[i - j + shift];
  return T;
}

LoopSet build_loopset(const PlantConfig& cfg, std::size_t N) {
  LoopSet ls;
  ls.P = build_plant(cfg);
  ls.K = build_controller(cfg);
  ls.S = sensitivity(ls.P, ls.K);
  ls.J = process_sensitivity(ls.P, ls.K);
  ls.S_N = lift(ls.S, N, 0);
  ls.J_N = lift(ls.J, N, 1);
  ls.horizon = N;
  return ls;
}

Vec ilc_reference_window(const Trajectory& traj) {
  return Vec(traj.r.begin() + 1, traj.r.end());
}

Vec ilc_force_window(const Vec& full_signal, std::size_t N) {
  if (full_signal.size() < N)
    throw DimensionError("ilc_force_window: signal shorter than horizon");
  return Vec(full_signal.begin(), full_signal.begin() + N);
}

std::string to_json(const PlantConfig& cfg) {
  nlohmann::json j;
  j["mass"] = cfg.mass;
  j["Ts"] = cfg.Ts;
  j["modes"] = nlohmann::json::array();
  for (const auto& m : cfg.modes)
    j["modes"].push_back({{"freq_hz", m.freq_hz}, {"damping", m.damping}, {"gain", m.gain}});
  if (cfg.crossover_hz) j["crossover_hz"] = *cfg.crossover_hz;
  return j.dump(2);
}

PlantConfig plant_config_from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  PlantConfig cfg;
  cfg.mass = j.at("mass").get<double>();
  cfg.Ts = j.at("Ts").get<double>();
  for (const auto& m : j.value("modes", nlohmann::json::array()))
    cfg.modes.push_back({m.at("freq_hz").get<double>(), m.at("damping").get<double>(),
                         m.at("gain").get<double>()});
  if (j.contains("crossover_hz")) cfg.crossover_hz = j["crossover_hz"].get<double>();
  cfg.validate();
  return cfg;
}

} // namespace tail
