#include "tail/setpoint.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

namespace tail {

void MotionProfileParams::validate() const {
  auto bad = [](double x) { return !(x > 0.0) || !std::isfinite(x); };
  if (bad(v_max) || bad(a_max) || bad(j_max) || bad(s_max))
    throw ProfileError("motion profile: all bounds must be strictly positive");
  if (!std::isfinite(displacement))
    throw ProfileError("motion profile: displacement must be finite");
}

namespace {

// integer sample count, robust to ties like 500.0000000000001
std::size_t ceil_samples(double t, double Ts) {
  double x = t / Ts;
  double r = std::nearbyint(x);
  if (std::abs(x - r) < 1e-9 * std::max(1.0, std::abs(x))) x = r;
  return std::size_t(std::ceil(x - 1e-15));
}

// smallest t2 >= 0 with g(t2) >= target, g increasing, g(0) may already pass
double bisect_increasing(const std::function<double(double)>& g, double target) {
  if (g(0.0) >= target) return 0.0;
  double hi = 1.0;
  int guard = 0;
  while (g(hi) < target && guard++ < 200) hi *= 2.0;
  double lo = 0.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (g(mid) < target ? lo : hi) = mid;
    if (hi - lo <= 1e-15 * std::max(1.0, hi)) break;
  }
  return hi;
}

struct PhasePlan {
  std::size_t n1, n2, n3, n4;
  double snap_mag;  // per-pulse snap level after quantization
};

PhasePlan plan_phases(const MotionProfileParams& p, double Ts) {
  const double d = std::abs(p.displacement);
  const double s = p.s_max;

  // continuous-time durations, each phase limited by the first active bound
  double t1 = std::min({p.j_max / s, std::sqrt(p.a_max / s),
                        std::cbrt(p.v_max / (2.0 * s)),
                        std::pow(d / (8.0 * s), 0.25)});
  const double j = s * t1;

  double t2a = p.a_max / j - t1;
  double t2v = bisect_increasing(
      [&](double t2) { return j * (t1 + t2) * (2.0 * t1 + t2); }, p.v_max);
  double t2d = bisect_increasing(
      [&](double t2) {
        return j * (t1 + t2) * (2.0 * t1 + t2) * (4.0 * t1 + 2.0 * t2);
      },
      d);
  double t2 = std::max(0.0, std::min({t2a, t2v, t2d}));
  const double a = j * (t1 + t2);

  double t3v = p.v_max / a - (2.0 * t1 + t2);
  double pq_p = 2.0 * t1 + t2, pq_q = 4.0 * t1 + 2.0 * t2;
  double disc = (pq_p + pq_q) * (pq_p + pq_q) - 4.0 * (pq_p * pq_q - d / a);
  double t3d = 0.5 * (-(pq_p + pq_q) + std::sqrt(std::max(0.0, disc)));
  double t3 = std::max(0.0, std::min(t3v, t3d));
  const double v = a * (2.0 * t1 + t2 + t3);

  if (!(t1 > 0.0) || !std::isfinite(v))
    throw ProfileError("motion profile: infeasible parameter combination");

  PhasePlan plan;
  plan.n1 = std::max<std::size_t>(1, ceil_samples(t1, Ts));
  plan.n2 = ceil_samples(t2, Ts);
  plan.n3 = ceil_samples(t3, Ts);

  // integer-sample durations; re-solve the magnitudes top-down so the cruise
  // velocity and total displacement come out exact
  const double fixed = double(4 * plan.n1 + 2 * plan.n2 + plan.n3);
  double t4_samples = d / (v * Ts) - fixed;
  plan.n4 = t4_samples > 1e-12 ? ceil_samples(t4_samples * Ts, Ts) : 0;

  double v_eff = d / (Ts * (fixed + double(plan.n4)));
  double a_eff = v_eff / (Ts * double(2 * plan.n1 + plan.n2 + plan.n3));
  double j_eff = a_eff / (Ts * double(plan.n1 + plan.n2));
  plan.snap_mag = j_eff / (Ts * double(plan.n1));
  return plan;
}

void append_phase(std::vector<double>& seq, std::size_t n, double value) {
  seq.insert(seq.end(), n, value);
}

} // namespace

Trajectory generate_fourth_order(const MotionProfileParams& params, double Ts) {
  if (!(Ts > 0.0)) throw ProfileError("motion profile: Ts must be > 0");
  params.validate();

  Trajectory traj;
  traj.Ts = Ts;
  traj.params = params;

  if (params.displacement == 0.0) {
    traj.r = traj.vel = traj.acc = traj.jerk = traj.snap = Vec(2, 0.0);
    return traj;
  }

  const double sign = params.displacement > 0.0 ? 1.0 : -1.0;
  PhasePlan pl = plan_phases(params, Ts);
  const double s = sign * pl.snap_mag;

  // symmetric switching sequence: accelerate, cruise, decelerate (mirrored)
  std::vector<double> u;
  u.reserve(8 * pl.n1 + 4 * pl.n2 + 2 * pl.n3 + pl.n4);
  auto half = [&](double sgn) {
    append_phase(u, pl.n1, sgn * s);
    append_phase(u, pl.n2, 0.0);
    append_phase(u, pl.n1, -sgn * s);
    append_phase(u, pl.n3, 0.0);
    append_phase(u, pl.n1, -sgn * s);
    append_phase(u, pl.n2, 0.0);
    append_phase(u, pl.n1, sgn * s);
  };
  half(+1.0);
  append_phase(u, pl.n4, 0.0);
  half(-1.0);

  const std::size_t N = u.size();
  traj.snap.assign(N + 1, 0.0);
  traj.jerk.assign(N + 1, 0.0);
  traj.acc.assign(N + 1, 0.0);
  traj.vel.assign(N + 1, 0.0);
  traj.r.assign(N + 1, 0.0);

  // exact piecewise-polynomial propagation over each constant-snap interval
  const double h = Ts, h2 = Ts * Ts / 2.0, h3 = Ts * Ts * Ts / 6.0,
               h4 = Ts * Ts * Ts * Ts / 24.0;
  for (std::size_t k = 0; k < N; ++k) {
    traj.snap[k] = u[k];
    traj.r[k + 1] = traj.r[k] + h * traj.vel[k] + h2 * traj.acc[k] +
                    h3 * traj.jerk[k] + h4 * u[k];
    traj.vel[k + 1] = traj.vel[k] + h * traj.acc[k] + h2 * traj.jerk[k] + h3 * u[k];
    traj.acc[k + 1] = traj.acc[k] + h * traj.jerk[k] + h2 * u[k];
    traj.jerk[k + 1] = traj.jerk[k] + h * u[k];
  }
  traj.snap[N] = 0.0;

  const double d = params.displacement;
  if (std::abs(traj.r[N] - d) > 1e-9 * std::abs(d))
    throw NumericalError("motion profile: terminal position off target");
  const double eps = 1e-9;
  for (std::size_t k = 0; k <= N; ++k) {
    if (std::abs(traj.snap[k]) > params.s_max * (1.0 + eps) ||
        std::abs(traj.jerk[k]) > params.j_max * (1.0 + eps) ||
        std::abs(traj.acc[k]) > params.a_max * (1.0 + eps) ||
        std::abs(traj.vel[k]) > params.v_max * (1.0 + eps))
      throw NumericalError("motion profile: bound exceeded after quantization");
  }
  return traj;
}

TrajectoryClass build_class(const std::array<std::vector<double>, 5>& grid, double Ts) {
  for (const auto& axis : grid)
    if (axis.empty()) throw ProfileError("build_class: empty grid axis");

  TrajectoryClass cls;
  cls.grid = grid;
  cls.Ts = Ts;
  for (double d : grid[0])
    for (double v : grid[1])
      for (double a : grid[2])
        for (double j : grid[3])
          for (double s : grid[4]) {
            MotionProfileParams p{d, v, a, j, s};
            try {
              cls.members.push_back(generate_fourth_order(p, Ts));
            } catch (const std::exception& e) {
              std::ostringstream msg;
              msg << "build_class: tuple (d=" << d << ", v=" << v << ", a=" << a
                  << ", j=" << j << ", s=" << s << ") failed: " << e.what();
              throw ProfileError(msg.str());
            }
          }

  // terminal dwell padding so every member shares n_d
  std::size_t max_len = 0;
  for (const auto& t : cls.members) max_len = std::max(max_len, t.n_samples());
  for (auto& t : cls.members) {
    const double rf = t.r.back();
    t.r.resize(max_len, rf);
    t.vel.resize(max_len, 0.0);
    t.acc.resize(max_len, 0.0);
    t.jerk.resize(max_len, 0.0);
    t.snap.resize(max_len, 0.0);
  }
  return cls;
}

std::pair<TrajectoryClass, TrajectoryClass> split_class(
    const TrajectoryClass& cls, const std::vector<std::size_t>& test_idx) {
  std::vector<std::size_t> idx = test_idx;
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  if (idx.size() != test_idx.size())
    throw std::invalid_argument("split_class: duplicate test indices");
  if (idx.empty() || idx.size() >= cls.size())
    throw std::invalid_argument("split_class: test selection must be a nonempty strict subset");
  if (idx.back() >= cls.size())
    throw std::invalid_argument("split_class: test index out of range");

  TrajectoryClass train, test;
  train.grid = test.grid = cls.grid;
  train.Ts = test.Ts = cls.Ts;
  std::size_t next = 0;
  for (std::size_t i = 0; i < cls.size(); ++i) {
    if (next < idx.size() && idx[next] == i) {
      test.members.push_back(cls.members[i]);
      ++next;
    } else {
      train.members.push_back(cls.members[i]);
    }
  }
  return {std::move(train), std::move(test)};
}

void save_trajectory_csv(const Trajectory& t, const std::string& path) {
  const std::string tmp = path + ".tmp";
  std::ofstream out(tmp);
  if (!out) throw std::runtime_error("save_trajectory_csv: cannot open " + tmp);
  out << "t,r,v,a,j,s\n";
  out.precision(17);
  for (std::size_t k = 0; k < t.n_samples(); ++k)
    out << k * t.Ts << ',' << t.r[k] << ',' << t.vel[k] << ',' << t.acc[k] << ','
        << t.jerk[k] << ',' << t.snap[k] << '\n';
  out.close();
  std::filesystem::rename(tmp, path);
}

Trajectory load_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_trajectory_csv: cannot open " + path);
  std::string line;
  std::getline(in, line);  // header
  Trajectory t;
  std::vector<double> times;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    double vals[6];
    char comma;
    for (int i = 0; i < 6; ++i) {
      row >> vals[i];
      if (i < 5) row >> comma;
    }
    times.push_back(vals[0]);
    t.r.push_back(vals[1]);
    t.vel.push_back(vals[2]);
    t.acc.push_back(vals[3]);
    t.jerk.push_back(vals[4]);
    t.snap.push_back(vals[5]);
  }
  t.Ts = times.size() > 1 ? times[1] - times[0] : 1.0;
  return t;
}

} // namespace tail
