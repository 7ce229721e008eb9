#include "tail/policies.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace tail {

namespace {

Vec column(const Mat& m, std::size_t j) {
  Vec v(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) v[i] = m(i, j);
  return v;
}

void set_column(Mat& m, std::size_t j, const Vec& v) {
  for (std::size_t i = 0; i < m.rows(); ++i) m(i, j) = v[i];
}

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// median of 5 timed repetitions of fn()
template <typename F>
double median_time(F&& fn) {
  std::array<double, 5> t{};
  for (auto& ti : t) {
    const double t0 = now_seconds();
    fn();
    ti = now_seconds() - t0;
  }
  std::sort(t.begin(), t.end());
  return t[2];
}

} // namespace

LabeledData label_dataset(const TrajectoryClass& cls, const LoopSet& loops,
                          const ILCFilters& filters, const ExpertOptions& opt,
                          std::size_t jobs) {
  if (cls.members.empty()) throw std::invalid_argument("label_dataset: empty class");
  const std::size_t N = loops.horizon;
  for (const auto& t : cls.members)
    if (t.horizon() != N)
      throw DimensionError("label_dataset: trajectory horizon does not match loop set");

  LabeledData out;
  out.H_r = Mat(N, cls.size());
  out.H_f = Mat(N, cls.size());
  out.histories.reserve(cls.size());

  // margin depends only on the filters, so check once up front
  out.margin = convergence_margin(loops.J_N, filters.L, filters.Q);
  if (opt.check_margin && out.margin >= 1.0)
    throw DivergenceError("label_dataset: convergence margin " +
                          std::to_string(out.margin) + " >= 1");
  ExpertOptions per_run = opt;
  per_run.check_margin = false;

  std::vector<ExpertResult> results(cls.size());
  std::vector<std::string> errors(cls.size());
  auto worker = [&](std::size_t j) {
    const Vec r = ilc_reference_window(cls.members[j]);
    try {
      results[j] = run_expert(r, loops.S_N, loops.J_N, filters, per_run);
      set_column(out.H_r, j, r);
      set_column(out.H_f, j, results[j].f_star);
      results[j].margin = out.margin;
    } catch (const std::exception& ex) {
      errors[j] = ex.what();
    }
  };
  if (jobs <= 1) {
    for (std::size_t j = 0; j < cls.size(); ++j) worker(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min<std::size_t>(jobs, cls.size()); ++t)
      pool.emplace_back([&] {
        for (std::size_t j = next.fetch_add(1); j < cls.size(); j = next.fetch_add(1))
          worker(j);
      });
    for (auto& th : pool) th.join();
  }

  std::string failures;
  for (std::size_t j = 0; j < cls.size(); ++j)
    if (!errors[j].empty())
      failures += (failures.empty() ? "" : "; ") + std::to_string(j) + ": " + errors[j];
  if (!failures.empty())
    throw DivergenceError("label_dataset: expert diverged on members [" + failures + "]");
  out.histories = std::move(results);
  return out;
}

StudentPolicy build_tail_policy(const Mat& H_r, const Mat& H_f,
                                const TailTrainOptions& opt) {
  if (H_r.cols() != H_f.cols())
    throw DimensionError("build_tail_policy: column count mismatch");
  const std::size_t nt = H_r.cols();

  auto numerical_rank = [](const Vec& sigma) {
    std::size_t r = 0;
    for (double s : sigma)
      if (s > 1e-7 * sigma[0]) ++r;  // same floor as the dpca rank check
    return r;
  };

  StudentPolicy pol;
  {
    DPCAProjector full = fit(SignalDataset{H_r, {}}, 1);
    const std::size_t n_l = opt.n_l ? opt.n_l : numerical_rank(full.singular_values);
    pol.encoder = fit(SignalDataset{H_r, {}}, n_l);
  }
  {
    DPCAProjector full = fit(SignalDataset{H_f, {}}, 1);
    const std::size_t n_l = opt.n_l ? opt.n_l : numerical_rank(full.singular_values);
    pol.decoder = fit(SignalDataset{H_f, {}}, n_l);
  }

  // latent training pairs, one column per trajectory
  Mat Z_in(pol.encoder.n_l, nt), Z_out(pol.decoder.n_l, nt);
  for (std::size_t j = 0; j < nt; ++j) {
    set_column(Z_in, j, encode(pol.encoder, column(H_r, j)));
    set_column(Z_out, j, encode(pol.decoder, column(H_f, j)));
  }
  pol.in_std = Standardizer::fit_global_scale(Z_in);
  pol.out_std = Standardizer::fit_global_scale(Z_out);
  Mat X(Z_in.rows(), nt), T(Z_out.rows(), nt);
  for (std::size_t j = 0; j < nt; ++j) {
    set_column(X, j, pol.in_std.apply(column(Z_in, j)));
    set_column(T, j, pol.out_std.apply(column(Z_out, j)));
  }

  MLPArchitecture arch;
  arch.widths.push_back(pol.encoder.n_l);
  arch.widths.insert(arch.widths.end(), opt.hidden.begin(), opt.hidden.end());
  arch.widths.push_back(pol.decoder.n_l);
  TrainResult res = train(arch, X, T, opt.train, opt.init_seed);
  pol.regressor = std::move(res.params);
  pol.loss_curve = std::move(res.loss_curve);
  return pol;
}

Vec tail_predict(const StudentPolicy& policy, const Vec& r) {
  Vec z = policy.in_std.apply(encode(policy.encoder, r));
  Vec w = policy.out_std.invert(forward(policy.regressor, z));
  return decode(policy.decoder, w);
}

SamplewisePolicy nn_ilc_build(const TrajectoryClass& cls, const Mat& H_f,
                              const NnIlcTrainOptions& opt) {
  if (cls.size() != H_f.cols())
    throw DimensionError("nn_ilc_build: label column count mismatch");
  const std::size_t N = H_f.rows();
  const std::size_t total = N * cls.size();

  // features are the profile samples 0..N-1, aligned with the force window
  Mat X(4, total), T(1, total);
  std::size_t col = 0;
  for (std::size_t j = 0; j < cls.size(); ++j) {
    const Trajectory& tr = cls.members[j];
    if (tr.horizon() != N)
      throw DimensionError("nn_ilc_build: trajectory horizon mismatch");
    for (std::size_t k = 0; k < N; ++k, ++col) {
      X(0, col) = tr.r[k];
      X(1, col) = tr.vel[k];
      X(2, col) = tr.acc[k];
      X(3, col) = tr.jerk[k];
      T(0, col) = H_f(k, j);
    }
  }

  SamplewisePolicy pol;
  pol.in_std = Standardizer::fit(X);
  pol.out_std = Standardizer::fit(T);
  Mat Xs(4, total), Ts(1, total);
  for (std::size_t c = 0; c < total; ++c) {
    set_column(Xs, c, pol.in_std.apply(column(X, c)));
    set_column(Ts, c, pol.out_std.apply(column(T, c)));
  }

  MLPArchitecture arch;
  arch.widths.push_back(4);
  arch.widths.insert(arch.widths.end(), opt.hidden.begin(), opt.hidden.end());
  arch.widths.push_back(1);
  TrainResult res = train(arch, Xs, Ts, opt.train, opt.init_seed);
  pol.net = std::move(res.params);
  pol.loss_curve = std::move(res.loss_curve);
  return pol;
}

Vec nn_ilc_predict(const SamplewisePolicy& policy, const Trajectory& traj) {
  const std::size_t N = traj.horizon();
  Vec f(N);
  Vec x(4);
  for (std::size_t k = 0; k < N; ++k) {
    x[0] = traj.r[k];
    x[1] = traj.vel[k];
    x[2] = traj.acc[k];
    x[3] = traj.jerk[k];
    f[k] = policy.out_std.invert(forward(policy.net, policy.in_std.apply(x)))[0];
  }
  return f;
}

double eta(const Mat& outputs_a, const Mat& outputs_b) {
  if (outputs_a.rows() != outputs_b.rows() || outputs_a.cols() != outputs_b.cols())
    throw DimensionError("eta: shape mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < outputs_a.cols(); ++j)
    s += norm2(column(outputs_a, j) - column(outputs_b, j));
  return s / double(outputs_a.cols());
}

EtaDecomposition eta_decomposed(const Mat& f_star, const Mat& f_recon,
                                const Mat& f_pred) {
  return {eta(f_star, f_pred), eta(f_star, f_recon), eta(f_recon, f_pred)};
}

LatentSweep select_latent_dim(const Mat& H_f, const std::vector<std::size_t>& candidates,
                              double budget) {
  if (candidates.empty())
    throw std::invalid_argument("select_latent_dim: no candidates");
  LatentSweep sweep;
  for (std::size_t n_l : candidates) {
    DPCAProjector proj = fit(SignalDataset{H_f, {}}, n_l);
    Vec errs = reconstruction_error(proj, H_f);
    double mean_err = 0.0;
    for (double e : errs) mean_err += e;
    mean_err /= double(errs.size());
    sweep.curve.emplace_back(n_l, mean_err);
  }
  // prefer the smallest candidate within budget
  std::vector<std::pair<std::size_t, double>> sorted = sweep.curve;
  std::sort(sorted.begin(), sorted.end());
  for (const auto& [n_l, err] : sorted)
    if (err <= budget) {
      sweep.chosen = n_l;
      return sweep;
    }
  // none within budget: take the global minimizer
  const auto it = std::min_element(
      sweep.curve.begin(), sweep.curve.end(),
      [](const auto& a, const auto& b) { return a.second < b.second; });
  sweep.chosen = it->first;
  return sweep;
}

std::string source_name(FeedforwardSource s) {
  switch (s) {
    case FeedforwardSource::Zero: return "zero";
    case FeedforwardSource::MassFF: return "mass_ff";
    case FeedforwardSource::Expert: return "expert";
    case FeedforwardSource::Tail: return "tail";
    case FeedforwardSource::NnIlc: return "nnilc";
    case FeedforwardSource::TailPlusMass: return "tail_plus_mass";
    case FeedforwardSource::NnIlcPlusMass: return "nnilc_plus_mass";
  }
  return "unknown";
}

std::vector<std::size_t> constant_velocity_window(const Trajectory& traj) {
  double v_peak = 0.0;
  for (double v : traj.vel) v_peak = std::max(v_peak, std::abs(v));
  std::vector<std::size_t> idx;
  if (v_peak <= 0.0) return idx;
  for (std::size_t k = 1; k < traj.n_samples(); ++k)
    if (std::abs(std::abs(traj.vel[k]) - v_peak) <= 1e-6 * v_peak)
      idx.push_back(k - 1);  // error window index (samples 1..N map to 0..N-1)
  return idx;
}

PolicyEvalReport evaluate(const EvalInputs& in) {
  if (!in.loops || !in.test_cls)
    throw std::invalid_argument("evaluate: loop set and test class are required");
  const LoopSet& loops = *in.loops;
  const std::size_t N = loops.horizon;

  std::vector<FeedforwardSource> sources = in.sources;
  if (sources.empty()) {
    sources = {FeedforwardSource::Zero, FeedforwardSource::MassFF};
    if (in.H_f_test) sources.push_back(FeedforwardSource::Expert);
    if (in.tail) sources.push_back(FeedforwardSource::Tail);
    if (in.nnilc) sources.push_back(FeedforwardSource::NnIlc);
    if (in.tail_residual) sources.push_back(FeedforwardSource::TailPlusMass);
    if (in.nnilc_residual) sources.push_back(FeedforwardSource::NnIlcPlusMass);
  }

  PolicyEvalReport rep;
  for (std::size_t j = 0; j < in.test_cls->size(); ++j) {
    const Trajectory& tr = in.test_cls->members[j];
    if (tr.horizon() != N)
      throw DimensionError("evaluate: trajectory horizon mismatch");
    const Vec r = ilc_reference_window(tr);
    const Vec mass_f = ilc_force_window(mass_feedforward(tr, in.mass), N);
    const std::vector<std::size_t> window = constant_velocity_window(tr);

    for (FeedforwardSource s : sources) {
      EvalCell cell;
      cell.traj_index = j;
      cell.source = s;
      try {
        Vec f(N, 0.0);
        switch (s) {
          case FeedforwardSource::Zero: break;
          case FeedforwardSource::MassFF: f = mass_f; break;
          case FeedforwardSource::Expert:
            if (!in.H_f_test) throw std::invalid_argument("no expert labels");
            f = column(*in.H_f_test, j);
            break;
          case FeedforwardSource::Tail:
            if (!in.tail) throw std::invalid_argument("no tail policy");
            f = tail_predict(*in.tail, r);
            break;
          case FeedforwardSource::NnIlc:
            if (!in.nnilc) throw std::invalid_argument("no nnilc policy");
            f = nn_ilc_predict(*in.nnilc, tr);
            break;
          case FeedforwardSource::TailPlusMass:
            if (!in.tail_residual) throw std::invalid_argument("no residual tail policy");
            f = mass_f + tail_predict(*in.tail_residual, r);
            break;
          case FeedforwardSource::NnIlcPlusMass:
            if (!in.nnilc_residual)
              throw std::invalid_argument("no residual nnilc policy");
            f = mass_f + nn_ilc_predict(*in.nnilc_residual, tr);
            break;
        }
        const Vec e = loops.S_N * r - loops.J_N * f;
        if (!all_finite(e)) throw NumericalError("non-finite tracking error");
        if (window.empty()) throw NumericalError("no constant-velocity window");
        double peak = 0.0, ss = 0.0;
        for (std::size_t k : window) {
          peak = std::max(peak, std::abs(e[k]));
          ss += e[k] * e[k];
        }
        cell.peak_window_error = peak;
        cell.rms_window_error = std::sqrt(ss / double(window.size()));
      } catch (const std::exception& ex) {
        cell.failed = true;
        cell.message = ex.what();
      }
      rep.cells.push_back(std::move(cell));
    }
  }

  // policy distance to the expert, Eq.-style mean 2-norm over each set
  auto eta_against = [&](const TrajectoryClass& cls, const Mat& H_f, bool tail_path) {
    Mat pred(H_f.rows(), H_f.cols());
    for (std::size_t j = 0; j < cls.size(); ++j) {
      const Trajectory& tr = cls.members[j];
      Vec f = tail_path ? tail_predict(*in.tail, ilc_reference_window(tr))
                        : nn_ilc_predict(*in.nnilc, tr);
      set_column(pred, j, f);
    }
    return eta(H_f, pred);
  };
  if (in.tail && in.train_cls && in.H_f_train)
    rep.eta_tail_train = eta_against(*in.train_cls, *in.H_f_train, true);
  if (in.tail && in.H_f_test)
    rep.eta_tail_test = eta_against(*in.test_cls, *in.H_f_test, true);
  if (in.nnilc && in.train_cls && in.H_f_train)
    rep.eta_nn_train = eta_against(*in.train_cls, *in.H_f_train, false);
  if (in.nnilc && in.H_f_test)
    rep.eta_nn_test = eta_against(*in.test_cls, *in.H_f_test, false);

  // prediction timing on the first test trajectory
  const Trajectory& t0 = in.test_cls->members.front();
  const Vec r0 = ilc_reference_window(t0);
  if (in.tail) {
    volatile double sink = 0.0;
    rep.t_predict_tail_full =
        median_time([&] { sink = tail_predict(*in.tail, r0)[0]; });
    rep.t_predict_tail_per_sample = rep.t_predict_tail_full / double(N);
    (void)sink;
  }
  if (in.nnilc) {
    volatile double sink = 0.0;
    rep.t_predict_nn_full =
        median_time([&] { sink = nn_ilc_predict(*in.nnilc, t0)[0]; });
    rep.t_predict_nn_per_sample = rep.t_predict_nn_full / double(N);
    (void)sink;
  }
  return rep;
}

} // namespace tail
