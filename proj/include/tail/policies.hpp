#pragma once

#include "tail/dpca.hpp"
#include "tail/ilc.hpp"
#include "tail/mlp.hpp"
#include "tail/plant.hpp"
#include "tail/setpoint.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tail {

// Encoder -> latent regressor -> decoder composition (the TAIL student).
struct StudentPolicy {
  DPCAProjector encoder;   // fitted on reference windows
  DPCAProjector decoder;   // fitted on expert feedforward signals
  MLPParams regressor;
  Standardizer in_std, out_std;  // latent-coordinate standardization
  std::vector<double> loss_curve;
};

// Samplewise baseline: MLP from (r, v, a, j) at one sample to f at the same
// sample.
struct SamplewisePolicy {
  MLPParams net;
  Standardizer in_std, out_std;
  std::vector<double> loss_curve;
};

struct LabeledData {
  Mat H_r;  // N x n_t, reference windows
  Mat H_f;  // N x n_t, expert feedforward signals
  std::vector<ExpertResult> histories;
  double margin = 0.0;
};

// Runs the expert on every class member. Throws DivergenceError listing the
// failed members if any run diverges.
LabeledData label_dataset(const TrajectoryClass& cls, const LoopSet& loops,
                          const ILCFilters& filters, const ExpertOptions& opt = {},
                          std::size_t jobs = 1);

struct TailTrainOptions {
  std::size_t n_l = 0;  // 0 -> full numerical rank
  std::vector<std::size_t> hidden = {64, 64, 64};
  TrainConfig train;
  std::uint64_t init_seed = 7;
};

StudentPolicy build_tail_policy(const Mat& H_r, const Mat& H_f,
                                const TailTrainOptions& opt);

Vec tail_predict(const StudentPolicy& policy, const Vec& r);

struct NnIlcTrainOptions {
  std::vector<std::size_t> hidden = {16, 16, 16};
  TrainConfig train;
  std::uint64_t init_seed = 11;
};

// Pools every sample of every training trajectory: features
// (r(k), v(k), a(k), j(k)) -> f*(k).
SamplewisePolicy nn_ilc_build(const TrajectoryClass& cls, const Mat& H_f,
                              const NnIlcTrainOptions& opt);

Vec nn_ilc_predict(const SamplewisePolicy& policy, const Trajectory& traj);

// Mean over aligned columns of the 2-norm difference (the distance measure
// between two policies' outputs on the same trajectory set).
double eta(const Mat& outputs_a, const Mat& outputs_b);

struct EtaDecomposition {
  double direct;    // mean ||f* - f_hat'||
  double term_nl;   // mean ||f* - f'||, reconstruction part
  double term_mu;   // mean ||f' - f_hat'||, regression part
};

EtaDecomposition eta_decomposed(const Mat& f_star, const Mat& f_recon,
                                const Mat& f_pred);

// Smallest candidate whose mean reconstruction error meets the budget, or
// the minimizing candidate. Also reports the sweep curve.
struct LatentSweep {
  std::size_t chosen = 0;
  std::vector<std::pair<std::size_t, double>> curve;
};
LatentSweep select_latent_dim(const Mat& H_f, const std::vector<std::size_t>& candidates,
                              double budget);

enum class FeedforwardSource { Zero, MassFF, Expert, Tail, NnIlc, TailPlusMass, NnIlcPlusMass };
std::string source_name(FeedforwardSource s);

struct EvalCell {
  std::size_t traj_index = 0;
  FeedforwardSource source{};
  double peak_window_error = 0.0;
  double rms_window_error = 0.0;
  bool failed = false;
  std::string message;
};

struct PolicyEvalReport {
  std::vector<EvalCell> cells;
  double eta_tail_train = 0.0, eta_tail_test = 0.0;
  double eta_nn_train = 0.0, eta_nn_test = 0.0;
  double t_predict_tail_full = 0.0;   // seconds, median of 5, one signal
  double t_predict_nn_full = 0.0;
  double t_predict_tail_per_sample = 0.0;
  double t_predict_nn_per_sample = 0.0;
};

struct EvalInputs {
  const LoopSet* loops = nullptr;
  const TrajectoryClass* train_cls = nullptr;
  const TrajectoryClass* test_cls = nullptr;
  const Mat* H_f_train = nullptr;   // expert labels on the training class
  const Mat* H_f_test = nullptr;    // expert labels on the test class
  const StudentPolicy* tail = nullptr;
  const SamplewisePolicy* nnilc = nullptr;
  // residual students (trained on f* - mass FF) used by the +mass sources
  const StudentPolicy* tail_residual = nullptr;
  const SamplewisePolicy* nnilc_residual = nullptr;
  double mass = 1.0;
  std::vector<FeedforwardSource> sources;  // empty -> all applicable
};

PolicyEvalReport evaluate(const EvalInputs& in);

// Cruise-phase sample indices (1..N indexing of the error window) detected
// from the velocity array: |v - v_peak| <= 1e-6 v_peak.
std::vector<std::size_t> constant_velocity_window(const Trajectory& traj);

} // namespace tail
