#pragma once

#include "tail/matrix.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tail {

// Fully connected net: ReLU on hidden layers, identity output.
struct MLPArchitecture {
  std::vector<std::size_t> widths;  // input, hidden..., output

  void validate() const;
  std::size_t n_layers() const { return widths.size() - 1; }
  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
};

struct MLPParams {
  MLPArchitecture arch;
  std::vector<Mat> W;  // layer l: widths[l+1] x widths[l]
  std::vector<Vec> b;
  std::uint64_t init_seed = 0;

  std::size_t n_params() const;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 5000;
  std::size_t minibatch = 128;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t shuffle_seed = 1;
};

// He-scaled uniform init, deterministic in the seed.
MLPParams init_params(const MLPArchitecture& arch, std::uint64_t seed);

Vec forward(const MLPParams& params, const Vec& x);

struct Gradients {
  std::vector<Mat> dW;
  std::vector<Vec> db;
};

// Mean over the batch of ||y - t||^2 / output_width, gradient by
// reverse-mode accumulation. Batch columns are samples.
std::pair<double, Gradients> loss_and_grad(const MLPParams& params, const Mat& X,
                                           const Mat& T);

struct TrainResult {
  MLPParams params;
  std::vector<double> loss_curve;  // one entry per epoch
};

TrainResult train(const MLPArchitecture& arch, const Mat& X, const Mat& T,
                  const TrainConfig& cfg, std::uint64_t init_seed);

// Max relative deviation between analytic and central-difference gradients.
// Subsamples coordinates above 10k parameters.
double grad_check(const MLPParams& params, const Mat& X, const Mat& T,
                  double fd_step = 1e-5);

// Per-dimension affine standardization fitted on training columns.
struct Standardizer {
  Vec mean, stdev;

  static Standardizer fit(const Mat& columns);
  // Per-dimension centering but one shared scale (RMS over all entries):
  // preserves the relative magnitude ordering of the dimensions, which
  // matters when they are singular-value-weighted coordinates.
  static Standardizer fit_global_scale(const Mat& columns);
  Vec apply(const Vec& x) const;
  Vec invert(const Vec& z) const;
};

// JSON header (architecture, seed, standardizers) + raw weight payload.
void save_model(const MLPParams& params, const Standardizer& in_std,
                const Standardizer& out_std, const std::string& path);
struct LoadedModel {
  MLPParams params;
  Standardizer in_std, out_std;
};
LoadedModel load_model(const std::string& path);

} // namespace tail
