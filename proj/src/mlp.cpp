#include "tail/mlp.hpp"

#include "tail/kernels.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <random>

namespace tail {

void MLPArchitecture::validate() const {
  if (widths.size() < 2)
    throw std::invalid_argument("mlp: need at least input and output widths");
  for (std::size_t w : widths)
    if (w < 1) throw std::invalid_argument("mlp: all widths must be >= 1");
}

std::size_t MLPParams::n_params() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < W.size(); ++l)
    n += W[l].rows() * W[l].cols() + b[l].size();
  return n;
}

namespace {
// deterministic uniform in [0,1) from mt19937_64 (avoids the
// implementation-defined std::uniform_real_distribution)
double unit_uniform(std::mt19937_64& rng) {
  return double(rng() >> 11) * 0x1.0p-53;
}
} // namespace

MLPParams init_params(const MLPArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  MLPParams p;
  p.arch = arch;
  p.init_seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < arch.widths.size(); ++l) {
    const std::size_t fan_in = arch.widths[l], fan_out = arch.widths[l + 1];
    const double limit = std::sqrt(6.0 / double(fan_in));
    Mat W(fan_out, fan_in);
    for (std::size_t i = 0; i < fan_out * fan_in; ++i)
      W.data()[i] = limit * (2.0 * unit_uniform(rng) - 1.0);
    p.W.push_back(std::move(W));
    p.b.emplace_back(fan_out, 0.0);
  }
  return p;
}

Vec forward(const MLPParams& params, const Vec& x) {
  if (x.size() != params.arch.input_width())
    throw DimensionError("mlp forward: input width mismatch");
  Vec a = x;
  for (std::size_t l = 0; l < params.W.size(); ++l) {
    Vec z(params.W[l].rows());
    kernels::gemv(params.W[l].data(), params.W[l].rows(), params.W[l].cols(),
                  a.data(), z.data());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += params.b[l][i];
    if (l + 1 < params.W.size())
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    a = std::move(z);
  }
  return a;
}

std::pair<double, Gradients> loss_and_grad(const MLPParams& params, const Mat& X,
                                           const Mat& T) {
  const std::size_t B = X.cols();
  if (B == 0) throw std::invalid_argument("mlp loss: empty batch");
  if (X.rows() != params.arch.input_width() || T.rows() != params.arch.output_width() ||
      T.cols() != B)
    throw DimensionError("mlp loss: batch shape mismatch");

  const std::size_t L = params.W.size();
  Gradients g;
  for (std::size_t l = 0; l < L; ++l) {
    g.dW.emplace_back(params.W[l].rows(), params.W[l].cols());
    g.db.emplace_back(params.W[l].rows(), 0.0);
  }

  const double out_w = double(params.arch.output_width());
  double loss = 0.0;
  std::vector<Vec> act(L + 1);  // pre-activation outputs per layer, per sample
  for (std::size_t s = 0; s < B; ++s) {
    act[0].assign(X.data() + 0, X.data() + 0);  // filled below
    act[0].resize(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) act[0][i] = X(i, s);
    for (std::size_t l = 0; l < L; ++l) {
      Vec z(params.W[l].rows());
      kernels::gemv(params.W[l].data(), params.W[l].rows(), params.W[l].cols(),
                    act[l].data(), z.data());
      for (std::size_t i = 0; i < z.size(); ++i) z[i] += params.b[l][i];
      if (l + 1 < L)
        for (double& v : z) v = v > 0.0 ? v : 0.0;
      act[l + 1] = std::move(z);
    }

    Vec delta(act[L].size());
    double sq = 0.0;
    for (std::size_t i = 0; i < delta.size(); ++i) {
      const double r = act[L][i] - T(i, s);
      sq += r * r;
      delta[i] = 2.0 * r / (double(B) * out_w);
    }
    loss += sq / (double(B) * out_w);

    for (std::size_t l = L; l-- > 0;) {
      // dW_l += delta * act_l^T ; db_l += delta
      for (std::size_t i = 0; i < delta.size(); ++i) {
        if (delta[i] != 0.0)
          kernels::axpy(delta[i], act[l].data(), g.dW[l].row(i), act[l].size());
        g.db[l][i] += delta[i];
      }
      if (l == 0) break;
      Vec prev(act[l].size(), 0.0);
      // W^T delta, masked by the ReLU derivative of act_l
      for (std::size_t i = 0; i < delta.size(); ++i)
        if (delta[i] != 0.0)
          kernels::axpy(delta[i], params.W[l].row(i), prev.data(), prev.size());
      for (std::size_t i = 0; i < prev.size(); ++i)
        if (act[l][i] <= 0.0) prev[i] = 0.0;
      delta = std::move(prev);
    }
  }
  if (!std::isfinite(loss))
    throw NumericalError("mlp loss: non-finite loss on batch");
  return {loss, std::move(g)};
}

TrainResult train(const MLPArchitecture& arch, const Mat& X, const Mat& T,
                  const TrainConfig& cfg, std::uint64_t init_seed) {
  arch.validate();
  if (!(cfg.learning_rate >= 0.0))
    throw std::invalid_argument("mlp train: learning rate must be >= 0");
  const std::size_t n = X.cols();
  if (n == 0) throw std::invalid_argument("mlp train: empty dataset");
  if (cfg.minibatch < 1 || cfg.minibatch > n)
    throw std::invalid_argument("mlp train: minibatch must be in [1, n]");

  TrainResult res;
  res.params = init_params(arch, init_seed);
  auto& p = res.params;

  // Adam state
  std::vector<Mat> mW, vW;
  std::vector<Vec> mb, vb;
  for (std::size_t l = 0; l < p.W.size(); ++l) {
    mW.emplace_back(p.W[l].rows(), p.W[l].cols());
    vW.emplace_back(p.W[l].rows(), p.W[l].cols());
    mb.emplace_back(p.b[l].size(), 0.0);
    vb.emplace_back(p.b[l].size(), 0.0);
  }

  std::mt19937_64 rng(cfg.shuffle_seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  std::size_t t_step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with an explicit modulo draw, deterministic across builds
    for (std::size_t i = n; i-- > 1;) {
      std::size_t j = std::size_t(rng() % (i + 1));
      std::swap(order[i], order[j]);
    }
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t at = 0; at < n; at += cfg.minibatch) {
      const std::size_t bs = std::min(cfg.minibatch, n - at);
      Mat Xb(X.rows(), bs), Tb(T.rows(), bs);
      for (std::size_t c = 0; c < bs; ++c) {
        const std::size_t src = order[at + c];
        for (std::size_t i = 0; i < X.rows(); ++i) Xb(i, c) = X(i, src);
        for (std::size_t i = 0; i < T.rows(); ++i) Tb(i, c) = T(i, src);
      }
      auto [loss, grad] = loss_and_grad(p, Xb, Tb);
      epoch_loss += loss;
      ++batches;
      if (loss > 1e12)
        throw NumericalError("mlp train: diverged (loss > 1e12) at epoch " +
                             std::to_string(epoch));

      ++t_step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, double(t_step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, double(t_step));
      auto adam = [&](double* w, double* m, double* v, const double* gr, std::size_t len) {
        for (std::size_t i = 0; i < len; ++i) {
          m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gr[i];
          v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gr[i] * gr[i];
          const double mhat = m[i] / bc1, vhat = v[i] / bc2;
          w[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
      };
      for (std::size_t l = 0; l < p.W.size(); ++l) {
        adam(p.W[l].data(), mW[l].data(), vW[l].data(), grad.dW[l].data(),
             p.W[l].rows() * p.W[l].cols());
        adam(p.b[l].data(), mb[l].data(), vb[l].data(), grad.db[l].data(),
             p.b[l].size());
      }
    }
    res.loss_curve.push_back(epoch_loss / double(batches));
  }
  return res;
}

double grad_check(const MLPParams& params, const Mat& X, const Mat& T,
                  double fd_step) {
  if (!(fd_step > 0.0)) throw std::invalid_argument("grad_check: step must be > 0");
  auto [loss0, grad] = loss_and_grad(params, X, T);
  (void)loss0;

  // flatten coordinate access across all parameters
  struct Slot {
    double* w;
    const double* g;
  };
  std::vector<Slot> slots;
  MLPParams work = params;
  for (std::size_t l = 0; l < work.W.size(); ++l) {
    for (std::size_t i = 0; i < work.W[l].rows() * work.W[l].cols(); ++i)
      slots.push_back({work.W[l].data() + i, grad.dW[l].data() + i});
    for (std::size_t i = 0; i < work.b[l].size(); ++i)
      slots.push_back({work.b[l].data() + i, grad.db[l].data() + i});
  }

  // ReLU activation pattern over the whole batch; a coordinate whose +/-h
  // perturbation flips any unit sits on a kink, where the central difference
  // does not estimate the (one-sided) analytic gradient
  auto pattern = [&](const MLPParams& p) {
    std::uint64_t hmask = 1469598103934665603ull;
    for (std::size_t s = 0; s < X.cols(); ++s) {
      Vec a(X.rows());
      for (std::size_t i = 0; i < X.rows(); ++i) a[i] = X(i, s);
      for (std::size_t l = 0; l + 1 < p.W.size(); ++l) {
        Vec z(p.W[l].rows());
        kernels::gemv(p.W[l].data(), p.W[l].rows(), p.W[l].cols(), a.data(), z.data());
        for (std::size_t i = 0; i < z.size(); ++i) {
          z[i] += p.b[l][i];
          hmask ^= std::uint64_t(z[i] > 0.0);
          hmask *= 1099511628211ull;
          if (z[i] < 0.0) z[i] = 0.0;
        }
        a = std::move(z);
      }
    }
    return hmask;
  };

  std::vector<std::size_t> picks;
  if (slots.size() > 10000) {
    std::mt19937_64 rng(12345);
    for (std::size_t k = 0; k < 2000; ++k)
      picks.push_back(std::size_t(rng() % slots.size()));
  } else {
    picks.resize(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) picks[i] = i;
  }

  double worst = 0.0;
  for (std::size_t idx : picks) {
    double& w = *slots[idx].w;
    const double saved = w;
    w = saved + fd_step;
    const double lp = loss_and_grad(work, X, T).first;
    const std::uint64_t pat_p = pattern(work);
    w = saved - fd_step;
    const double lm = loss_and_grad(work, X, T).first;
    const std::uint64_t pat_m = pattern(work);
    w = saved;
    if (pat_p != pat_m) continue;  // kink inside the stencil
    const double fd = (lp - lm) / (2.0 * fd_step);
    const double an = *slots[idx].g;
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
    worst = std::max(worst, std::abs(fd - an) / denom);
  }
  return worst;
}

Standardizer Standardizer::fit(const Mat& columns) {
  Standardizer s;
  const std::size_t d = columns.rows(), n = columns.cols();
  s.mean.assign(d, 0.0);
  s.stdev.assign(d, 1.0);
  if (n == 0) return s;
  for (std::size_t i = 0; i < d; ++i) {
    double m = 0.0;
    for (std::size_t j = 0; j < n; ++j) m += columns(i, j);
    m /= double(n);
    double v = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double r = columns(i, j) - m;
      v += r * r;
    }
    s.mean[i] = m;
    s.stdev[i] = std::max(std::sqrt(v / double(n)), 1e-12);
  }
  return s;
}

Standardizer Standardizer::fit_global_scale(const Mat& columns) {
  Standardizer s = fit(columns);
  const std::size_t d = columns.rows(), n = columns.cols();
  double ss = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double r = columns(i, j) - s.mean[i];
      ss += r * r;
    }
  const double scale = std::max(std::sqrt(ss / double(std::max<std::size_t>(d * n, 1))), 1e-12);
  s.stdev.assign(d, scale);
  return s;
}

Vec Standardizer::apply(const Vec& x) const {
  if (x.size() != mean.size()) throw DimensionError("standardizer: length mismatch");
  Vec z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - mean[i]) / stdev[i];
  return z;
}

Vec Standardizer::invert(const Vec& z) const {
  if (z.size() != mean.size()) throw DimensionError("standardizer: length mismatch");
  Vec x(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) x[i] = z[i] * stdev[i] + mean[i];
  return x;
}

void save_model(const MLPParams& params, const Standardizer& in_std,
                const Standardizer& out_std, const std::string& path) {
  nlohmann::json hdr;
  hdr["widths"] = params.arch.widths;
  hdr["init_seed"] = params.init_seed;
  hdr["in_mean"] = in_std.mean;
  hdr["in_std"] = in_std.stdev;
  hdr["out_mean"] = out_std.mean;
  hdr["out_std"] = out_std.stdev;
  const std::string header = hdr.dump();

  const std::string tmp = path + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw std::runtime_error("save_model: cannot open " + tmp);
  const char magic[4] = {'T', 'M', 'L', 'P'};
  const std::uint32_t hlen = std::uint32_t(header.size());
  std::fwrite(magic, 1, 4, f);
  std::fwrite(&hlen, 4, 1, f);
  std::fwrite(header.data(), 1, header.size(), f);
  for (std::size_t l = 0; l < params.W.size(); ++l) {
    std::fwrite(params.W[l].data(), sizeof(double),
                params.W[l].rows() * params.W[l].cols(), f);
    std::fwrite(params.b[l].data(), sizeof(double), params.b[l].size(), f);
  }
  std::fclose(f);
  std::filesystem::rename(tmp, path);
}

LoadedModel load_model(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("load_model: cannot open " + path);
  char magic[4];
  std::uint32_t hlen = 0;
  if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, "TMLP", 4) != 0 ||
      std::fread(&hlen, 4, 1, f) != 1) {
    std::fclose(f);
    throw std::runtime_error("load_model: bad header in " + path);
  }
  std::string header(hlen, '\0');
  if (std::fread(header.data(), 1, hlen, f) != hlen) {
    std::fclose(f);
    throw std::runtime_error("load_model: truncated header in " + path);
  }
  auto hdr = nlohmann::json::parse(header);

  LoadedModel m;
  m.params.arch.widths = hdr.at("widths").get<std::vector<std::size_t>>();
  m.params.init_seed = hdr.at("init_seed").get<std::uint64_t>();
  m.in_std.mean = hdr.at("in_mean").get<Vec>();
  m.in_std.stdev = hdr.at("in_std").get<Vec>();
  m.out_std.mean = hdr.at("out_mean").get<Vec>();
  m.out_std.stdev = hdr.at("out_std").get<Vec>();
  const auto& widths = m.params.arch.widths;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Mat W(widths[l + 1], widths[l]);
    Vec b(widths[l + 1]);
    if (std::fread(W.data(), sizeof(double), W.rows() * W.cols(), f) !=
            W.rows() * W.cols() ||
        std::fread(b.data(), sizeof(double), b.size(), f) != b.size()) {
      std::fclose(f);
      throw std::runtime_error("load_model: truncated weights in " + path);
    }
    m.params.W.push_back(std::move(W));
    m.params.b.push_back(std::move(b));
  }
  std::fclose(f);
  return m;
}

} // namespace tail
