#include "tail/dpca.hpp"

#include "eigen_bridge.hpp"
#include "tail/kernels.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace tail {

std::uint64_t dataset_fingerprint(const Mat& H) {
  // FNV-1a over dimensions and payload bytes
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  std::uint64_t r = H.rows(), c = H.cols();
  mix(&r, sizeof r);
  mix(&c, sizeof c);
  mix(H.data(), sizeof(double) * H.rows() * H.cols());
  return h;
}

DPCAProjector fit(const SignalDataset& data, std::size_t n_l, bool mean_center) {
  const std::size_t nd = data.n_d(), nt = data.n_t();
  if (nt < 1) throw std::invalid_argument("dpca fit: empty dataset");
  if (n_l < 1 || n_l > nt)
    throw std::invalid_argument("dpca fit: n_l must be in [1, n_t]");
  for (std::size_t i = 0; i < nd * nt; ++i)
    if (!std::isfinite(data.H.data()[i]))
      throw std::invalid_argument("dpca fit: dataset contains non-finite values");

  Mat H = data.H;
  Vec mean;
  if (mean_center) {
    mean.assign(nd, 0.0);
    for (std::size_t i = 0; i < nd; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < nt; ++j) s += H(i, j);
      mean[i] = s / double(nt);
      for (std::size_t j = 0; j < nt; ++j) H(i, j) -= mean[i];
    }
  }

  // dual route: Gram matrix eigenproblem, cheap since n_t << n_d
  Mat G(nt, nt);
  for (std::size_t a = 0; a < nt; ++a)
    for (std::size_t b = a; b < nt; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < nd; ++i) s += H(i, a) * H(i, b);
      G(a, b) = G(b, a) = s;
    }
  Eigen::SelfAdjointEigenSolver<EMat> es(emap(G));
  if (es.info() != Eigen::Success)
    throw NumericalError("dpca fit: Gram eigendecomposition failed");

  // eigenvalues ascending; reorder descending
  Vec sigma(nt);
  Mat V(nt, nt);
  for (std::size_t j = 0; j < nt; ++j) {
    const std::size_t src = nt - 1 - j;
    sigma[j] = std::sqrt(std::max(0.0, es.eigenvalues()(src)));
    for (std::size_t i = 0; i < nt; ++i) V(i, j) = es.eigenvectors()(i, src);
  }

  // the dual route squares the condition number: singular values below
  // ~sqrt(eps) * sigma_max are indistinguishable from Gram eigen noise
  if (sigma[n_l - 1] <= 1e-7 * sigma[0]) {
    std::string spectrum;
    for (std::size_t j = 0; j < nt; ++j)
      spectrum += (j ? ", " : "") + std::to_string(sigma[j]);
    throw RankError("dpca fit: n_l = " + std::to_string(n_l) +
                    " exceeds numerical rank; singular spectrum = [" + spectrum + "]");
  }

  DPCAProjector proj;
  proj.n_l = n_l;
  proj.singular_values = sigma;
  proj.dataset_fingerprint = dataset_fingerprint(data.H);
  proj.T_D = Mat(nd, n_l);
  for (std::size_t j = 0; j < n_l; ++j) {
    // T_D column j = H v_j / sigma_j
    Vec col(nd, 0.0);
    for (std::size_t i = 0; i < nd; ++i) {
      double s = 0.0;
      for (std::size_t a = 0; a < nt; ++a) s += H(i, a) * V(a, j);
      col[i] = s / sigma[j];
    }
    // sign convention: largest-magnitude entry positive
    double best = 0.0;
    for (double v : col)
      if (std::abs(v) > std::abs(best)) best = v;
    const double flip = best < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < nd; ++i) proj.T_D(i, j) = flip * col[i];
  }
  proj.T_E = transpose(proj.T_D);
  proj.mean = mean;
  return proj;
}

Vec encode(const DPCAProjector& proj, const Vec& x) {
  if (x.size() != proj.n_d()) throw DimensionError("dpca encode: length mismatch");
  if (proj.mean.empty()) return proj.T_E * x;
  return proj.T_E * (x - proj.mean);
}

Vec decode(const DPCAProjector& proj, const Vec& z) {
  if (z.size() != proj.n_l) throw DimensionError("dpca decode: length mismatch");
  Vec x = proj.T_D * z;
  if (!proj.mean.empty()) x = x + proj.mean;
  return x;
}

Vec reconstruction_error(const DPCAProjector& proj, const Mat& columns) {
  if (columns.rows() != proj.n_d())
    throw DimensionError("dpca reconstruction_error: column length mismatch");
  Vec errs(columns.cols());
  Vec x(columns.rows());
  for (std::size_t j = 0; j < columns.cols(); ++j) {
    for (std::size_t i = 0; i < columns.rows(); ++i) x[i] = columns(i, j);
    Vec rec = decode(proj, encode(proj, x));
    errs[j] = norm2(x - rec);
  }
  return errs;
}

namespace {
nlohmann::json mat_json(const Mat& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.rows() * m.cols())}};
}
Mat mat_unjson(const nlohmann::json& j) {
  Mat m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  auto d = j.at("data").get<std::vector<double>>();
  std::copy(d.begin(), d.end(), m.data());
  return m;
}
} // namespace

std::string to_json(const DPCAProjector& proj) {
  nlohmann::json j;
  j["n_l"] = proj.n_l;
  j["T_E"] = mat_json(proj.T_E);
  j["T_D"] = mat_json(proj.T_D);
  j["singular_values"] = proj.singular_values;
  j["dataset_fingerprint"] = proj.dataset_fingerprint;
  j["mean"] = proj.mean;
  return j.dump();
}

DPCAProjector projector_from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  DPCAProjector p;
  p.n_l = j.at("n_l").get<std::size_t>();
  p.T_E = mat_unjson(j.at("T_E"));
  p.T_D = mat_unjson(j.at("T_D"));
  p.singular_values = j.at("singular_values").get<Vec>();
  p.dataset_fingerprint = j.at("dataset_fingerprint").get<std::uint64_t>();
  p.mean = j.value("mean", Vec{});
  return p;
}

} // namespace tail
