#include "tail/pipeline.hpp"

#include "tail/dpca.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace tail {

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::uint64_t fnv1a(const void* p, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
  const auto* b = static_cast<const unsigned char*>(p);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 1099511628211ull;
  }
  return h;
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + tmp);
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  fs::rename(tmp, path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename F>
void parallel_for(std::size_t n, std::size_t jobs, F&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(jobs, n); ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

json student_json(const StudentConfig& s) {
  return {{"hidden", s.hidden},
          {"learning_rate", s.train.learning_rate},
          {"epochs", s.train.epochs},
          {"minibatch", s.train.minibatch},
          {"beta1", s.train.beta1},
          {"beta2", s.train.beta2},
          {"adam_eps", s.train.adam_eps},
          {"shuffle_seed", s.train.shuffle_seed},
          {"init_seed", s.init_seed}};
}

StudentConfig student_unjson(const json& j) {
  StudentConfig s;
  s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  s.train.learning_rate = j.at("learning_rate").get<double>();
  s.train.epochs = j.at("epochs").get<std::size_t>();
  s.train.minibatch = j.at("minibatch").get<std::size_t>();
  s.train.beta1 = j.value("beta1", 0.9);
  s.train.beta2 = j.value("beta2", 0.999);
  s.train.adam_eps = j.value("adam_eps", 1e-8);
  s.train.shuffle_seed = j.at("shuffle_seed").get<std::uint64_t>();
  s.init_seed = j.at("init_seed").get<std::uint64_t>();
  return s;
}

const char* kGridKeys[5] = {"displacement", "v_max", "a_max", "j_max", "s_max"};

std::string traj_filename(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "traj_%03zu.csv", i);
  return buf;
}

// manifest helpers ----------------------------------------------------------

std::string manifest_path(const std::string& out_dir) { return out_dir + "/manifest.json"; }

// Loads the manifest (empty if absent) and reconciles it with the current
// config fingerprint: mismatch throws unless force, which resets all stages.
RunManifest open_manifest(const PipelineContext& ctx) {
  RunManifest m;
  m.fingerprint = config_fingerprint(ctx.cfg);
  const std::string path = manifest_path(ctx.out_dir);
  if (!fs::exists(path)) return m;
  RunManifest disk = load_manifest(ctx.out_dir);
  if (disk.fingerprint != m.fingerprint) {
    if (!ctx.force)
      throw StaleManifestError(
          "manifest fingerprint mismatch (config changed since outputs were "
          "written); rerun with --force to rebuild");
    return m;  // fresh manifest, stages reset
  }
  return disk;
}

void require_stage(const RunManifest& m, const std::string& stage,
                   const std::string& out_dir) {
  if (!m.stage_done(stage))
    throw StaleManifestError("stage '" + stage + "' has not completed");
  for (const auto& [rel, sum] : m.files) {
    const std::string path = out_dir + "/" + rel;
    if (!fs::exists(path))
      throw StaleManifestError("artifact missing: " + rel);
    if (file_checksum(path) != sum)
      throw StaleManifestError("artifact checksum mismatch: " + rel);
  }
}

void record_file(RunManifest& m, const std::string& out_dir, const std::string& rel) {
  m.files[rel] = file_checksum(out_dir + "/" + rel);
}

void mark_stage(RunManifest& m, const std::string& stage, const std::string& out_dir) {
  if (!m.stage_done(stage)) m.completed.push_back(stage);
  save_manifest(m, out_dir);
}

// stage-shared reconstruction ------------------------------------------------

ILCFilters design_filters(const ExperimentConfig& cfg, const LoopSet& loops) {
  ILCFilters f;
  f.lambda_reg = cfg.lambda_reg;
  f.q_cutoff_hz = cfg.q_cutoff_hz;
  f.L = design_L(loops.J_N, cfg.lambda_reg);
  f.Q = design_Q(loops.horizon, cfg.q_cutoff_hz, cfg.plant.Ts);
  return f;
}

struct LoadedStudents {
  StudentPolicy tail, tail_residual;
  SamplewisePolicy nnilc, nnilc_residual;
};

StudentPolicy load_tail_policy(const std::string& out_dir, const std::string& prefix) {
  StudentPolicy p;
  p.encoder = projector_from_json(read_text(out_dir + "/" + prefix + "_encoder.json"));
  p.decoder = projector_from_json(read_text(out_dir + "/" + prefix + "_decoder.json"));
  LoadedModel lm = load_model(out_dir + "/" + prefix + "_regressor.tmlp");
  p.regressor = std::move(lm.params);
  p.in_std = std::move(lm.in_std);
  p.out_std = std::move(lm.out_std);
  return p;
}

SamplewisePolicy load_nnilc_policy(const std::string& out_dir, const std::string& prefix) {
  SamplewisePolicy p;
  LoadedModel lm = load_model(out_dir + "/" + prefix + "_model.tmlp");
  p.net = std::move(lm.params);
  p.in_std = std::move(lm.in_std);
  p.out_std = std::move(lm.out_std);
  return p;
}

void write_loss_csv(const std::string& path, const std::vector<double>& curve) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "epoch,loss\n";
  for (std::size_t i = 0; i < curve.size(); ++i) ss << i << ',' << curve[i] << '\n';
  write_text_atomic(path, ss.str());
}

Mat residual_labels(const Mat& H_f, const TrajectoryClass& cls, double mass) {
  Mat R = H_f;
  for (std::size_t j = 0; j < cls.size(); ++j) {
    const Vec mf = ilc_force_window(mass_feedforward(cls.members[j], mass), H_f.rows());
    for (std::size_t i = 0; i < H_f.rows(); ++i) R(i, j) -= mf[i];
  }
  return R;
}

} // namespace

// config ----------------------------------------------------------------------

void ExperimentConfig::validate() const {
  plant.validate();
  if (lambda_reg < 0.0) throw ConfigError("lambda_reg must be >= 0");
  if (q_cutoff_hz && (*q_cutoff_hz <= 0.0 || *q_cutoff_hz >= 0.5 / plant.Ts))
    throw ConfigError("q_cutoff_hz must lie in (0, Nyquist)");
  if (expert.tol <= 0.0 || expert.max_trials == 0)
    throw ConfigError("expert options invalid");
  std::size_t members = 1;
  for (std::size_t a = 0; a < 5; ++a) {
    if (grid[a].empty())
      throw ConfigError(std::string("grid axis '") + kGridKeys[a] + "' is empty");
    members *= grid[a].size();
  }
  if (test_indices.empty() || test_indices.size() >= members)
    throw ConfigError("test_indices must be a nonempty strict subset of the class");
  for (std::size_t i : test_indices)
    if (i >= members) throw ConfigError("test index out of range");
  if (!latent.auto_select && latent.n_l == 0)
    throw ConfigError("n_l must be positive (or auto)");
  if (latent.auto_select && latent.budget <= 0.0)
    throw ConfigError("latent budget must be positive");
  for (const StudentConfig* s : {&tail_student, &nnilc_student}) {
    if (s->train.learning_rate <= 0.0 || s->train.epochs == 0 || s->train.minibatch == 0)
      throw ConfigError("training config invalid");
    for (std::size_t w : s->hidden)
      if (w == 0) throw ConfigError("hidden width must be positive");
  }
  if (output_dir.empty()) throw ConfigError("output_dir must be set");
}

std::string to_json(const ExperimentConfig& cfg) {
  json j;
  j["plant"] = json::parse(to_json(cfg.plant));
  j["filters"] = {{"lambda_reg", cfg.lambda_reg},
                  {"q_cutoff_hz", cfg.q_cutoff_hz ? json(*cfg.q_cutoff_hz) : json()}};
  j["expert"] = {{"tol", cfg.expert.tol}, {"max_trials", cfg.expert.max_trials}};
  json grid;
  for (std::size_t a = 0; a < 5; ++a) grid[kGridKeys[a]] = cfg.grid[a];
  j["grid"] = grid;
  j["test_indices"] = cfg.test_indices;
  j["latent"] = {{"mode", cfg.latent.auto_select ? "auto" : "fixed"},
                 {"n_l", cfg.latent.n_l},
                 {"budget", cfg.latent.budget}};
  j["tail"] = student_json(cfg.tail_student);
  j["nnilc"] = student_json(cfg.nnilc_student);
  j["output_dir"] = cfg.output_dir;
  return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config parse error: ") + ex.what());
  }
  try {
    ExperimentConfig cfg;
    cfg.plant = plant_config_from_json(j.at("plant").dump());
    const json& f = j.at("filters");
    cfg.lambda_reg = f.at("lambda_reg").get<double>();
    if (f.contains("q_cutoff_hz") && !f.at("q_cutoff_hz").is_null())
      cfg.q_cutoff_hz = f.at("q_cutoff_hz").get<double>();
    if (j.contains("expert")) {
      cfg.expert.tol = j["expert"].value("tol", 1e-8);
      cfg.expert.max_trials = j["expert"].value("max_trials", std::size_t{100});
    }
    for (std::size_t a = 0; a < 5; ++a)
      cfg.grid[a] = j.at("grid").at(kGridKeys[a]).get<std::vector<double>>();
    cfg.test_indices = j.at("test_indices").get<std::vector<std::size_t>>();
    const json& lat = j.at("latent");
    cfg.latent.auto_select = lat.at("mode").get<std::string>() == "auto";
    cfg.latent.n_l = lat.value("n_l", std::size_t{0});
    cfg.latent.budget = lat.value("budget", 1e-9);
    cfg.tail_student = student_unjson(j.at("tail"));
    cfg.nnilc_student = student_unjson(j.at("nnilc"));
    cfg.output_dir = j.value("output_dir", std::string("out"));
    cfg.validate();
    return cfg;
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config field error: ") + ex.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  return config_from_json(read_text(path));
}

std::uint64_t config_fingerprint(const ExperimentConfig& cfg) {
  // output location is not part of the experiment's content identity
  ExperimentConfig canon_cfg = cfg;
  canon_cfg.output_dir.clear();
  const std::string canon = to_json(canon_cfg);
  return fnv1a(canon.data(), canon.size());
}

// manifest ---------------------------------------------------------------------

bool RunManifest::stage_done(const std::string& stage) const {
  return std::find(completed.begin(), completed.end(), stage) != completed.end();
}

std::uint64_t file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("file_checksum: cannot open " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[65536];
  while (in.read(buf, sizeof buf) || in.gcount() > 0)
    h = fnv1a(buf, std::size_t(in.gcount()), h);
  return h;
}

void save_manifest(const RunManifest& m, const std::string& out_dir) {
  json j;
  j["fingerprint"] = m.fingerprint;
  j["completed"] = m.completed;
  json files = json::object();
  for (const auto& [k, v] : m.files) files[k] = v;
  j["files"] = files;
  json timings = json::object();
  for (const auto& [k, v] : m.timings) timings[k] = v;
  j["timings"] = timings;
  write_text_atomic(manifest_path(out_dir), j.dump(2));
}

RunManifest load_manifest(const std::string& out_dir) {
  const std::string path = manifest_path(out_dir);
  if (!fs::exists(path)) throw StaleManifestError("no manifest in " + out_dir);
  json j = json::parse(read_text(path));
  RunManifest m;
  m.fingerprint = j.at("fingerprint").get<std::uint64_t>();
  m.completed = j.at("completed").get<std::vector<std::string>>();
  for (const auto& [k, v] : j.at("files").items()) m.files[k] = v.get<std::uint64_t>();
  for (const auto& [k, v] : j.at("timings").items()) m.timings[k] = v.get<double>();
  return m;
}

PipelineContext make_context(const ExperimentConfig& cfg, int jobs, bool force) {
  cfg.validate();
  PipelineContext ctx;
  ctx.cfg = cfg;
  ctx.jobs = jobs < 1 ? 1 : jobs;
  ctx.force = force;
  ctx.out_dir = cfg.output_dir;
  if (const char* root = std::getenv("TAIL_OUTPUT_ROOT"); root && *root)
    ctx.out_dir = std::string(root) + "/" + cfg.output_dir;
  return ctx;
}

DeskBundle build_desk_bundle(const ExperimentConfig& cfg) {
  DeskBundle b;
  b.all = build_class(cfg.grid, cfg.plant.Ts);
  auto [train_cls, test_cls] = split_class(b.all, cfg.test_indices);
  b.train_cls = std::move(train_cls);
  b.test_cls = std::move(test_cls);
  b.loops = build_loopset(cfg.plant, b.all.members.front().horizon());
  b.filters = design_filters(cfg, b.loops);
  return b;
}

// stages -------------------------------------------------------------------

void cmd_gen(const PipelineContext& ctx) {
  fs::create_directories(ctx.out_dir);
  RunManifest m = open_manifest(ctx);
  if (m.stage_done("gen") && !ctx.force) {
    require_stage(m, "gen", ctx.out_dir);
    std::cout << "gen: up-to-date\n";
    return;
  }

  TrajectoryClass cls = build_class(ctx.cfg.grid, ctx.cfg.plant.Ts);
  parallel_for(cls.size(), std::size_t(ctx.jobs), [&](std::size_t i) {
    save_trajectory_csv(cls.members[i], ctx.out_dir + "/" + traj_filename(i));
  });

  json cm;
  cm["Ts"] = cls.Ts;
  cm["n_members"] = cls.size();
  cm["horizon"] = cls.members.front().horizon();
  cm["test_indices"] = ctx.cfg.test_indices;
  json members = json::array();
  for (std::size_t i = 0; i < cls.size(); ++i) {
    const auto& p = cls.members[i].params;
    members.push_back({{"file", traj_filename(i)},
                       {"displacement", p.displacement},
                       {"v_max", p.v_max},
                       {"a_max", p.a_max},
                       {"j_max", p.j_max},
                       {"s_max", p.s_max}});
  }
  cm["members"] = members;
  write_text_atomic(ctx.out_dir + "/class_manifest.json", cm.dump(2));

  for (std::size_t i = 0; i < cls.size(); ++i)
    record_file(m, ctx.out_dir, traj_filename(i));
  record_file(m, ctx.out_dir, "class_manifest.json");
  mark_stage(m, "gen", ctx.out_dir);
  std::cout << "gen: wrote " << cls.size() << " trajectories\n";
}

void cmd_label(const PipelineContext& ctx) {
  RunManifest m = open_manifest(ctx);
  require_stage(m, "gen", ctx.out_dir);
  if (m.stage_done("label") && !ctx.force) {
    std::cout << "label: up-to-date\n";
    return;
  }

  DeskBundle b = build_desk_bundle(ctx.cfg);
  const double t0 = now_seconds();
  LabeledData train = label_dataset(b.train_cls, b.loops, b.filters, ctx.cfg.expert,
                                    std::size_t(ctx.jobs));
  LabeledData test = label_dataset(b.test_cls, b.loops, b.filters, ctx.cfg.expert,
                                   std::size_t(ctx.jobs));
  m.timings["t_label"] = now_seconds() - t0;

  save_mat(train.H_r, ctx.out_dir + "/H_r_train.tmat");
  save_mat(train.H_f, ctx.out_dir + "/H_f_train.tmat");
  save_mat(test.H_r, ctx.out_dir + "/H_r_test.tmat");
  save_mat(test.H_f, ctx.out_dir + "/H_f_test.tmat");

  json s;
  s["margin"] = train.margin;
  auto hist_json = [](const std::vector<ExpertResult>& hs) {
    json arr = json::array();
    for (const auto& h : hs)
      arr.push_back({{"trials", h.trials},
                     {"final_error_norm2", h.e_norm2_history.empty()
                                               ? 0.0
                                               : h.e_norm2_history.back()},
                     {"error_norm2_history", h.e_norm2_history}});
    return arr;
  };
  s["train"] = hist_json(train.histories);
  s["test"] = hist_json(test.histories);
  write_text_atomic(ctx.out_dir + "/label_summary.json", s.dump(2));

  std::cout << "label: margin = " << train.margin << ", trials =";
  for (const auto& h : train.histories) std::cout << ' ' << h.trials;
  std::cout << '\n';

  for (const char* f : {"H_r_train.tmat", "H_f_train.tmat", "H_r_test.tmat",
                        "H_f_test.tmat", "label_summary.json"})
    record_file(m, ctx.out_dir, f);
  mark_stage(m, "label", ctx.out_dir);
}

void cmd_train(const PipelineContext& ctx, const std::string& which) {
  if (which != "tail" && which != "nnilc")
    throw ConfigError("train: --which must be tail or nnilc");
  RunManifest m = open_manifest(ctx);
  require_stage(m, "label", ctx.out_dir);
  const std::string stage = "train_" + which;
  if (m.stage_done(stage) && !ctx.force) {
    std::cout << stage << ": up-to-date\n";
    return;
  }

  Mat H_r = load_mat(ctx.out_dir + "/H_r_train.tmat");
  Mat H_f = load_mat(ctx.out_dir + "/H_f_train.tmat");
  DeskBundle b = build_desk_bundle(ctx.cfg);
  const Mat H_f_res = residual_labels(H_f, b.train_cls, ctx.cfg.plant.mass);

  if (which == "tail") {
    TailTrainOptions opt;
    opt.hidden = ctx.cfg.tail_student.hidden;
    opt.train = ctx.cfg.tail_student.train;
    opt.init_seed = ctx.cfg.tail_student.init_seed;
    std::size_t n_l = ctx.cfg.latent.n_l;
    if (ctx.cfg.latent.auto_select) {
      std::vector<std::size_t> cands(H_f.cols());
      for (std::size_t i = 0; i < cands.size(); ++i) cands[i] = i + 1;
      n_l = select_latent_dim(H_f, cands, ctx.cfg.latent.budget).chosen;
    }
    opt.n_l = n_l;

    const double t0 = now_seconds();
    StudentPolicy pol = build_tail_policy(H_r, H_f, opt);
    m.timings["t_train_tail"] = now_seconds() - t0;
    StudentPolicy res = build_tail_policy(H_r, H_f_res, opt);

    auto persist = [&](const StudentPolicy& p, const std::string& prefix) {
      write_text_atomic(ctx.out_dir + "/" + prefix + "_encoder.json", to_json(p.encoder));
      write_text_atomic(ctx.out_dir + "/" + prefix + "_decoder.json", to_json(p.decoder));
      save_model(p.regressor, p.in_std, p.out_std,
                 ctx.out_dir + "/" + prefix + "_regressor.tmlp");
      write_loss_csv(ctx.out_dir + "/" + prefix + "_loss.csv", p.loss_curve);
      for (const std::string& suffix :
           {std::string("_encoder.json"), std::string("_decoder.json"),
            std::string("_regressor.tmlp"), std::string("_loss.csv")})
        record_file(m, ctx.out_dir, prefix + suffix);
    };
    persist(pol, "tail");
    persist(res, "tail_residual");
    json s = {{"n_l", n_l},
              {"final_loss", pol.loss_curve.empty() ? 0.0 : pol.loss_curve.back()}};
    write_text_atomic(ctx.out_dir + "/train_tail_summary.json", s.dump(2));
    record_file(m, ctx.out_dir, "train_tail_summary.json");
    std::cout << "train tail: n_l = " << n_l
              << ", final loss = " << (pol.loss_curve.empty() ? 0.0 : pol.loss_curve.back())
              << '\n';
  } else {
    NnIlcTrainOptions opt;
    opt.hidden = ctx.cfg.nnilc_student.hidden;
    opt.train = ctx.cfg.nnilc_student.train;
    opt.init_seed = ctx.cfg.nnilc_student.init_seed;

    const double t0 = now_seconds();
    SamplewisePolicy pol = nn_ilc_build(b.train_cls, H_f, opt);
    m.timings["t_train_nnilc"] = now_seconds() - t0;
    SamplewisePolicy res = nn_ilc_build(b.train_cls, H_f_res, opt);

    auto persist = [&](const SamplewisePolicy& p, const std::string& prefix) {
      save_model(p.net, p.in_std, p.out_std, ctx.out_dir + "/" + prefix + "_model.tmlp");
      write_loss_csv(ctx.out_dir + "/" + prefix + "_loss.csv", p.loss_curve);
      record_file(m, ctx.out_dir, prefix + "_model.tmlp");
      record_file(m, ctx.out_dir, prefix + "_loss.csv");
    };
    persist(pol, "nnilc");
    persist(res, "nnilc_residual");
    std::cout << "train nnilc: final loss = "
              << (pol.loss_curve.empty() ? 0.0 : pol.loss_curve.back()) << '\n';
  }
  mark_stage(m, stage, ctx.out_dir);
}

void cmd_eval(const PipelineContext& ctx, const std::vector<std::string>& sources) {
  RunManifest m = open_manifest(ctx);
  require_stage(m, "label", ctx.out_dir);

  std::vector<FeedforwardSource> wanted;
  for (const std::string& s : sources) {
    bool found = false;
    for (FeedforwardSource fsrc :
         {FeedforwardSource::Zero, FeedforwardSource::MassFF, FeedforwardSource::Expert,
          FeedforwardSource::Tail, FeedforwardSource::NnIlc,
          FeedforwardSource::TailPlusMass, FeedforwardSource::NnIlcPlusMass})
      if (source_name(fsrc) == s) {
        wanted.push_back(fsrc);
        found = true;
      }
    if (!found) throw ConfigError("eval: unknown source '" + s + "'");
  }
  auto needs = [&](FeedforwardSource s) {
    return wanted.empty() ||
           std::find(wanted.begin(), wanted.end(), s) != wanted.end();
  };
  const bool need_tail =
      needs(FeedforwardSource::Tail) || needs(FeedforwardSource::TailPlusMass);
  const bool need_nn =
      needs(FeedforwardSource::NnIlc) || needs(FeedforwardSource::NnIlcPlusMass);
  if (need_tail) require_stage(m, "train_tail", ctx.out_dir);
  if (need_nn) require_stage(m, "train_nnilc", ctx.out_dir);

  DeskBundle b = build_desk_bundle(ctx.cfg);
  Mat H_f_train = load_mat(ctx.out_dir + "/H_f_train.tmat");
  Mat H_f_test = load_mat(ctx.out_dir + "/H_f_test.tmat");

  LoadedStudents st;
  if (need_tail) {
    st.tail = load_tail_policy(ctx.out_dir, "tail");
    st.tail_residual = load_tail_policy(ctx.out_dir, "tail_residual");
  }
  if (need_nn) {
    st.nnilc = load_nnilc_policy(ctx.out_dir, "nnilc");
    st.nnilc_residual = load_nnilc_policy(ctx.out_dir, "nnilc_residual");
  }

  EvalInputs in;
  in.loops = &b.loops;
  in.train_cls = &b.train_cls;
  in.test_cls = &b.test_cls;
  in.H_f_train = &H_f_train;
  in.H_f_test = &H_f_test;
  in.mass = ctx.cfg.plant.mass;
  in.sources = wanted;
  if (need_tail) {
    in.tail = &st.tail;
    in.tail_residual = &st.tail_residual;
  }
  if (need_nn) {
    in.nnilc = &st.nnilc;
    in.nnilc_residual = &st.nnilc_residual;
  }
  PolicyEvalReport rep = evaluate(in);

  // training-set view for the seen-vs-unseen contrast
  EvalInputs in_train = in;
  in_train.test_cls = &b.train_cls;
  in_train.H_f_test = &H_f_train;
  in_train.sources = {FeedforwardSource::MassFF, FeedforwardSource::Expert};
  if (need_tail) in_train.sources.push_back(FeedforwardSource::Tail);
  if (need_nn) in_train.sources.push_back(FeedforwardSource::NnIlc);
  PolicyEvalReport rep_train = evaluate(in_train);

  std::size_t ok = 0;
  auto cells_csv = [](const PolicyEvalReport& r) {
    std::ostringstream ss;
    ss.precision(17);
    ss << "traj_index,source,peak_window_error,rms_window_error,failed,message\n";
    for (const auto& c : r.cells)
      ss << c.traj_index << ',' << source_name(c.source) << ',' << c.peak_window_error
         << ',' << c.rms_window_error << ',' << (c.failed ? 1 : 0) << ','
         << c.message << '\n';
    return ss.str();
  };
  for (const auto& c : rep.cells)
    if (!c.failed) ++ok;
  write_text_atomic(ctx.out_dir + "/report_test.csv", cells_csv(rep));
  write_text_atomic(ctx.out_dir + "/report_train.csv", cells_csv(rep_train));
  if (ok == 0) throw NumericalError("eval: every cell failed");

  // windowed error traces for external plotting
  std::vector<std::string> trace_files;
  for (std::size_t j = 0; j < b.test_cls.size(); ++j) {
    const Trajectory& tr = b.test_cls.members[j];
    const Vec r = ilc_reference_window(tr);
    const auto window = constant_velocity_window(tr);
    std::ostringstream ss;
    ss.precision(17);
    ss << "sample,time";
    std::vector<std::pair<FeedforwardSource, Vec>> errs;
    auto add = [&](FeedforwardSource s, const Vec& f) {
      errs.emplace_back(s, b.loops.S_N * r - b.loops.J_N * f);
      ss << ",e_" << source_name(s);
    };
    const Vec mass_f =
        ilc_force_window(mass_feedforward(tr, ctx.cfg.plant.mass), b.loops.horizon);
    if (needs(FeedforwardSource::MassFF)) add(FeedforwardSource::MassFF, mass_f);
    if (needs(FeedforwardSource::Expert)) {
      Vec fe(H_f_test.rows());
      for (std::size_t i = 0; i < fe.size(); ++i) fe[i] = H_f_test(i, j);
      add(FeedforwardSource::Expert, fe);
    }
    if (need_tail && needs(FeedforwardSource::Tail))
      add(FeedforwardSource::Tail, tail_predict(st.tail, r));
    if (need_nn && needs(FeedforwardSource::NnIlc))
      add(FeedforwardSource::NnIlc, nn_ilc_predict(st.nnilc, tr));
    ss << '\n';
    for (std::size_t k : window) {
      ss << (k + 1) << ',' << double(k + 1) * ctx.cfg.plant.Ts;
      for (const auto& [s, e] : errs) ss << ',' << e[k];
      ss << '\n';
    }
    char name[48];
    std::snprintf(name, sizeof name, "trace_test_%03zu.csv", j);
    write_text_atomic(ctx.out_dir + "/" + std::string(name), ss.str());
    trace_files.emplace_back(name);
  }

  // aggregate peaks per source (mean over trajectories)
  auto mean_peak = [](const PolicyEvalReport& r, FeedforwardSource s) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : r.cells)
      if (c.source == s && !c.failed) {
        sum += c.peak_window_error;
        ++n;
      }
    return n ? sum / double(n) : std::numeric_limits<double>::quiet_NaN();
  };

  json s;
  s["horizon"] = b.loops.horizon;
  s["margin"] = convergence_margin(b.loops.J_N, b.filters.L, b.filters.Q);
  json peaks_test = json::object(), peaks_train = json::object();
  for (FeedforwardSource src :
       {FeedforwardSource::Zero, FeedforwardSource::MassFF, FeedforwardSource::Expert,
        FeedforwardSource::Tail, FeedforwardSource::NnIlc,
        FeedforwardSource::TailPlusMass, FeedforwardSource::NnIlcPlusMass}) {
    const double pt = mean_peak(rep, src);
    if (std::isfinite(pt)) peaks_test[source_name(src)] = pt;
    const double pr = mean_peak(rep_train, src);
    if (std::isfinite(pr)) peaks_train[source_name(src)] = pr;
  }
  s["mean_peak_error_test"] = peaks_test;
  s["mean_peak_error_train"] = peaks_train;
  json tail_fields = json::object(), nn_fields = json::object();
  if (need_tail) {
    tail_fields = {{"t_train", m.timings.count("t_train_tail") ? m.timings["t_train_tail"] : 0.0},
                   {"t_predict_full", rep.t_predict_tail_full},
                   {"t_predict_per_sample", rep.t_predict_tail_per_sample},
                   {"e_peak_test", mean_peak(rep, FeedforwardSource::Tail)},
                   {"eta_train", rep.eta_tail_train},
                   {"eta_test", rep.eta_tail_test}};
  }
  if (need_nn) {
    nn_fields = {{"t_train", m.timings.count("t_train_nnilc") ? m.timings["t_train_nnilc"] : 0.0},
                 {"t_predict_full", rep.t_predict_nn_full},
                 {"t_predict_per_sample", rep.t_predict_nn_per_sample},
                 {"e_peak_test", mean_peak(rep, FeedforwardSource::NnIlc)},
                 {"eta_train", rep.eta_nn_train},
                 {"eta_test", rep.eta_nn_test}};
  }
  s["tail"] = tail_fields;
  s["nnilc"] = nn_fields;
  write_text_atomic(ctx.out_dir + "/summary.json", s.dump(2));

  m.timings["t_predict_tail_full"] = rep.t_predict_tail_full;
  m.timings["t_predict_nnilc_full"] = rep.t_predict_nn_full;
  // summary.json carries wall-clock timings, so it stays out of the
  // checksummed (deterministic) inventory; everything else is recorded.
  for (const char* f : {"report_test.csv", "report_train.csv"})
    record_file(m, ctx.out_dir, f);
  for (const std::string& f : trace_files) record_file(m, ctx.out_dir, f);
  mark_stage(m, "eval", ctx.out_dir);
  std::cout << "eval: wrote summary.json (" << ok << "/" << rep.cells.size()
            << " cells ok)\n";
}

ReproReport cmd_repro(const PipelineContext& ctx, const std::string& start_stage) {
  const std::vector<std::string> order = {"gen", "label", "train_tail", "train_nnilc",
                                          "eval"};
  auto it = std::find(order.begin(), order.end(), start_stage);
  if (it == order.end() && start_stage == "train")
    it = std::find(order.begin(), order.end(), std::string("train_tail"));
  if (it == order.end())
    throw ConfigError("repro: unknown stage '" + start_stage + "'");
  for (; it != order.end(); ++it) {
    if (*it == "gen") cmd_gen(ctx);
    else if (*it == "label") cmd_label(ctx);
    else if (*it == "train_tail") cmd_train(ctx, "tail");
    else if (*it == "train_nnilc") cmd_train(ctx, "nnilc");
    else cmd_eval(ctx);
  }

  RunManifest m = load_manifest(ctx.out_dir);
  json s = json::parse(read_text(ctx.out_dir + "/summary.json"));

  ReproReport rep;
  auto check = [&](const std::string& name, bool pass) {
    rep.verdicts.emplace_back(name, pass);
    std::cout << (pass ? "PASS" : "FAIL") << "  " << name << '\n';
  };
  const double margin = s.at("margin").get<double>();
  check("convergence margin < 1", margin < 1.0);

  const json& pt = s.at("mean_peak_error_test");
  const json& pr = s.at("mean_peak_error_train");
  const double mass_test = pt.at("mass_ff").get<double>();
  const double expert_train = pr.at("expert").get<double>();
  if (pt.contains("tail")) {
    check("tail: test peak error <= 50% of mass feedforward",
          pt["tail"].get<double>() <= 0.5 * mass_test);
    check("tail: train peak error within 10x of expert",
          pr.at("tail").get<double>() <= 10.0 * expert_train);
  }
  if (pt.contains("nnilc")) {
    check("nnilc: test peak error <= 50% of mass feedforward",
          pt["nnilc"].get<double>() <= 0.5 * mass_test);
    check("nnilc: train peak error within 10x of expert",
          pr.at("nnilc").get<double>() <= 10.0 * expert_train);
  }
  if (!s.at("tail").empty() && !s.at("nnilc").empty()) {
    check("T_train(tail) < T_train(nnilc)",
          s["tail"].at("t_train").get<double>() < s["nnilc"].at("t_train").get<double>());
    check("T_predict_full(tail) < T_predict_full(nnilc)",
          s["tail"].at("t_predict_full").get<double>() <
              s["nnilc"].at("t_predict_full").get<double>());
  }

  rep.all_pass = true;
  for (const auto& [_, ok] : rep.verdicts) rep.all_pass = rep.all_pass && ok;
  return rep;
}

ExperimentConfig desk_config() {
  ExperimentConfig cfg;
  cfg.plant.mass = 2.0;
  cfg.plant.Ts = 1e-3;
  cfg.plant.modes = {{120.0, 0.04, 0.5}};
  cfg.lambda_reg = 0.0;
  cfg.q_cutoff_hz = 80.0;
  cfg.grid[0] = {0.0100, 0.0102, 0.0104, 0.0106, 0.0108, 0.0110, 0.0112};
  cfg.grid[1] = {0.05};
  cfg.grid[2] = {0.50, 0.51, 0.52, 0.53, 0.54, 0.55, 0.56, 0.57, 0.58, 0.59};
  cfg.grid[3] = {50.0};
  cfg.grid[4] = {5000.0};
  cfg.test_indices = {12, 17, 24, 28, 33, 41, 46, 52, 57, 63};
  cfg.latent.auto_select = false;
  cfg.latent.n_l = 15;
  cfg.latent.budget = 1e-5;
  cfg.tail_student.hidden = {64, 64, 64};
  cfg.tail_student.train.epochs = 4000;
  cfg.tail_student.train.minibatch = 60;
  cfg.tail_student.train.shuffle_seed = 1;
  cfg.tail_student.init_seed = 7;
  cfg.nnilc_student.hidden = {16, 16, 16};
  cfg.nnilc_student.train.epochs = 200;
  cfg.nnilc_student.train.minibatch = 128;
  cfg.nnilc_student.train.shuffle_seed = 2;
  cfg.nnilc_student.init_seed = 11;
  cfg.output_dir = "out";
  return cfg;
}

} // namespace tail
