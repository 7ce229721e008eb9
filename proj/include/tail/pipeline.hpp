#pragma once

#include "tail/ilc.hpp"
#include "tail/plant.hpp"
#include "tail/policies.hpp"
#include "tail/setpoint.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tail {

struct StaleManifestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LatentConfig {
  bool auto_select = false;
  std::size_t n_l = 0;       // used when auto_select is false
  double budget = 1e-9;      // mean reconstruction-error budget for auto
};

struct StudentConfig {
  std::vector<std::size_t> hidden;
  TrainConfig train;
  std::uint64_t init_seed = 0;
};

// Single JSON experiment description; every stochastic choice is seeded here.
struct ExperimentConfig {
  PlantConfig plant;
  double lambda_reg = 0.0;
  std::optional<double> q_cutoff_hz;
  ExpertOptions expert;
  std::array<std::vector<double>, 5> grid;  // d, v, a, j, s
  std::vector<std::size_t> test_indices;
  LatentConfig latent;
  StudentConfig tail_student;
  StudentConfig nnilc_student;
  std::string output_dir = "out";

  void validate() const;
};

ExperimentConfig config_from_json(const std::string& text);
std::string to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

// Content hash of the canonical config serialization.
std::uint64_t config_fingerprint(const ExperimentConfig& cfg);

// Stage markers plus a checksummed file inventory. Timing measurements are
// recorded in the manifest but excluded from the deterministic artifact set.
struct RunManifest {
  std::uint64_t fingerprint = 0;
  std::vector<std::string> completed;             // stage names in order
  std::map<std::string, std::uint64_t> files;     // path (relative) -> checksum
  std::map<std::string, double> timings;          // seconds, volatile

  bool stage_done(const std::string& stage) const;
};

std::uint64_t file_checksum(const std::string& path);

struct PipelineContext {
  ExperimentConfig cfg;
  std::string out_dir;  // resolved output directory
  int jobs = 1;
  bool force = false;
};

PipelineContext make_context(const ExperimentConfig& cfg, int jobs, bool force);

// Stage entry points. Each verifies its prerequisites against the manifest
// (throws StaleManifestError on fingerprint mismatch or checksum failure),
// is a no-op when already complete, and writes atomically.
void cmd_gen(const PipelineContext& ctx);
void cmd_label(const PipelineContext& ctx);
void cmd_train(const PipelineContext& ctx, const std::string& which);  // tail|nnilc
void cmd_eval(const PipelineContext& ctx, const std::vector<std::string>& sources = {});

struct ReproReport {
  bool all_pass = false;
  std::vector<std::pair<std::string, bool>> verdicts;
};

// gen -> label -> train(tail) -> train(nnilc) -> eval, then the summary
// assertions. start_stage resumes mid-pipeline.
ReproReport cmd_repro(const PipelineContext& ctx, const std::string& start_stage = "gen");

RunManifest load_manifest(const std::string& out_dir);
void save_manifest(const RunManifest& m, const std::string& out_dir);

// In-memory desk-experiment bundle shared by tests: deterministic given cfg.
struct DeskBundle {
  TrajectoryClass all, train_cls, test_cls;
  LoopSet loops;
  ILCFilters filters;
};
DeskBundle build_desk_bundle(const ExperimentConfig& cfg);

// Built-in desk configuration used by `repro` when no config file is given
// and by the test suite.
ExperimentConfig desk_config();

} // namespace tail
