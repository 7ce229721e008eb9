#include "tail/pipeline.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>

namespace {

enum ExitCode { kOk = 0, kFail = 1, kConfigError = 2, kNumericalError = 3, kStale = 4 };

int dispatch(const std::function<void(const tail::PipelineContext&)>& fn,
             const std::string& config_path, int jobs, bool force) {
  try {
    tail::ExperimentConfig cfg =
        config_path.empty() ? tail::desk_config() : tail::load_config(config_path);
    tail::PipelineContext ctx = tail::make_context(cfg, jobs, force);
    fn(ctx);
    return kOk;
  } catch (const tail::StaleManifestError& ex) {
    std::cerr << "stale manifest: " << ex.what() << '\n';
    return kStale;
  } catch (const tail::ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& ex) {
    std::cerr << "config error: " << ex.what() << '\n';
    return kConfigError;
  } catch (const tail::NumericalError& ex) {
    std::cerr << "numerical failure: " << ex.what() << '\n';
    return kNumericalError;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kFail;
  }
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"TAIL-ILC pipeline: trajectory generation, expert labeling, student "
               "training, and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  int jobs = 1;
  bool force = false;
  app.add_option("--config", config_path, "experiment config JSON (default: built-in desk config)");
  app.add_option("--jobs", jobs, "within-stage parallelism")->check(CLI::PositiveNumber);
  app.add_flag("--force", force, "rebuild even if outputs are up to date");

  auto* gen = app.add_subcommand("gen", "generate the trajectory class");
  auto* label = app.add_subcommand("label", "run the expert ILC and persist datasets");

  auto* train = app.add_subcommand("train", "train a student policy");
  std::string which = "tail";
  train->add_option("--which", which, "tail | nnilc")
      ->check(CLI::IsMember({"tail", "nnilc"}))
      ->required();

  auto* eval = app.add_subcommand("eval", "evaluate feedforward sources");
  std::vector<std::string> sources;
  eval->add_option("--sources", sources,
                   "restrict to sources (zero mass_ff expert tail nnilc "
                   "tail_plus_mass nnilc_plus_mass)");

  auto* show = app.add_subcommand("config", "print the resolved experiment config");

  auto* repro = app.add_subcommand("repro", "run the full pipeline and print verdicts");
  std::string stage = "gen";
  repro->add_option("--stage", stage, "resume from stage (gen label train_tail train_nnilc eval)");

  CLI11_PARSE(app, argc, argv);

  if (show->parsed())
    return dispatch(
        [](const tail::PipelineContext& c) { std::cout << tail::to_json(c.cfg) << '\n'; },
        config_path, jobs, force);
  if (gen->parsed())
    return dispatch([](const tail::PipelineContext& c) { tail::cmd_gen(c); },
                    config_path, jobs, force);
  if (label->parsed())
    return dispatch([](const tail::PipelineContext& c) { tail::cmd_label(c); },
                    config_path, jobs, force);
  if (train->parsed())
    return dispatch([&](const tail::PipelineContext& c) { tail::cmd_train(c, which); },
                    config_path, jobs, force);
  if (eval->parsed())
    return dispatch([&](const tail::PipelineContext& c) { tail::cmd_eval(c, sources); },
                    config_path, jobs, force);
  if (repro->parsed()) {
    int code = kOk;
    bool all_pass = false;
    code = dispatch(
        [&](const tail::PipelineContext& c) { all_pass = tail::cmd_repro(c, stage).all_pass; },
        config_path, jobs, force);
    if (code != kOk) return code;
    return all_pass ? kOk : kFail;
  }
  return kConfigError;
}
