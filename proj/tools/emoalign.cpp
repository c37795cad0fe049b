#include <iostream>

#include "CLI11.hpp"
#include "emoalign/cli/run.hpp"
#include "emoalign/errors.hpp"

namespace {

namespace cli = emoalign::cli;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

int fail(int code, const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << std::endl;
  return code;
}

void print(const nlohmann::json& j) { std::cout << j.dump() << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage speech-language alignment on a synthetic speech world"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cli::kToolVersion);

  std::string config_path;
  auto* datagen = app.add_subcommand("datagen", "Generate ASR and SER corpora with teacher continuations");
  datagen->add_option("config", config_path, "Run config JSON")->required();

  cli::TrainRequest train_req;
  std::string mode, init;
  auto* train = app.add_subcommand("train", "Run stage-1 or stage-2 training");
  train->add_option("config", config_path, "Run config JSON")->required();
  train->add_option("--stage", train_req.stage, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  train->add_option("--mode", mode, "blsp_emo, blsp_ser, blsp_multitask, emo_no_pretrain or stage1_only");
  train->add_option("--init", init, "Stage-1 checkpoint to start stage 2 from");

  cli::EvalRequest eval_req;
  std::vector<std::string> checkpoints;
  auto* eval = app.add_subcommand("eval", "Evaluate checkpoints");
  eval->add_option("config", config_path, "Run config JSON")->required();
  eval->add_option("--suite", eval_req.suite, "ser, agreement, response or winrate")
      ->required()
      ->check(CLI::IsMember({"ser", "agreement", "response", "winrate"}));
  eval->add_option("--checkpoint", checkpoints, "Checkpoint path; winrate takes two")->required();

  std::string run_dir;
  auto* report = app.add_subcommand("report", "Summarize a run directory");
  report->add_option("run_dir", run_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kExitUsage, "UsageError", e.what());
  }

  try {
    if (*report) {
      const auto r = cli::cmd_report(run_dir);
      std::cout << r.text;
      return kExitOk;
    }
    const auto cfg = cli::load_run_config(config_path);
    const int workers = cli::workers_from_env();
    if (*datagen) {
      const auto r = cli::cmd_datagen(cfg, workers);
      print({{"manifest", r.manifest.string()}, {"counts", r.counts}});
    } else if (*train) {
      if (!mode.empty()) train_req.mode = mode;
      if (!init.empty()) train_req.init = init;
      const auto r = cli::cmd_train(cfg, train_req, workers);
      print({{"checkpoint", r.checkpoint.string()},
             {"loss_log", r.loss_log.string()},
             {"manifest", r.manifest.string()},
             {"steps", r.steps}});
    } else if (*eval) {
      eval_req.checkpoints.assign(checkpoints.begin(), checkpoints.end());
      const auto r = cli::cmd_eval(cfg, eval_req, workers);
      print({{"report", r.report.string()}, {"manifest", r.manifest.string()}});
    }
    return kExitOk;
  } catch (const emoalign::ConfigError& e) {
    return fail(kExitUsage, "ConfigError", e.what());
  } catch (const emoalign::ContractError& e) {
    return fail(kExitRuntime, "ContractError", e.what());
  } catch (const emoalign::IoError& e) {
    return fail(kExitRuntime, "IoError", e.what());
  } catch (const emoalign::BackendError& e) {
    return fail(kExitRuntime, "BackendError", e.what());
  } catch (const emoalign::Error& e) {
    return fail(kExitRuntime, "Error", e.what());
  } catch (const std::exception& e) {
    return fail(kExitRuntime, "InternalError", e.what());
  }
}
