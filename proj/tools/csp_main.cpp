// Command-line driver: full stream runs, single stages and fixture checks.
#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>

#include "csp/fixtures.hpp"
#include "csp/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 1, kStage = 2, kProvider = 3 };

void add_run_options(CLI::App* app, csp::RunConfig& cfg) {
  app->add_option("--config", cfg.stream_config, "stream config JSON")->required();
  app->add_option("--store", cfg.store_root, "artifact store directory")->required();
  app->add_option("--seed", cfg.seed, "random seed");
  app->add_option("--permute", cfg.permute, "1-based task order, e.g. --permute 3 1 2");
  app->add_option("--provider", cfg.provider, "mock or remote");
  app->add_option("--mock-script", cfg.mock_script, "mock LLM script (JSONL)");
  app->add_option("--embedder", cfg.embedder, "local or remote");
  app->add_option("--k", cfg.k, "cluster count");
  app->add_option("--n-ske", cfg.n_ske, "generations per skeleton");
  app->add_option("--n-cfg", cfg.n_cfg, "synthesized variants per sample");
  app->add_option("--m-max", cfg.m_max, "self-correction rounds");
  app->add_option("--r-top", cfg.r_top, "samples kept per skeleton");
  app->add_option("--lambda", cfg.lambda, "KL weight");
  app->add_option("--epochs", cfg.epochs, "training epochs per task");
  app->add_option("--lr", cfg.learning_rate, "learning rate");
  app->add_option("--dim", cfg.dim, "toy model width");
  app->add_flag("--rephrase", cfg.rephrase, "rephrase synthesized questions with the LLM");
  app->add_flag("!--no-cfg", cfg.use_cfg, "train without synthesized variants");
  app->add_flag("!--no-ske", cfg.use_ske, "train without skeleton-guided pseudo samples");
}

int run_guarded(const std::function<nlohmann::json()>& body) {
  try {
    std::cout << body().dump(2) << std::endl;
    return kOk;
  } catch (const csp::ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kConfig;
  } catch (const csp::StreamError& e) {
    spdlog::error("config error: {}", e.what());
    return kConfig;
  } catch (const csp::ProviderError& e) {
    spdlog::error("provider failure: {}", e.what());
    return kProvider;
  } catch (const csp::StageError& e) {
    spdlog::error("stage failure {}", e.what());
    return kStage;
  } catch (const csp::MissingArtifact& e) {
    spdlog::error("missing prerequisite: {}", e.what());
    return kStage;
  } catch (const std::exception& e) {
    spdlog::error("failure: {}", e.what());
    return kStage;
  }
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("csp"));
  CLI::App app{"Continual text-to-SQL memory reconstruction pipeline"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error");

  csp::RunConfig cfg;
  std::string stage;
  int task_index = 0;
  std::optional<int> stop_after;

  auto* run = app.add_subcommand("run", "run every stage over the stream (resumes from the store)");
  add_run_options(run, cfg);
  run->add_option("--stage", stage, "run only this stage (analyze, genmem, calibrate, synth, train, assess, eval)");
  run->add_option("--task", task_index, "1-based task index for --stage");
  run->add_option("--stop-after", stop_after, "stop after this task")->group("");

  const std::vector<std::string> stage_names{"analyze", "genmem", "calibrate", "synth", "train", "assess", "eval"};
  std::map<std::string, CLI::App*> stage_cmds;
  for (const auto& name : stage_names) {
    auto* sub = app.add_subcommand(name, "run the " + name + " stage once");
    add_run_options(sub, cfg);
    if (name != "eval") sub->add_option("--task", task_index, "1-based task index")->required();
    stage_cmds[name] = sub;
  }

  std::filesystem::path fixture_root = "fixtures";
  bool write_manifest = false;
  auto* verify = app.add_subcommand("verify-fixtures", "check fixture hashes, SQL and stream validity");
  verify->add_option("--root", fixture_root, "fixture directory");
  verify->add_flag("--write-manifest", write_manifest, "regenerate MANIFEST.json instead of checking it");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  if (*verify) {
    if (write_manifest) {
      csp::write_file_atomic(fixture_root / "MANIFEST.json", csp::build_manifest(fixture_root));
      return kOk;
    }
    const auto report = csp::verify_fixtures(fixture_root);
    nlohmann::json out{{"checked", report.checked.size()}, {"problems", report.problems}, {"passed", report.passed()}};
    std::cout << out.dump(2) << std::endl;
    return report.passed() ? kOk : kStage;
  }

  for (const auto& [name, sub] : stage_cmds)
    if (*sub) stage = name;
  const bool single = !stage.empty();
  if (*run && single && stage != "eval" && task_index < 1) {
    spdlog::error("config error: --stage {} needs --task", stage);
    return kConfig;
  }

  return run_guarded([&]() -> nlohmann::json {
    std::unique_ptr<csp::Pipeline> pipeline;
    try {
      cfg.validate();
      pipeline = std::make_unique<csp::Pipeline>(cfg, csp::make_llm_provider(cfg), csp::make_embedder(cfg));
    } catch (const csp::ProviderError& e) {
      throw csp::ConfigError(e.what());
    }
    if (!single) return pipeline->run(stop_after);
    if (stage == "analyze") return pipeline->analyze(task_index);
    if (stage == "genmem") return pipeline->genmem(task_index);
    if (stage == "calibrate") return pipeline->calibrate(task_index);
    if (stage == "synth") return pipeline->synth(task_index);
    if (stage == "train") return pipeline->train(task_index);
    if (stage == "assess") return pipeline->assess(task_index);
    if (stage == "eval") return pipeline->eval();
    throw csp::ConfigError("unknown stage '" + stage + "'");
  });
}
