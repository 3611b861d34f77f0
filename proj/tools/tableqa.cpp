// Command-line front end: run, eval, replay, inspect.
//
// Exit codes: 0 success, 1 pipeline failure, 2 configuration/manifest error.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tableqa/errors.hpp"
#include "tableqa/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tableqa;

namespace {

constexpr int kOk = 0;
constexpr int kPipelineFailure = 1;
constexpr int kConfigError = 2;

struct Overrides {
  std::string output_dir;
  int parallelism = 0;
  int max_tries = 0;
  std::string executor_command;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--output-dir", o.output_dir, "Directory for bundles and reports");
  cmd->add_option("--parallelism", o.parallelism, "Concurrent instances")->check(CLI::PositiveNumber);
  cmd->add_option("--max-tries", o.max_tries, "Code generation attempts")->check(CLI::PositiveNumber);
  cmd->add_option("--executor-command", o.executor_command, "Shell command starting an executor worker");
}

RunConfig configure(const std::string& path, const Overrides& o) {
  RunConfig config = load_config(path);
  if (!o.output_dir.empty()) config.output_dir = o.output_dir;
  if (o.parallelism > 0) config.parallelism = o.parallelism;
  if (o.max_tries > 0) config.max_tries = o.max_tries;
  if (!o.executor_command.empty()) {
    config.executor_command = o.executor_command;
    config.executor_script.clear();
  }
  config.validate();
  return config;
}

// Splits on commas except thousands separators ("$44,517,a" -> "$44,517", "a").
// A value starting with '[' is read as a JSON array instead.
std::vector<std::string> parse_answers(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& value : raw) {
    if (!value.empty() && value.front() == '[') {
      for (const auto& a : nlohmann::json::parse(value)) out.push_back(a.get<std::string>());
      continue;
    }
    std::string current;
    auto digit = [&](std::size_t k) { return k < value.size() && value[k] >= '0' && value[k] <= '9'; };
    for (std::size_t i = 0; i < value.size(); ++i) {
      if (value[i] == ',' && !(i > 0 && digit(i - 1) && digit(i + 1) && digit(i + 2) && digit(i + 3) && !digit(i + 4))) {
        out.push_back(current);
        current.clear();
      } else {
        current.push_back(value[i]);
      }
    }
    out.push_back(current);
  }
  return out;
}

void print_checks(const std::vector<ReplayCheck>& checks) {
  for (const auto& c : checks) std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explainable table-image question answering"};
  app.require_subcommand(1);

  std::string config_path, image, question, id, subset = "custom", manifest, bundle_path, section;
  std::vector<std::string> answers;
  Overrides overrides;

  auto* run = app.add_subcommand("run", "Answer one question about one table image");
  run->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--image", image, "Table image (PNG or JPEG)")->required();
  run->add_option("--question", question, "Question text")->required();
  // One value per flag, so CLI11 leaves "[...]" to parse_answers; repeat the flag for more.
  run->add_option("--answers", answers, "Ground-truth answers, comma-separated or a JSON array")
      ->allow_extra_args(false);
  run->add_option("--id", id, "Instance id (default: image file stem)");
  run->add_option("--subset", subset, "Subset label")->check(CLI::IsMember(kSubsets));
  add_overrides(run, overrides);

  auto* eval = app.add_subcommand("eval", "Run every instance of a JSONL manifest and report scores");
  eval->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  eval->add_option("--manifest", manifest, "JSON Lines manifest")->required();
  add_overrides(eval, overrides);

  std::string replay_config;
  auto* replay_cmd = app.add_subcommand("replay", "Re-execute and re-score a recorded bundle");
  replay_cmd->add_option("--bundle", bundle_path, "Audit bundle")->required();
  replay_cmd->add_option("--config", replay_config, "Config providing the executor (default: bundle snapshot)");
  replay_cmd->add_option("--executor-command", overrides.executor_command, "Shell command starting an executor worker");

  auto* inspect_cmd = app.add_subcommand("inspect", "Print one section of a bundle");
  inspect_cmd->add_option("--bundle", bundle_path, "Audit bundle")->required();
  inspect_cmd->add_option("--section", section, "Section name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) {
      RunConfig config = configure(config_path, overrides);
      QAInstance instance;
      instance.image_path = fs::absolute(image);
      instance.id = id.empty() ? fs::path(image).stem().string() : id;
      instance.subset = subset;
      instance.question = question;
      instance.answers = parse_answers(answers);
      if (instance.answers.empty()) instance.answers = {""};
      Pipeline pipeline(config, make_backends(config), make_executor_factory(config));
      AuditBundle bundle = pipeline.run_one(instance);
      std::cout << "answer: " << bundle.answer.value_or("(none)") << "\n";
      if (bundle.explanation.explanation) std::cout << "explanation: " << bundle.explanation.explanation->text << "\n";
      if (!answers.empty()) {
        std::cout << "exact: " << bundle.scores.exact << "  relieved: " << bundle.scores.relieved
                  << "  anls: " << bundle.scores.anls << "\n";
      }
      std::cout << "bundle: " << (config.output_dir / bundle_file_name(instance.id)).string() << "\n";
      return bundle.answer ? kOk : kPipelineFailure;
    }

    if (*eval) {
      RunConfig config = configure(config_path, overrides);
      auto instances = load_manifest(manifest);
      Pipeline pipeline(config, make_backends(config), make_executor_factory(config));
      EvalReport report = pipeline.run_eval(instances);
      std::cout << format_report_table(report);
      std::cout << "reports: " << (config.output_dir / "report.json").string() << "\n";
      return kOk;
    }

    if (*replay_cmd) {
      AuditBundle bundle = load_bundle(bundle_path);
      std::unique_ptr<Executor> executor;
      if (!overrides.executor_command.empty()) {
        executor = std::make_unique<ProcessExecutor>(overrides.executor_command);
      } else if (!replay_config.empty()) {
        executor = make_executor_factory(load_config(replay_config))();
      } else {
        const auto& snap = bundle.config_snapshot;
        std::string script = snap.value("executor_script", std::string{});
        std::string command = snap.value("executor_command", std::string{});
        if (!script.empty()) {
          executor = FakeExecutor::from_file(script);
        } else if (!command.empty()) {
          executor = std::make_unique<ProcessExecutor>(command);
        } else {
          throw ConfigError("bundle records no executor; pass --executor-command");
        }
      }
      auto checks = replay(bundle, *executor);
      print_checks(checks);
      bool all = std::all_of(checks.begin(), checks.end(), [](const ReplayCheck& c) { return c.passed; });
      std::cout << (all ? "verdict: PASS" : "verdict: FAIL") << "\n";
      return all ? kOk : kPipelineFailure;
    }

    if (*inspect_cmd) {
      std::cout << inspect(load_bundle(bundle_path), section);
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ManifestError& e) {
    std::cerr << "manifest error: " << e.what() << "\n";
    return kConfigError;
  } catch (const BundleCorrupt& e) {
    std::cerr << "bundle error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPipelineFailure;
  }
  return kOk;
}
