#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "fadet/checkpoint.hpp"
#include "fadet/cli.hpp"
#include "fadet/training.hpp"

namespace {

using fadet::RunConfig;

// flag values land on top of config-file values, which land on defaults
struct Overrides {
  std::map<std::string, std::string> values;
  void put(const std::string& key, const std::string& value) {
    values[key] = value;
  }
};

RunConfig build_config(const std::string& config_path, const Overrides& o) {
  RunConfig config;
  if (!config_path.empty()) config.apply_file(config_path);
  for (const auto& [key, value] : o.values) config.set(key, value);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unified face attack detection toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "run_out";
  Overrides overrides;

  app.add_option("--config", config_path, "key = value config file")
      ->expected(1);
  app.add_option_function<std::string>(
      "--seed", [&](const std::string& v) { overrides.put("seed", v); },
      "run seed");
  app.add_option("--out", out_dir, "output directory");

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option_function<std::string>(
        "--manifest",
        [&](const std::string& v) {
          overrides.put("manifest", v);
          overrides.put("synthetic", "false");
        },
        "JSON-lines manifest path");
    cmd->add_flag_function(
        "--synthetic",
        [&](int64_t) { overrides.put("synthetic", "true"); },
        "use the built-in synthetic dataset");
  };

  CLI::App* train = app.add_subcommand("train", "train a model");
  train->fallthrough();
  add_common(train);
  for (const char* key : {"steps", "batch", "lr", "protocol", "prompt-mode"}) {
    std::string config_key =
        std::string(key) == "prompt-mode" ? "prompt_mode" : key;
    train->add_option_function<std::string>(
        "--" + std::string(key),
        [&overrides, config_key](const std::string& v) {
          overrides.put(config_key, v);
        },
        "override config key " + config_key);
  }
  train->add_option_function<std::string>(
      "--scale",
      [&](const std::string& v) { overrides.put("protocol_scale", v); },
      "protocol quota divisor");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->fallthrough();
  add_common(eval_cmd);
  std::string checkpoint, split_dir, split_name = "test";
  eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint path")
      ->required();
  eval_cmd->add_option("--split-dir", split_dir,
                       "directory holding train/eval/test .ids files");
  eval_cmd->add_option("--split", split_name, "which split to score");
  eval_cmd->add_option_function<std::string>(
      "--threshold",
      [&](const std::string& v) { overrides.put("threshold", v); },
      "'eer' or a fixed numeric threshold");

  CLI::App* analyze =
      app.add_subcommand("analyze-frequency", "per-category spectra");
  analyze->fallthrough();
  add_common(analyze);
  analyze->add_option_function<std::string>(
      "--alpha", [&](const std::string& v) { overrides.put("alpha", v); },
      "high-pass fraction recorded with the run");
  analyze->add_option_function<std::string>(
      "--max-per-category",
      [&](const std::string& v) { overrides.put("max_per_category", v); },
      "sample cap per category");

  CLI::App* protocol = app.add_subcommand("protocol", "build or audit splits");
  protocol->fallthrough();
  add_common(protocol);
  bool use_mirror = false;
  std::string audit_only, emit_manifest;
  protocol->add_flag("--mirror", use_mirror,
                     "use the built-in full-cardinality manifest");
  protocol->add_option_function<std::string>(
      "--protocol",
      [&](const std::string& v) { overrides.put("protocol", v); },
      "P1, P1.1, P1.2 or P1.3");
  protocol->add_option_function<std::string>(
      "--scale",
      [&](const std::string& v) { overrides.put("protocol_scale", v); },
      "protocol quota divisor");
  protocol->add_option("--audit-only", audit_only,
                       "audit an existing split directory");
  protocol->add_option("--emit-manifest", emit_manifest,
                       "write the resolved manifest to this path");

  bool protocol_scale_given = false;

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return fadet::cli::kUsage;
  }
  protocol_scale_given = overrides.values.count("protocol_scale") > 0;

  try {
    RunConfig config = build_config(config_path, overrides);
    if (train->parsed()) {
      return fadet::cli::run_train(config, out_dir, std::cout);
    }
    if (eval_cmd->parsed()) {
      return fadet::cli::run_eval(config, checkpoint, split_dir, split_name,
                                  out_dir, std::cout);
    }
    if (analyze->parsed()) {
      return fadet::cli::run_analyze(config, out_dir, std::cout);
    }
    if (protocol->parsed()) {
      if (!protocol_scale_given) {
        config.set("protocol_scale", "1");  // full quotas unless asked
      }
      return fadet::cli::run_protocol(config, use_mirror, emit_manifest,
                                      audit_only, out_dir, std::cout);
    }
    return fadet::cli::kUsage;
  } catch (const fadet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return fadet::cli::kUsage;
  } catch (const fadet::QuotaError& e) {
    std::cerr << "quota error (" << e.type << ", short " << e.shortfall
              << "): " << e.what() << "\n";
    return fadet::cli::kData;
  } catch (const fadet::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return fadet::cli::kData;
  } catch (const fadet::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return fadet::cli::kData;
  } catch (const fadet::NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return fadet::cli::kNumerical;
  } catch (const fadet::ContractError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return fadet::cli::kUsage;
  } catch (const fadet::ShapeError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return fadet::cli::kUsage;
  }
}
