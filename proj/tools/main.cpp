// spikefool benchmark CLI. All functionality lives behind the C API in
// spikefool.h; this binary only parses flags, merges them over the JSON
// config file (flags win), and dispatches.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spikefool.h"

using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<uint64_t> seed;
  std::optional<int> threads;
  std::vector<std::string> overrides;  // key=value, dotted keys
};

void add_common(CLI::App* cmd, CommonArgs& args, bool out_required = true) {
  cmd->add_option("--config", args.config_path, "JSON config file")
      ->check(CLI::ExistingFile);
  auto* out = cmd->add_option("--out", args.out_dir, "output directory");
  if (out_required) out->required();
  cmd->add_option("--seed", args.seed, "RNG seed (overrides config)");
  cmd->add_option("--threads", args.threads,
                  "worker threads (0 = all cores; overrides config)");
  cmd->add_option("--set", args.overrides,
                  "config override as dotted.key=value (repeatable)");
}

json load_config(const CommonArgs& args) {
  json cfg = json::object();
  if (!args.config_path.empty()) {
    std::ifstream is(args.config_path);
    if (!is) throw std::runtime_error("cannot open " + args.config_path);
    cfg = json::parse(is);
  }
  if (args.seed) cfg["seed"] = *args.seed;
  if (args.threads) cfg["threads"] = *args.threads;
  for (const std::string& kv : args.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::exception&) {
      parsed = value;  // plain string
    }
    // Dotted path, e.g. attack.lambda=3.
    json* node = &cfg;
    size_t start = 0;
    for (;;) {
      size_t dot = key.find('.', start);
      std::string part = key.substr(start, dot - start);
      if (dot == std::string::npos) {
        (*node)[part] = parsed;
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }
  return cfg;
}

using RunFn = sf_status (*)(const char*, const char*, char**);

int dispatch(RunFn fn, const CommonArgs& args) {
  json cfg = load_config(args);
  char* summary = nullptr;
  sf_status status = fn(cfg.dump().c_str(), args.out_dir.c_str(), &summary);
  if (status != SF_OK) {
    std::cerr << "error (" << int(status) << "): " << sf_last_error() << '\n';
    return 1;
  }
  if (summary) {
    std::cout << summary << '\n';
    sf_string_free(summary);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"White-box adversarial attacks on spiking convolutional "
               "networks over event rasters"};
  app.require_subcommand(1);

  CommonArgs synth_args, train_args, attack_args, patch_args, defend_args;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, synth_args);
  CLI::App* train =
      app.add_subcommand("train", "train a model (bptt, trades, ann, transfer)");
  add_common(train, train_args);
  CLI::App* attack =
      app.add_subcommand("attack", "run an attack campaign over a dataset");
  add_common(attack, attack_args);
  CLI::App* patch = app.add_subcommand(
      "patch", "train a universal targeted patch and evaluate it");
  add_common(patch, patch_args);
  CLI::App* defend = app.add_subcommand(
      "defend", "TRADES adversarial training plus before/after attack runs");
  add_common(defend, defend_args);

  std::vector<std::string> report_paths;
  std::string report_out;
  CLI::App* report =
      app.add_subcommand("report", "merge campaign reports into a summary table");
  report->add_option("reports", report_paths, "campaign report JSON files")
      ->required()
      ->check(CLI::ExistingFile);
  report->add_option("--out", report_out, "directory for summary.json/csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return dispatch(sf_run_synth, synth_args);
    if (train->parsed()) return dispatch(sf_run_train, train_args);
    if (attack->parsed()) return dispatch(sf_run_attack, attack_args);
    if (patch->parsed()) return dispatch(sf_run_patch, patch_args);
    if (defend->parsed()) return dispatch(sf_run_defend, defend_args);
    if (report->parsed()) {
      std::vector<const char*> paths;
      for (const std::string& p : report_paths) paths.push_back(p.c_str());
      char* summary = nullptr;
      sf_status status = sf_run_report(paths.data(), paths.size(),
                                       report_out.c_str(), &summary);
      if (status != SF_OK) {
        std::cerr << "error (" << int(status) << "): " << sf_last_error()
                  << '\n';
        return 1;
      }
      if (summary) {
        std::cout << summary;
        sf_string_free(summary);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
