#pragma once

#include <string>
#include <vector>

#include "spikefool/network.hpp"
#include "spikefool/synth.hpp"

namespace spikefool {

// High-level experiment drivers behind the CLI subcommands. Each takes a
// resolved JSON config (seed mandatory), validates it with field-level
// messages, writes every output plus a config echo under out_dir, and
// returns a short human-readable summary. Deterministic up to wall-clock
// timing fields.
std::string run_synth(const std::string& config_json,
                      const std::string& out_dir);
std::string run_train(const std::string& config_json,
                      const std::string& out_dir);
std::string run_attack(const std::string& config_json,
                       const std::string& out_dir);
std::string run_patch(const std::string& config_json,
                      const std::string& out_dir);
std::string run_defend(const std::string& config_json,
                       const std::string& out_dir);
// Merges attack-campaign reports into one summary table (text returned;
// summary.json/summary.csv written when out_dir is non-empty).
std::string run_report(const std::vector<std::string>& report_paths,
                       const std::string& out_dir);

// Builds a network from a model config: either a named preset ("desk_snn",
// "desk_ann", "lenet5", "lenet5_bn") or an explicit layer array.
NetworkSpec parse_model_spec(const std::string& model_json, NetMode mode,
                             int in_p, int in_h, int in_w, int n_classes);

}  // namespace spikefool
