#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spikefool/attacks.hpp"
#include "spikefool/network.hpp"
#include "spikefool/synth.hpp"

namespace spikefool {

// Which attack a campaign runs, plus its hyperparameters. Exactly one of the
// configs is consulted, selected by kind.
enum class AttackKind { spikefool, cd_pgd, prob_pgd };

AttackKind attack_kind_from_string(const std::string& s);
const char* attack_kind_name(AttackKind kind);

struct AttackSpecCfg {
  AttackKind kind = AttackKind::spikefool;
  SpikeFoolConfig spikefool;
  CdPgdConfig cd;
  ProbPgdConfig prob;
};

struct SampleRecord {
  int64_t index = 0;  // position in the evaluated dataset
  int original_label = -1;
  int adversarial_label = -1;
  bool success = false;
  int64_t l0 = 0;
  int64_t queries = 0;
  double elapsed_s = 0.0;
  int64_t added = 0;    // spikes with adv > orig
  int64_t removed = 0;  // spikes with adv < orig
  std::vector<int64_t> added_per_bin;
  std::vector<int64_t> removed_per_bin;
  Tensor x_adv;  // kept in memory; not serialized into reports
};

struct TimeProfile {
  std::vector<int64_t> added_total;
  std::vector<int64_t> removed_total;
  std::vector<double> added_q10, added_median, added_q90;
  std::vector<double> removed_q10, removed_median, removed_q90;
};

struct CampaignReport {
  std::string attack_name;
  uint64_t seed = 0;
  int n_samples = 0;
  int n_initially_correct = 0;
  int n_success = 0;
  double success_rate = 0.0;  // percent of initially-correct samples
  std::optional<double> median_l0;        // successes only
  std::optional<double> median_queries;   // all attacked samples
  std::optional<double> median_elapsed_s;
  int64_t added_total = 0;
  int64_t removed_total = 0;
  TimeProfile profile;
  std::vector<std::vector<int64_t>> confusion;  // [orig][adv], successes only
  std::vector<SampleRecord> records;
  std::string config_echo_json;  // resolved attack config
};

// Median of a sample set: mean of the two middle order statistics.
double median(std::vector<double> values);
// Linear-interpolation quantile, q in [0,1].
double quantile(std::vector<double> values, double q);

// Runs one attack over every initially-correct sample of the dataset.
// Deterministic for fixed (net, dataset, spec, seed) regardless of n_threads;
// per-sample randomness is seeded by (seed, sample index).
CampaignReport run_campaign(const Network& net, const Dataset& ds,
                            const AttackSpecCfg& spec, uint64_t seed,
                            int n_threads = 1);

TimeProfile perturbation_time_profile(const std::vector<SampleRecord>& records,
                                      int n_bins);
std::vector<std::vector<int64_t>> confusion_matrix(
    const std::vector<SampleRecord>& records, int n_classes);

struct PatchSampleRecord {
  int64_t index = 0;
  int original_label = -1;
  int predicted_label = -1;
  bool success = false;
  int pos_y = 0, pos_x = 0;
};

struct PatchCampaignReport {
  int target_label = 0;
  uint64_t seed = 0;
  int n_samples = 0;
  int n_eligible = 0;  // label != target
  int n_success = 0;
  std::optional<double> success_rate;  // percent; null when no eligible samples
  std::vector<PatchSampleRecord> records;
};

PatchCampaignReport patch_campaign(const Network& net, const Dataset& ds,
                                   const Patch& patch,
                                   PatchPlacement placement, uint64_t seed,
                                   int n_threads = 1);

// JSON (schema-versioned) and CSV (per-sample rows, fixed column order)
// exports. Export re-derives every aggregate from the records and refuses to
// write an inconsistent report.
void export_report(const CampaignReport& report, const std::string& path,
                   const std::string& format);
CampaignReport load_report_json(const std::string& path);
std::vector<SampleRecord> load_records_csv(const std::string& path);

std::string patch_report_to_json(const PatchCampaignReport& report);

// Recomputes aggregates from per-sample records; throws ValidationError on
// any mismatch with the stored values.
void check_report_consistency(const CampaignReport& report);

}  // namespace spikefool
