#include "spikefool/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "spikefool/rng.hpp"

namespace spikefool {

using nlohmann::json;

AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "spikefool") return AttackKind::spikefool;
  if (s == "cd_pgd") return AttackKind::cd_pgd;
  if (s == "prob_pgd") return AttackKind::prob_pgd;
  throw ConfigError("unknown attack '" + s +
                    "' (expected spikefool, cd_pgd or prob_pgd)");
}

const char* attack_kind_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::spikefool: return "spikefool";
    case AttackKind::cd_pgd: return "cd_pgd";
    case AttackKind::prob_pgd: return "prob_pgd";
  }
  return "?";
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty set");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return (values[(n - 1) / 2] + values[n / 2]) / 2.0;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * double(values.size() - 1);
  const size_t lo = size_t(std::floor(pos));
  const size_t hi = size_t(std::ceil(pos));
  const double frac = pos - double(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

namespace {

void fill_diff_stats(const Tensor& orig, const Tensor& adv, SampleRecord& rec) {
  const int T = orig.dim(0);
  const int64_t per_bin = orig.size() / T;
  rec.added = 0;
  rec.removed = 0;
  rec.added_per_bin.assign(size_t(T), 0);
  rec.removed_per_bin.assign(size_t(T), 0);
  for (int t = 0; t < T; ++t) {
    for (int64_t i = 0; i < per_bin; ++i) {
      const double d = adv[int64_t(t) * per_bin + i] - orig[int64_t(t) * per_bin + i];
      if (d > 0) {
        rec.added += int64_t(d);
        rec.added_per_bin[size_t(t)] += int64_t(d);
      } else if (d < 0) {
        rec.removed += int64_t(-d);
        rec.removed_per_bin[size_t(t)] += int64_t(-d);
      }
    }
  }
}

AttackResult dispatch_attack(Network& net, const Tensor& x, int label,
                             const AttackSpecCfg& spec, uint64_t sample_seed) {
  NetworkTarget target(net);
  switch (spec.kind) {
    case AttackKind::spikefool:
      return spikefool(target, x, label, spec.spikefool);
    case AttackKind::cd_pgd:
      return cd_pgd(target, x, label, spec.cd);
    case AttackKind::prob_pgd:
      return prob_pgd(target, x, label, spec.prob, sample_seed);
  }
  throw ConfigError("unreachable attack kind");
}

std::string attack_config_echo(const AttackSpecCfg& spec) {
  json j;
  j["attack"] = attack_kind_name(spec.kind);
  switch (spec.kind) {
    case AttackKind::spikefool:
      j["eta"] = spec.spikefool.eta;
      j["lambda"] = spec.spikefool.lambda;
      j["lower"] = spec.spikefool.lower;
      j["upper"] = spec.spikefool.upper;
      j["max_outer_iters"] = spec.spikefool.max_outer_iters;
      j["max_deepfool_iters"] = spec.spikefool.max_deepfool_iters;
      j["deepfool_overshoot"] = spec.spikefool.deepfool_overshoot;
      break;
    case AttackKind::cd_pgd:
      j["n_steps"] = spec.cd.n_steps;
      j["step_size"] = spec.cd.step_size;
      j["max_flips"] = spec.cd.max_flips;
      break;
    case AttackKind::prob_pgd:
      j["temperature"] = spec.prob.temperature;
      j["n_mc"] = spec.prob.n_mc;
      j["n_steps"] = spec.prob.n_steps;
      j["step_size"] = spec.prob.step_size;
      j["max_flips"] = spec.prob.max_flips;
      j["p_clip"] = spec.prob.p_clip;
      break;
  }
  return j.dump();
}

}  // namespace

TimeProfile perturbation_time_profile(const std::vector<SampleRecord>& records,
                                      int n_bins) {
  TimeProfile p;
  p.added_total.assign(size_t(n_bins), 0);
  p.removed_total.assign(size_t(n_bins), 0);
  for (int b = 0; b < n_bins; ++b) {
    std::vector<double> added, removed;
    for (const SampleRecord& r : records) {
      const int64_t a =
          b < int(r.added_per_bin.size()) ? r.added_per_bin[size_t(b)] : 0;
      const int64_t d =
          b < int(r.removed_per_bin.size()) ? r.removed_per_bin[size_t(b)] : 0;
      p.added_total[size_t(b)] += a;
      p.removed_total[size_t(b)] += d;
      added.push_back(double(a));
      removed.push_back(double(d));
    }
    if (!records.empty()) {
      p.added_q10.push_back(quantile(added, 0.1));
      p.added_median.push_back(quantile(added, 0.5));
      p.added_q90.push_back(quantile(added, 0.9));
      p.removed_q10.push_back(quantile(removed, 0.1));
      p.removed_median.push_back(quantile(removed, 0.5));
      p.removed_q90.push_back(quantile(removed, 0.9));
    } else {
      p.added_q10.push_back(0.0);
      p.added_median.push_back(0.0);
      p.added_q90.push_back(0.0);
      p.removed_q10.push_back(0.0);
      p.removed_median.push_back(0.0);
      p.removed_q90.push_back(0.0);
    }
  }
  return p;
}

std::vector<std::vector<int64_t>> confusion_matrix(
    const std::vector<SampleRecord>& records, int n_classes) {
  std::vector<std::vector<int64_t>> m(size_t(n_classes),
                                      std::vector<int64_t>(size_t(n_classes), 0));
  for (const SampleRecord& r : records)
    if (r.success)
      m[size_t(r.original_label)][size_t(r.adversarial_label)] += 1;
  return m;
}

CampaignReport run_campaign(const Network& net, const Dataset& ds,
                            const AttackSpecCfg& spec, uint64_t seed,
                            int n_threads) {
  if (ds.size() == 0) throw ConfigError("run_campaign: empty dataset");
  if (n_threads < 1) n_threads = 1;

  CampaignReport report;
  report.attack_name = attack_kind_name(spec.kind);
  report.seed = seed;
  report.n_samples = int(ds.size());
  report.config_echo_json = attack_config_echo(spec);

  // Pass 1: find initially-correct samples (the attack denominators).
  std::vector<int64_t> attack_indices;
  {
    Network probe = net.clone();
    for (size_t i = 0; i < ds.size(); ++i)
      if (probe.predict(ds.rasters[i]) == ds.labels[i])
        attack_indices.push_back(int64_t(i));
  }
  report.n_initially_correct = int(attack_indices.size());

  // Pass 2: attack, sample-parallel, results collected by index.
  std::vector<SampleRecord> records(attack_indices.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    Network local = net.clone();
    for (;;) {
      const size_t wi = next.fetch_add(1);
      if (wi >= attack_indices.size()) break;
      const int64_t si = attack_indices[wi];
      const Tensor& x = ds.rasters[size_t(si)];
      const int label = ds.labels[size_t(si)];
      AttackResult ar = dispatch_attack(
          local, x, label, spec, mix_seed(seed, 0x73616d70 /* "samp" */,
                                          uint64_t(si)));
      SampleRecord rec;
      rec.index = si;
      rec.original_label = ar.original_label;
      rec.adversarial_label = ar.adversarial_label;
      rec.success = ar.success;
      rec.l0 = ar.l0;
      rec.queries = ar.queries;
      rec.elapsed_s = ar.elapsed_s;
      rec.x_adv = ar.x_adv;
      fill_diff_stats(x, ar.x_adv, rec);
      records[wi] = std::move(rec);
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  report.records = std::move(records);

  // Aggregates. Failed attacks keep their query/time numbers but have
  // undefined L0, so the L0 median runs over successes only.
  std::vector<double> l0s, queries, times;
  for (const SampleRecord& r : report.records) {
    if (r.success) {
      ++report.n_success;
      report.added_total += r.added;
      report.removed_total += r.removed;
      l0s.push_back(double(r.l0));
    }
    queries.push_back(double(r.queries));
    times.push_back(double(r.elapsed_s));
  }
  report.success_rate = report.n_initially_correct == 0
                            ? 0.0
                            : 100.0 * double(report.n_success) /
                                  double(report.n_initially_correct);
  if (!l0s.empty()) report.median_l0 = median(l0s);
  if (!queries.empty()) report.median_queries = median(queries);
  if (!times.empty()) report.median_elapsed_s = median(times);

  const int n_bins = ds.rasters[0].dim(0);
  report.profile = perturbation_time_profile(report.records, n_bins);
  report.confusion = confusion_matrix(report.records, ds.n_classes);
  return report;
}

PatchCampaignReport patch_campaign(const Network& net, const Dataset& ds,
                                   const Patch& patch,
                                   PatchPlacement placement, uint64_t seed,
                                   int n_threads) {
  if (ds.size() == 0) throw ConfigError("patch_campaign: empty dataset");
  if (n_threads < 1) n_threads = 1;

  PatchCampaignReport report;
  report.target_label = patch.target_label;
  report.seed = seed;
  report.n_samples = int(ds.size());

  std::vector<int64_t> eligible;
  for (size_t i = 0; i < ds.size(); ++i)
    if (ds.labels[i] != patch.target_label) eligible.push_back(int64_t(i));
  report.n_eligible = int(eligible.size());
  if (eligible.empty()) return report;  // success_rate stays null

  const int H = ds.rasters[0].dim(2), W = ds.rasters[0].dim(3);
  const int ph = patch.data.dim(2), pw = patch.data.dim(3);

  std::vector<PatchSampleRecord> records(eligible.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    Network local = net.clone();
    for (;;) {
      const size_t wi = next.fetch_add(1);
      if (wi >= eligible.size()) break;
      const int64_t si = eligible[wi];
      const Tensor& x = ds.rasters[size_t(si)];
      Rng rng(mix_seed(seed, 0x706c6163 /* "plac" */, uint64_t(si)));

      int ry0, rx0, rh, rw;
      if (placement == PatchPlacement::sample_active_region) {
        active_region(x, ry0, rx0, rh, rw);
      } else {
        ry0 = patch.region_y0;
        rx0 = patch.region_x0;
        rh = patch.region_h;
        rw = patch.region_w;
      }
      int pos_y, pos_x;
      draw_patch_position(rng, ry0, rx0, rh, rw, ph, pw, H, W, pos_y, pos_x);

      Tensor patched = apply_patch(x, patch, pos_y, pos_x);
      PatchSampleRecord rec;
      rec.index = si;
      rec.original_label = ds.labels[size_t(si)];
      rec.predicted_label = local.predict(patched);
      rec.success = rec.predicted_label == patch.target_label;
      rec.pos_y = pos_y;
      rec.pos_x = pos_x;
      records[wi] = rec;
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  report.records = std::move(records);
  for (const PatchSampleRecord& r : report.records)
    if (r.success) ++report.n_success;
  report.success_rate =
      100.0 * double(report.n_success) / double(report.n_eligible);
  return report;
}

// ---------------------------------------------------------------------------
// Export / import

namespace {

json report_to_json(const CampaignReport& r) {
  json j;
  j["schema_version"] = 1;
  j["kind"] = "attack_campaign";
  j["attack"] = r.attack_name;
  j["seed"] = r.seed;
  j["config"] = json::parse(r.config_echo_json);
  j["n_samples"] = r.n_samples;
  j["n_initially_correct"] = r.n_initially_correct;
  j["n_success"] = r.n_success;
  j["success_rate"] = r.success_rate;
  j["median_l0"] = r.median_l0 ? json(*r.median_l0) : json(nullptr);
  j["median_queries"] = r.median_queries ? json(*r.median_queries) : json(nullptr);
  j["median_elapsed_s"] =
      r.median_elapsed_s ? json(*r.median_elapsed_s) : json(nullptr);
  j["added_total"] = r.added_total;
  j["removed_total"] = r.removed_total;
  j["time_profile"] = {
      {"added_total", r.profile.added_total},
      {"removed_total", r.profile.removed_total},
      {"added_q10", r.profile.added_q10},
      {"added_median", r.profile.added_median},
      {"added_q90", r.profile.added_q90},
      {"removed_q10", r.profile.removed_q10},
      {"removed_median", r.profile.removed_median},
      {"removed_q90", r.profile.removed_q90},
  };
  j["confusion_matrix"] = r.confusion;
  json samples = json::array();
  for (const SampleRecord& rec : r.records) {
    samples.push_back({{"index", rec.index},
                       {"original_label", rec.original_label},
                       {"adversarial_label", rec.adversarial_label},
                       {"success", rec.success},
                       {"l0", rec.l0},
                       {"queries", rec.queries},
                       {"elapsed_s", rec.elapsed_s},
                       {"added", rec.added},
                       {"removed", rec.removed},
                       {"added_per_bin", rec.added_per_bin},
                       {"removed_per_bin", rec.removed_per_bin}});
  }
  j["samples"] = std::move(samples);
  return j;
}

}  // namespace

void check_report_consistency(const CampaignReport& r) {
  int n_success = 0;
  std::vector<double> l0s, queries, times;
  int64_t added = 0, removed = 0;
  for (const SampleRecord& rec : r.records) {
    if (rec.success) {
      ++n_success;
      l0s.push_back(double(rec.l0));
      added += rec.added;
      removed += rec.removed;
    }
    queries.push_back(double(rec.queries));
    times.push_back(double(rec.elapsed_s));
  }
  auto mismatch = [](const std::string& what) {
    throw ValidationError("report inconsistency: " + what);
  };
  if (n_success != r.n_success) mismatch("n_success");
  if (int(r.records.size()) > r.n_initially_correct)
    mismatch("more records than initially-correct samples");
  const double expect_rate = r.n_initially_correct == 0
                                 ? 0.0
                                 : 100.0 * double(n_success) /
                                       double(r.n_initially_correct);
  if (std::abs(expect_rate - r.success_rate) > 1e-9) mismatch("success_rate");
  if (l0s.empty() != !r.median_l0.has_value()) mismatch("median_l0 presence");
  if (!l0s.empty() && std::abs(median(l0s) - *r.median_l0) > 1e-9)
    mismatch("median_l0");
  if (!queries.empty() &&
      std::abs(median(queries) - r.median_queries.value_or(-1)) > 1e-9)
    mismatch("median_queries");
  if (added != r.added_total || removed != r.removed_total)
    mismatch("added/removed totals");
  int64_t confusion_total = 0;
  for (const auto& row : r.confusion)
    for (int64_t v : row) confusion_total += v;
  if (confusion_total != r.n_success) mismatch("confusion matrix total");
}

void export_report(const CampaignReport& report, const std::string& path,
                   const std::string& format) {
  check_report_consistency(report);
  if (format == "json") {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path);
    os << report_to_json(report).dump(2) << '\n';
    if (!os) throw IoError("write failed: " + path);
    return;
  }
  if (format == "csv") {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path);
    os << "index,original_label,adversarial_label,success,l0,queries,"
          "elapsed_s,added,removed\n";
    for (const SampleRecord& rec : report.records)
      os << rec.index << ',' << rec.original_label << ','
         << rec.adversarial_label << ',' << (rec.success ? 1 : 0) << ','
         << rec.l0 << ',' << rec.queries << ',' << rec.elapsed_s << ','
         << rec.added << ',' << rec.removed << '\n';
    if (!os) throw IoError("write failed: " + path);
    return;
  }
  throw ConfigError("export_report: unknown format '" + format + "'");
}

CampaignReport load_report_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  json j = json::parse(is, nullptr, true);
  if (j.value("kind", "") != "attack_campaign")
    throw ParseError(path + ": not an attack_campaign report");
  CampaignReport r;
  r.attack_name = j.at("attack").get<std::string>();
  r.seed = j.at("seed").get<uint64_t>();
  r.config_echo_json = j.at("config").dump();
  r.n_samples = j.at("n_samples").get<int>();
  r.n_initially_correct = j.at("n_initially_correct").get<int>();
  r.n_success = j.at("n_success").get<int>();
  r.success_rate = j.at("success_rate").get<double>();
  if (!j.at("median_l0").is_null()) r.median_l0 = j.at("median_l0").get<double>();
  if (!j.at("median_queries").is_null())
    r.median_queries = j.at("median_queries").get<double>();
  if (!j.at("median_elapsed_s").is_null())
    r.median_elapsed_s = j.at("median_elapsed_s").get<double>();
  r.added_total = j.at("added_total").get<int64_t>();
  r.removed_total = j.at("removed_total").get<int64_t>();
  const json& tp = j.at("time_profile");
  r.profile.added_total = tp.at("added_total").get<std::vector<int64_t>>();
  r.profile.removed_total = tp.at("removed_total").get<std::vector<int64_t>>();
  r.profile.added_q10 = tp.at("added_q10").get<std::vector<double>>();
  r.profile.added_median = tp.at("added_median").get<std::vector<double>>();
  r.profile.added_q90 = tp.at("added_q90").get<std::vector<double>>();
  r.profile.removed_q10 = tp.at("removed_q10").get<std::vector<double>>();
  r.profile.removed_median = tp.at("removed_median").get<std::vector<double>>();
  r.profile.removed_q90 = tp.at("removed_q90").get<std::vector<double>>();
  r.confusion = j.at("confusion_matrix").get<std::vector<std::vector<int64_t>>>();
  for (const json& s : j.at("samples")) {
    SampleRecord rec;
    rec.index = s.at("index").get<int64_t>();
    rec.original_label = s.at("original_label").get<int>();
    rec.adversarial_label = s.at("adversarial_label").get<int>();
    rec.success = s.at("success").get<bool>();
    rec.l0 = s.at("l0").get<int64_t>();
    rec.queries = s.at("queries").get<int64_t>();
    rec.elapsed_s = s.at("elapsed_s").get<double>();
    rec.added = s.at("added").get<int64_t>();
    rec.removed = s.at("removed").get<int64_t>();
    rec.added_per_bin = s.at("added_per_bin").get<std::vector<int64_t>>();
    rec.removed_per_bin = s.at("removed_per_bin").get<std::vector<int64_t>>();
    r.records.push_back(std::move(rec));
  }
  return r;
}

std::vector<SampleRecord> load_records_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(is, line))
    throw ParseError(path + ": empty CSV");
  std::vector<SampleRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    SampleRecord rec;
    auto next_field = [&]() {
      if (!std::getline(ss, field, ','))
        throw ParseError(path + ": short CSV row '" + line + "'");
      return field;
    };
    rec.index = std::stoll(next_field());
    rec.original_label = std::stoi(next_field());
    rec.adversarial_label = std::stoi(next_field());
    rec.success = std::stoi(next_field()) != 0;
    rec.l0 = std::stoll(next_field());
    rec.queries = std::stoll(next_field());
    rec.elapsed_s = std::stod(next_field());
    rec.added = std::stoll(next_field());
    rec.removed = std::stoll(next_field());
    out.push_back(rec);
  }
  return out;
}

std::string patch_report_to_json(const PatchCampaignReport& r) {
  json j;
  j["schema_version"] = 1;
  j["kind"] = "patch_campaign";
  j["target_label"] = r.target_label;
  j["seed"] = r.seed;
  j["n_samples"] = r.n_samples;
  j["n_eligible"] = r.n_eligible;
  j["n_success"] = r.n_success;
  j["success_rate"] = r.success_rate ? json(*r.success_rate) : json(nullptr);
  json samples = json::array();
  for (const PatchSampleRecord& rec : r.records)
    samples.push_back({{"index", rec.index},
                       {"original_label", rec.original_label},
                       {"predicted_label", rec.predicted_label},
                       {"success", rec.success},
                       {"pos_y", rec.pos_y},
                       {"pos_x", rec.pos_x}});
  j["samples"] = std::move(samples);
  return j.dump(2);
}

}  // namespace spikefool
