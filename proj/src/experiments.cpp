#include "spikefool/experiments.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "spikefool/attacks.hpp"
#include "spikefool/bmnist.hpp"
#include "spikefool/common.hpp"
#include "spikefool/events.hpp"
#include "spikefool/harness.hpp"
#include "spikefool/training.hpp"

namespace spikefool {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json parse_config(const std::string& config_json) {
  try {
    return json::parse(config_json);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

uint64_t require_seed(const json& cfg) {
  if (!cfg.contains("seed") || !cfg.at("seed").is_number())
    throw ConfigError("config field 'seed' is mandatory");
  return cfg.at("seed").get<uint64_t>();
}

std::string require_string(const json& cfg, const std::string& field) {
  if (!cfg.contains(field) || !cfg.at(field).is_string())
    throw ConfigError("config field '" + field + "' (string) is required");
  return cfg.at(field).get<std::string>();
}

void require_exists(const std::string& path, const std::string& field) {
  if (!fs::exists(path))
    throw ConfigError("config field '" + field + "': path does not exist: " +
                      path);
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!text.empty() && text.back() != '\n') os << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

void echo_config(const json& resolved, const std::string& out_dir) {
  write_text(fs::path(out_dir) / "config.json", resolved.dump(2));
}

int resolve_threads(const json& cfg) {
  int threads = cfg.value("threads", 0);
  if (threads <= 0) {
    unsigned hc = std::thread::hardware_concurrency();
    threads = hc == 0 ? 1 : int(hc);
  }
  return threads;
}

struct LoadedData {
  SynthDataset ds;
  int T = 0, P = 0, H = 0, W = 0;
};

LoadedData load_config_dataset(const json& cfg) {
  LoadedData out;
  const std::string kind = cfg.value("dataset_kind", "raster_dir");
  if (kind == "bmnist") {
    const std::string dir = require_string(cfg, "dataset_dir");
    require_exists(dir, "dataset_dir");
    const double sub = cfg.value("subsample", 1.0);
    out.ds.train = load_bmnist_split(dir, true, sub);
    out.ds.test = load_bmnist_split(dir, false, sub);
  } else if (kind == "raster_dir") {
    const std::string dir = require_string(cfg, "dataset_dir");
    require_exists(dir, "dataset_dir");
    out.ds = load_dataset(dir);
  } else {
    throw ConfigError("dataset_kind must be raster_dir or bmnist");
  }
  if (out.ds.train.size() == 0) throw ConfigError("dataset has no train split");
  const Tensor& r0 = out.ds.train.rasters[0];
  out.T = r0.dim(0);
  out.P = r0.dim(1);
  out.H = r0.dim(2);
  out.W = r0.dim(3);
  return out;
}

const Dataset& pick_split(const SynthDataset& ds, const std::string& split) {
  if (split == "train") return ds.train;
  if (split == "test") return ds.test;
  throw ConfigError("split must be 'train' or 'test'");
}

Dataset head_subset(const Dataset& ds, int max_samples) {
  if (max_samples <= 0 || size_t(max_samples) >= ds.size()) return ds;
  Dataset out;
  out.n_classes = ds.n_classes;
  out.rasters.assign(ds.rasters.begin(), ds.rasters.begin() + max_samples);
  out.labels.assign(ds.labels.begin(), ds.labels.begin() + max_samples);
  return out;
}

// --------------------------------------------------------------------------
// Model specs

struct ShapeCursor {
  int c, h, w;
  bool flat = false;
  int features = 0;
};

void advance_shape(ShapeCursor& s, const LayerSpec& ls) {
  switch (ls.kind) {
    case LayerKind::conv2d:
      s.c = ls.out_channels;
      s.h = (s.h + 2 * ls.pad - ls.kernel) / ls.stride + 1;
      s.w = (s.w + 2 * ls.pad - ls.kernel) / ls.stride + 1;
      break;
    case LayerKind::sum_pool2d:
      s.h /= ls.pool;
      s.w /= ls.pool;
      break;
    case LayerKind::flatten:
      s.flat = true;
      s.features = s.c * s.h * s.w;
      break;
    case LayerKind::linear:
      s.features = ls.out_channels;
      break;
    default:
      break;
  }
}

void push(std::vector<LayerSpec>& layers, ShapeCursor& s, LayerSpec ls) {
  if (ls.kind == LayerKind::conv2d) ls.in_channels = s.c;
  if (ls.kind == LayerKind::batchnorm) {
    ls.in_channels = s.c;
    ls.out_channels = s.c;
  }
  if (ls.kind == LayerKind::linear)
    ls.in_channels = s.flat ? s.features : s.c * s.h * s.w;
  advance_shape(s, ls);
  layers.push_back(ls);
}

std::vector<LayerSpec> preset_layers(const std::string& name, NetMode mode,
                                     int in_p, int in_h, int in_w,
                                     int n_classes) {
  ShapeCursor s{in_p, in_h, in_w};
  std::vector<LayerSpec> L;
  auto act = [&]() {
    push(L, s, mode == NetMode::spiking ? LayerSpec::spiking_iaf()
                                        : LayerSpec::relu_spec());
  };
  if (name == "desk_snn" || name == "desk_ann" || name == "desk_snn_bn") {
    const bool bn = name == "desk_snn_bn";
    push(L, s, LayerSpec::conv2d(0, 8, 3, 1, 1));
    if (bn) push(L, s, LayerSpec::batchnorm(0));
    act();
    push(L, s, LayerSpec::sum_pool2d(2));
    push(L, s, LayerSpec::conv2d(0, 8, 3, 1, 1));
    if (bn) push(L, s, LayerSpec::batchnorm(0));
    act();
    push(L, s, LayerSpec::sum_pool2d(2));
    push(L, s, LayerSpec::flatten_spec());
    push(L, s, LayerSpec::linear(0, 64));
    act();
    push(L, s, LayerSpec::linear(0, n_classes));
    if (mode == NetMode::spiking) act();
    return L;
  }
  if (name == "lenet5") {
    push(L, s, LayerSpec::conv2d(0, 20, 5, 1, 2));
    act();
    push(L, s, LayerSpec::sum_pool2d(2));
    push(L, s, LayerSpec::conv2d(0, 32, 5, 1, 2));
    act();
    push(L, s, LayerSpec::sum_pool2d(2));
    push(L, s, LayerSpec::conv2d(0, 128, 3, 1, 1));
    act();
    push(L, s, LayerSpec::flatten_spec());
    push(L, s, LayerSpec::linear(0, 500));
    act();
    push(L, s, LayerSpec::linear(0, n_classes));
    if (mode == NetMode::spiking) act();
    return L;
  }
  if (name == "lenet5_bn") {
    push(L, s, LayerSpec::conv2d(0, 8, 5, 1, 2));
    push(L, s, LayerSpec::batchnorm(0));
    act();
    push(L, s, LayerSpec::sum_pool2d(2));
    push(L, s, LayerSpec::conv2d(0, 8, 5, 1, 2));
    push(L, s, LayerSpec::batchnorm(0));
    act();
    push(L, s, LayerSpec::sum_pool2d(2));
    push(L, s, LayerSpec::conv2d(0, 8, 3, 1, 1));
    push(L, s, LayerSpec::batchnorm(0));
    act();
    push(L, s, LayerSpec::flatten_spec());
    push(L, s, LayerSpec::linear(0, 64));
    act();
    push(L, s, LayerSpec::linear(0, n_classes));
    if (mode == NetMode::spiking) act();
    return L;
  }
  throw ConfigError("unknown model preset '" + name + "'");
}

LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "conv2d") return LayerKind::conv2d;
  if (s == "linear") return LayerKind::linear;
  if (s == "sum_pool2d") return LayerKind::sum_pool2d;
  if (s == "batchnorm") return LayerKind::batchnorm;
  if (s == "spiking_iaf") return LayerKind::spiking_iaf;
  if (s == "relu") return LayerKind::relu;
  if (s == "flatten") return LayerKind::flatten;
  throw ConfigError("unknown layer kind '" + s + "'");
}

}  // namespace

NetworkSpec parse_model_spec(const std::string& model_json, NetMode mode,
                             int in_p, int in_h, int in_w, int n_classes) {
  json m = parse_config(model_json);
  NetworkSpec spec;
  spec.mode = mode;
  spec.in_polarities = in_p;
  spec.in_height = in_h;
  spec.in_width = in_w;
  spec.n_classes = n_classes;

  if (m.contains("layers")) {
    ShapeCursor s{in_p, in_h, in_w};
    for (const json& lj : m.at("layers")) {
      LayerSpec ls;
      ls.kind = layer_kind_from_string(lj.at("kind").get<std::string>());
      switch (ls.kind) {
        case LayerKind::conv2d:
          ls.out_channels = lj.at("out").get<int>();
          ls.kernel = lj.at("kernel").get<int>();
          ls.stride = lj.value("stride", 1);
          ls.pad = lj.value("pad", 0);
          ls.bias = lj.value("bias", false);
          break;
        case LayerKind::linear:
          ls.out_channels = lj.at("out").get<int>();
          ls.bias = lj.value("bias", false);
          break;
        case LayerKind::sum_pool2d:
          ls.pool = lj.at("pool").get<int>();
          break;
        case LayerKind::batchnorm:
          ls.bn_eps = lj.value("eps", 1e-5);
          break;
        case LayerKind::spiking_iaf:
          ls.theta = lj.value("theta", 1.0);
          ls.clamp_v_zero = lj.value("clamp_v_zero", false);
          break;
        case LayerKind::relu:
        case LayerKind::flatten:
          break;
      }
      push(spec.layers, s, ls);
    }
  } else {
    const std::string arch =
        m.value("arch", mode == NetMode::spiking ? "desk_snn" : "desk_ann");
    spec.layers = preset_layers(arch, mode, in_p, in_h, in_w, n_classes);
  }
  return spec;
}

// ---------------------------------------------------------------------------
// synth

std::string run_synth(const std::string& config_json,
                      const std::string& out_dir) {
  json cfg = parse_config(config_json);
  const uint64_t seed = require_seed(cfg);
  const json d = cfg.value("dataset", json::object());
  SynthSpec spec;
  spec.n_classes = d.value("n_classes", spec.n_classes);
  spec.height = d.value("height", spec.height);
  spec.width = d.value("width", spec.width);
  spec.n_bins = d.value("n_bins", spec.n_bins);
  spec.n_train = d.value("n_train", spec.n_train);
  spec.n_test = d.value("n_test", spec.n_test);
  spec.noise_rate = d.value("noise_rate", spec.noise_rate);

  SynthDataset ds = synth_dataset(spec, seed);
  save_dataset(ds, out_dir);

  json resolved = {{"seed", seed},
                   {"dataset",
                    {{"n_classes", spec.n_classes},
                     {"height", spec.height},
                     {"width", spec.width},
                     {"n_bins", spec.n_bins},
                     {"n_train", spec.n_train},
                     {"n_test", spec.n_test},
                     {"noise_rate", spec.noise_rate}}}};
  echo_config(resolved, out_dir);

  std::ostringstream os;
  os << "synth: wrote " << ds.train.size() << " train / " << ds.test.size()
     << " test samples (" << spec.n_classes << " classes, " << spec.n_bins
     << "x2x" << spec.height << "x" << spec.width << ") to " << out_dir;
  return os.str();
}

// ---------------------------------------------------------------------------
// train

namespace {

TrainConfig parse_train_config(const json& cfg, uint64_t seed) {
  const json t = cfg.value("train", json::object());
  TrainConfig tc;
  tc.epochs = t.value("epochs", 20);
  tc.batch_size = t.value("batch_size", 16);
  tc.adam.lr = t.value("lr", 1e-3);
  tc.seed = seed;
  tc.validate();
  return tc;
}

TradesConfig parse_trades_config(const json& cfg) {
  const json t = cfg.value("trades", json::object());
  TradesConfig tr;
  tr.beta_rob = t.value("beta_rob", 0.05);
  tr.eps = t.value("eps", 0.5);
  tr.n_pgd = t.value("n_pgd", 5);
  tr.step_size = t.value("step_size", 0.0);
  tr.validate();
  return tr;
}

json train_report_json(const TrainReport& r, const std::string& pipeline) {
  json j = json::parse(train_report_to_json(r));
  j["pipeline"] = pipeline;
  return j;
}

}  // namespace

std::string run_train(const std::string& config_json,
                      const std::string& out_dir) {
  json cfg = parse_config(config_json);
  const uint64_t seed = require_seed(cfg);
  const std::string pipeline = cfg.value("pipeline", "bptt");
  LoadedData data = load_config_dataset(cfg);
  TrainConfig tc = parse_train_config(cfg, seed);
  const int quantize_bits = cfg.value("quantize_bits", 0);
  const std::string model_json = cfg.value("model", json::object()).dump();

  fs::create_directories(out_dir);
  json report;
  std::ostringstream summary;

  if (pipeline == "bptt" || pipeline == "trades") {
    NetworkSpec spec =
        parse_model_spec(model_json, NetMode::spiking, data.P, data.H, data.W,
                         data.ds.train.n_classes);
    Network net(spec, seed);
    TradesConfig trades;  // beta_rob = 0: plain BPTT
    if (pipeline == "trades") trades = parse_trades_config(cfg);
    TrainReport tr =
        train_bptt(net, data.ds.train, &data.ds.test, tc, trades);
    save_model(net, (fs::path(out_dir) / "model.snn").string());
    report = train_report_json(tr, pipeline);
    summary << "train(" << pipeline << "): test_acc " << tr.final_test_acc;
    if (quantize_bits > 0) {
      Network q = quantize_weights(net, quantize_bits);
      save_model(q, (fs::path(out_dir) / "model_quant.snn").string());
      const double qacc = accuracy(q, data.ds.test);
      report["quantized_bits"] = quantize_bits;
      report["quantized_test_acc"] = qacc;
      summary << ", quantized test_acc " << qacc;
    }
  } else if (pipeline == "ann" || pipeline == "transfer") {
    Dataset train_frames = accumulate_dataset(data.ds.train);
    Dataset test_frames = accumulate_dataset(data.ds.test);
    NetworkSpec spec =
        parse_model_spec(model_json, NetMode::analog, data.P, data.H, data.W,
                         data.ds.train.n_classes);
    Network ann(spec, seed);
    TrainReport tr = train_bptt(ann, train_frames, &test_frames, tc);
    report = train_report_json(tr, pipeline);
    summary << "train(" << pipeline << "): ann test_acc " << tr.final_test_acc;
    if (pipeline == "transfer") {
      Network folded = ann.clone();
      for (const auto& l : ann.layers())
        if (l->kind() == LayerKind::batchnorm) {
          folded = fold_batchnorm(ann);
          break;
        }
      Network snn = transfer_weights(folded, train_frames);
      save_model(snn, (fs::path(out_dir) / "model.snn").string());
      save_model(ann, (fs::path(out_dir) / "model_analog.snn").string());
      const double snn_acc = accuracy(snn, data.ds.test);
      report["transfer_test_acc"] = snn_acc;
      summary << ", transferred snn test_acc " << snn_acc;
      if (quantize_bits > 0) {
        Network q = quantize_weights(snn, quantize_bits);
        save_model(q, (fs::path(out_dir) / "model_quant.snn").string());
        const double qacc = accuracy(q, data.ds.test);
        report["quantized_bits"] = quantize_bits;
        report["quantized_test_acc"] = qacc;
        summary << ", quantized test_acc " << qacc;
      }
    } else {
      save_model(ann, (fs::path(out_dir) / "model.snn").string());
      if (quantize_bits > 0) {
        Network q = quantize_weights(ann, quantize_bits);
        save_model(q, (fs::path(out_dir) / "model_quant.snn").string());
        const double qacc = accuracy(q, test_frames);
        report["quantized_bits"] = quantize_bits;
        report["quantized_test_acc"] = qacc;
        summary << ", quantized test_acc " << qacc;
      }
    }
  } else {
    throw ConfigError("pipeline must be bptt, trades, ann or transfer");
  }

  write_text(fs::path(out_dir) / "train_report.json", report.dump(2));
  cfg["pipeline"] = pipeline;
  echo_config(cfg, out_dir);
  return summary.str();
}

// ---------------------------------------------------------------------------
// attack

namespace {

AttackSpecCfg parse_attack_spec(const json& cfg) {
  const json a = cfg.value("attack", json::object());
  AttackSpecCfg spec;
  spec.kind = attack_kind_from_string(a.value("kind", "spikefool"));
  switch (spec.kind) {
    case AttackKind::spikefool:
      spec.spikefool.eta = a.value("eta", spec.spikefool.eta);
      spec.spikefool.lambda = a.value("lambda", spec.spikefool.lambda);
      spec.spikefool.lower = a.value("lower", spec.spikefool.lower);
      spec.spikefool.upper = a.value("upper", spec.spikefool.upper);
      spec.spikefool.max_outer_iters =
          a.value("max_outer_iters", spec.spikefool.max_outer_iters);
      spec.spikefool.max_deepfool_iters =
          a.value("max_deepfool_iters", spec.spikefool.max_deepfool_iters);
      spec.spikefool.deepfool_overshoot =
          a.value("deepfool_overshoot", spec.spikefool.deepfool_overshoot);
      spec.spikefool.validate();
      break;
    case AttackKind::cd_pgd:
      spec.cd.n_steps = a.value("n_steps", spec.cd.n_steps);
      spec.cd.step_size = a.value("step_size", spec.cd.step_size);
      spec.cd.max_flips = a.value("max_flips", spec.cd.max_flips);
      spec.cd.validate();
      break;
    case AttackKind::prob_pgd:
      spec.prob.temperature = a.value("temperature", spec.prob.temperature);
      spec.prob.n_mc = a.value("n_mc", spec.prob.n_mc);
      spec.prob.n_steps = a.value("n_steps", spec.prob.n_steps);
      spec.prob.step_size = a.value("step_size", spec.prob.step_size);
      spec.prob.max_flips = a.value("max_flips", spec.prob.max_flips);
      spec.prob.p_clip = a.value("p_clip", spec.prob.p_clip);
      spec.prob.validate();
      break;
  }
  return spec;
}

void write_campaign_outputs(const CampaignReport& report, const Dataset& ds,
                            const std::string& out_dir, bool save_rasters,
                            const std::string& stem) {
  export_report(report, (fs::path(out_dir) / (stem + ".json")).string(),
                "json");
  export_report(report, (fs::path(out_dir) / (stem + ".csv")).string(), "csv");
  if (save_rasters) {
    fs::path adv_dir = fs::path(out_dir) / (stem + "_adv");
    fs::create_directories(adv_dir);
    char name[32];
    for (const SampleRecord& rec : report.records) {
      if (!rec.success) continue;
      std::snprintf(name, sizeof name, "adv_%06lld.ras",
                    static_cast<long long>(rec.index));
      save_raster(rec.x_adv, (adv_dir / name).string());
    }
  }
  (void)ds;
}

std::string campaign_summary_line(const CampaignReport& r) {
  std::ostringstream os;
  os << r.attack_name << ": success " << r.success_rate << "% ("
     << r.n_success << "/" << r.n_initially_correct << " initially correct)";
  if (r.median_l0) os << ", median L0 " << *r.median_l0;
  if (r.median_queries) os << ", median queries " << *r.median_queries;
  return os.str();
}

}  // namespace

std::string run_attack(const std::string& config_json,
                       const std::string& out_dir) {
  json cfg = parse_config(config_json);
  const uint64_t seed = require_seed(cfg);
  const std::string model_path = require_string(cfg, "model");
  require_exists(model_path, "model");
  LoadedData data = load_config_dataset(cfg);
  const Dataset& split = pick_split(data.ds, cfg.value("split", "test"));
  Dataset subset = head_subset(split, cfg.value("max_samples", 0));
  AttackSpecCfg spec = parse_attack_spec(cfg);
  const int threads = resolve_threads(cfg);
  const bool save_rasters = cfg.value("save_adv_rasters", true);

  Network net = load_model(model_path);
  CampaignReport report = run_campaign(net, subset, spec, seed, threads);
  fs::create_directories(out_dir);
  write_campaign_outputs(report, subset, out_dir, save_rasters, "report");
  cfg["attack"] = json::parse(report.config_echo_json);
  echo_config(cfg, out_dir);
  return "attack: " + campaign_summary_line(report);
}

// ---------------------------------------------------------------------------
// patch

std::string run_patch(const std::string& config_json,
                      const std::string& out_dir) {
  json cfg = parse_config(config_json);
  const uint64_t seed = require_seed(cfg);
  const std::string model_path = require_string(cfg, "model");
  require_exists(model_path, "model");
  LoadedData data = load_config_dataset(cfg);
  const int threads = resolve_threads(cfg);

  const json p = cfg.value("patch", json::object());
  const int target_label = p.value("target_label", 0);
  const int ph = p.value("height", std::max(2, data.H / 3));
  const int pw = p.value("width", std::max(2, data.W / 3));
  PatchTrainConfig ptc;
  ptc.epochs = p.value("epochs", 1);
  ptc.max_steps_per_sample = p.value("steps_per_sample", 50);
  ptc.step_size = p.value("step_size", 0.1);
  ptc.confidence_threshold = p.value("confidence", 0.75);
  const std::string placement_name =
      p.value("placement", "sample_active_region");
  ptc.placement = placement_name == "region"
                      ? PatchPlacement::patch_region
                      : PatchPlacement::sample_active_region;
  if (p.contains("region")) {
    const json r = p.at("region");
    ptc.region_y0 = r.value("y0", 0);
    ptc.region_x0 = r.value("x0", 0);
    ptc.region_h = r.value("h", 0);
    ptc.region_w = r.value("w", 0);
  }
  if (target_label < 0 || target_label >= data.ds.train.n_classes)
    throw ConfigError("patch.target_label out of range");

  Network net = load_model(model_path);
  NetworkTarget target(net);
  Patch trained = train_patch(target, data.ds.train, target_label, ph, pw,
                              ptc, seed);
  fs::create_directories(out_dir);
  save_patch(trained, (fs::path(out_dir) / "patch.pat").string());

  Patch random = random_patch(data.T, data.P, ph, pw, target_label,
                              mix_seed(seed, 0x726e6470 /* "rndp" */));
  random.region_y0 = trained.region_y0;
  random.region_x0 = trained.region_x0;
  random.region_h = trained.region_h;
  random.region_w = trained.region_w;

  PatchCampaignReport trained_rep = patch_campaign(
      net, data.ds.test, trained, ptc.placement, seed, threads);
  PatchCampaignReport random_rep = patch_campaign(
      net, data.ds.test, random, ptc.placement, seed, threads);
  write_text(fs::path(out_dir) / "patch_report.json",
             patch_report_to_json(trained_rep));
  write_text(fs::path(out_dir) / "random_report.json",
             patch_report_to_json(random_rep));

  json comparison = {
      {"target_label", target_label},
      {"trained_success_rate",
       trained_rep.success_rate ? json(*trained_rep.success_rate) : json()},
      {"random_success_rate",
       random_rep.success_rate ? json(*random_rep.success_rate) : json()}};
  write_text(fs::path(out_dir) / "comparison.json", comparison.dump(2));
  echo_config(cfg, out_dir);

  std::ostringstream os;
  os << "patch: target " << target_label << " trained "
     << (trained_rep.success_rate ? *trained_rep.success_rate : 0.0)
     << "% vs random "
     << (random_rep.success_rate ? *random_rep.success_rate : 0.0) << "%";
  return os.str();
}

// ---------------------------------------------------------------------------
// defend

std::string run_defend(const std::string& config_json,
                       const std::string& out_dir) {
  json cfg = parse_config(config_json);
  const uint64_t seed = require_seed(cfg);
  LoadedData data = load_config_dataset(cfg);
  TrainConfig tc = parse_train_config(cfg, seed);
  TradesConfig trades = parse_trades_config(cfg);
  AttackSpecCfg attack = parse_attack_spec(cfg);
  const int threads = resolve_threads(cfg);
  const int max_samples = cfg.value("max_samples", 0);
  const std::string model_json = cfg.value("model", json::object()).dump();

  NetworkSpec spec =
      parse_model_spec(model_json, NetMode::spiking, data.P, data.H, data.W,
                       data.ds.train.n_classes);
  fs::create_directories(out_dir);

  // Same init seed and data order: beta_rob = 0 reproduces plain training.
  Network baseline(spec, seed);
  TradesConfig plain = trades;
  plain.beta_rob = 0.0;
  TrainReport base_tr = train_bptt(baseline, data.ds.train, &data.ds.test, tc, plain);
  save_model(baseline, (fs::path(out_dir) / "model_baseline.snn").string());

  Network defended(spec, seed);
  TrainReport def_tr =
      train_bptt(defended, data.ds.train, &data.ds.test, tc, trades);
  save_model(defended, (fs::path(out_dir) / "model_defended.snn").string());

  Dataset subset = head_subset(data.ds.test, max_samples);
  CampaignReport base_rep =
      run_campaign(baseline, subset, attack, seed, threads);
  CampaignReport def_rep = run_campaign(defended, subset, attack, seed, threads);
  write_campaign_outputs(base_rep, subset, out_dir, false, "report_baseline");
  write_campaign_outputs(def_rep, subset, out_dir, false, "report_defended");

  json comparison = {
      {"beta_rob", trades.beta_rob},
      {"baseline",
       {{"test_acc", base_tr.final_test_acc},
        {"success_rate", base_rep.success_rate},
        {"median_l0", base_rep.median_l0 ? json(*base_rep.median_l0) : json()}}},
      {"defended",
       {{"test_acc", def_tr.final_test_acc},
        {"success_rate", def_rep.success_rate},
        {"median_l0", def_rep.median_l0 ? json(*def_rep.median_l0) : json()}}}};
  write_text(fs::path(out_dir) / "comparison.json", comparison.dump(2));
  write_text(fs::path(out_dir) / "train_report_baseline.json",
             train_report_to_json(base_tr));
  write_text(fs::path(out_dir) / "train_report_defended.json",
             train_report_to_json(def_tr));
  echo_config(cfg, out_dir);

  std::ostringstream os;
  os << "defend: baseline median L0 "
     << (base_rep.median_l0 ? *base_rep.median_l0 : -1.0) << " -> defended "
     << (def_rep.median_l0 ? *def_rep.median_l0 : -1.0) << " (beta_rob "
     << trades.beta_rob << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// report

std::string run_report(const std::vector<std::string>& report_paths,
                       const std::string& out_dir) {
  if (report_paths.empty()) throw ConfigError("report: no input reports");
  struct Row {
    std::string attack;
    double lambda = 0.0, eta = 0.0;
    json config;
    double success_rate;
    std::optional<double> median_l0, median_queries, median_elapsed;
    int n_initially_correct;
    std::string path;
  };
  std::vector<Row> rows;
  for (const std::string& path : report_paths) {
    CampaignReport r = load_report_json(path);
    check_report_consistency(r);
    // Recompute medians from the per-sample records rather than trusting the
    // stored aggregates.
    std::vector<double> l0s, queries, times;
    for (const SampleRecord& rec : r.records) {
      if (rec.success) l0s.push_back(double(rec.l0));
      queries.push_back(double(rec.queries));
      times.push_back(double(rec.elapsed_s));
    }
    Row row;
    row.attack = r.attack_name;
    row.config = json::parse(r.config_echo_json);
    row.lambda = row.config.value("lambda", 0.0);
    row.eta = row.config.value("eta", 0.0);
    row.success_rate = r.success_rate;
    if (!l0s.empty()) row.median_l0 = median(l0s);
    if (!queries.empty()) row.median_queries = median(queries);
    if (!times.empty()) row.median_elapsed = median(times);
    row.n_initially_correct = r.n_initially_correct;
    row.path = path;
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.attack != b.attack) return a.attack < b.attack;
    if (a.lambda != b.lambda) return a.lambda < b.lambda;
    return a.eta < b.eta;
  });

  std::ostringstream table;
  table << "attack      lambda  eta    success%  medianL0  medianQ  medianT(s)\n";
  json jrows = json::array();
  for (const Row& r : rows) {
    char line[160];
    std::snprintf(line, sizeof line,
                  "%-11s %-7.2f %-6.3f %-9.2f %-9s %-8s %-10s",
                  r.attack.c_str(), r.lambda, r.eta, r.success_rate,
                  r.median_l0 ? std::to_string(*r.median_l0).c_str() : "n/a",
                  r.median_queries ? std::to_string(*r.median_queries).c_str()
                                   : "n/a",
                  r.median_elapsed ? std::to_string(*r.median_elapsed).c_str()
                                   : "n/a");
    table << line << '\n';
    jrows.push_back(
        {{"attack", r.attack},
         {"config", r.config},
         {"success_rate", r.success_rate},
         {"median_l0", r.median_l0 ? json(*r.median_l0) : json()},
         {"median_queries", r.median_queries ? json(*r.median_queries) : json()},
         {"median_elapsed_s",
          r.median_elapsed ? json(*r.median_elapsed) : json()},
         {"n_initially_correct", r.n_initially_correct},
         {"source", r.path}});
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    json summary = {{"schema_version", 1}, {"kind", "summary"}, {"rows", jrows}};
    write_text(fs::path(out_dir) / "summary.json", summary.dump(2));
    std::ostringstream csv;
    csv << "attack,lambda,eta,success_rate,median_l0,median_queries,"
           "median_elapsed_s,n_initially_correct,source\n";
    for (const Row& r : rows) {
      csv << r.attack << ',' << r.lambda << ',' << r.eta << ','
          << r.success_rate << ',';
      if (r.median_l0) csv << *r.median_l0;
      csv << ',';
      if (r.median_queries) csv << *r.median_queries;
      csv << ',';
      if (r.median_elapsed) csv << *r.median_elapsed;
      csv << ',' << r.n_initially_correct << ',' << r.path << '\n';
    }
    write_text(fs::path(out_dir) / "summary.csv", csv.str());
  }
  return table.str();
}

}  // namespace spikefool
