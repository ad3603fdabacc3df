#include "spikefool.h"

#include <cstring>
#include <string>

#include <json.hpp>

#include "spikefool/attacks.hpp"
#include "spikefool/common.hpp"
#include "spikefool/events.hpp"
#include "spikefool/experiments.hpp"
#include "spikefool/harness.hpp"
#include "spikefool/network.hpp"
#include "spikefool/training.hpp"

using namespace spikefool;

struct sf_events {
  EventList impl;
};
struct sf_raster {
  Tensor impl;
};
struct sf_model {
  Network impl;
};
struct sf_patch {
  Patch impl;
};

namespace {

thread_local std::string g_last_error;

sf_status fail(sf_status code, const char* what) {
  g_last_error = what ? what : "unknown error";
  return code;
}

sf_status to_status(const Error& e) {
  switch (e.code()) {
    case ErrorCode::io: return SF_ERR_IO;
    case ErrorCode::parse: return SF_ERR_PARSE;
    case ErrorCode::validation: return SF_ERR_VALIDATION;
    case ErrorCode::config: return SF_ERR_CONFIG;
    case ErrorCode::numeric: return SF_ERR_NUMERIC;
    case ErrorCode::calibration: return SF_ERR_CALIBRATION;
    case ErrorCode::degenerate_gradient: return SF_ERR_DEGENERATE_GRADIENT;
    case ErrorCode::internal: return SF_ERR_INTERNAL;
  }
  return SF_ERR_INTERNAL;
}

// Runs fn, translating exceptions into status codes + the thread-local
// message. All API entry points funnel through here.
template <typename Fn>
sf_status guarded(Fn&& fn) {
  try {
    fn();
    return SF_OK;
  } catch (const Error& e) {
    return fail(to_status(e), e.what());
  } catch (const std::exception& e) {
    return fail(SF_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(SF_ERR_INTERNAL, "unknown exception");
  }
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

sf_status require(bool cond, const char* what) {
  return cond ? SF_OK : fail(SF_ERR_VALIDATION, what);
}

AttackSpecCfg attack_spec_from_json(const char* attack_config_json) {
  nlohmann::json wrapper;
  wrapper["attack"] = nlohmann::json::parse(attack_config_json);
  // Reuse the experiment-level parser by round-tripping through run_attack's
  // config shape.
  AttackSpecCfg spec;
  const nlohmann::json& a = wrapper.at("attack");
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

template <typename Runner>
sf_status run_command(Runner&& runner, char** summary) {
  return guarded([&] {
    std::string text = runner();
    if (summary) *summary = dup_string(text);
  });
}

}  // namespace

extern "C" {

const char* sf_version(void) { return "1.0.0"; }

const char* sf_last_error(void) { return g_last_error.c_str(); }

void sf_string_free(char* s) { delete[] s; }

/* ------------------------------------------------------------------ events */

sf_status sf_events_load(const char* path, const char* format, uint32_t width,
                         uint32_t height, sf_events** out) {
  if (sf_status s = require(path && format && out, "null argument"); s != SF_OK)
    return s;
  return guarded([&] {
    EventList ev =
        load_events(path, event_format_from_string(format), width, height);
    *out = new sf_events{std::move(ev)};
  });
}

sf_status sf_events_save(const sf_events* events, const char* path,
                         const char* format) {
  if (sf_status s = require(events && path && format, "null argument");
      s != SF_OK)
    return s;
  return guarded(
      [&] { save_events(events->impl, path, event_format_from_string(format)); });
}

size_t sf_events_count(const sf_events* events) {
  return events ? events->impl.events.size() : 0;
}

void sf_events_free(sf_events* events) { delete events; }

/* ----------------------------------------------------------------- rasters */

sf_status sf_rasterize(const sf_events* events, uint64_t t_start_us,
                       uint64_t duration_us, uint32_t n_bins,
                       uint32_t max_per_cell, sf_raster** out) {
  if (sf_status s = require(events && out, "null argument"); s != SF_OK)
    return s;
  return guarded([&] {
    RasterConfig cfg;
    cfg.duration_us = duration_us;
    cfg.n_bins = n_bins;
    cfg.max_per_cell = max_per_cell;
    *out = new sf_raster{rasterize(events->impl, cfg, t_start_us)};
  });
}

sf_status sf_raster_load(const char* path, sf_raster** out) {
  if (sf_status s = require(path && out, "null argument"); s != SF_OK) return s;
  return guarded([&] { *out = new sf_raster{load_raster(path)}; });
}

sf_status sf_raster_save(const sf_raster* raster, const char* path) {
  if (sf_status s = require(raster && path, "null argument"); s != SF_OK)
    return s;
  return guarded([&] { save_raster(raster->impl, path); });
}

sf_status sf_raster_shape(const sf_raster* raster, uint32_t dims[4]) {
  if (sf_status s = require(raster && dims, "null argument"); s != SF_OK)
    return s;
  return guarded([&] {
    if (raster->impl.rank() != 4)
      throw ValidationError("raster is not [T,P,H,W]");
    for (int i = 0; i < 4; ++i) dims[i] = uint32_t(raster->impl.dim(i));
  });
}

sf_status sf_raster_data(const sf_raster* raster, uint8_t* buf,
                         size_t buf_len) {
  if (sf_status s = require(raster && buf, "null argument"); s != SF_OK)
    return s;
  return guarded([&] {
    if (buf_len < size_t(raster->impl.size()))
      throw ValidationError("buffer too small for raster payload");
    for (int64_t i = 0; i < raster->impl.size(); ++i)
      buf[i] = uint8_t(raster->impl[i]);
  });
}

void sf_raster_free(sf_raster* raster) { delete raster; }

sf_status sf_raster_to_new_events(const sf_events* original,
                                  const sf_raster* original_raster,
                                  const sf_raster* adv_raster,
                                  uint64_t t_start_us, uint64_t duration_us,
                                  int honor_removals, sf_events** out) {
  if (sf_status s = require(original && original_raster && adv_raster && out,
                            "null argument");
      s != SF_OK)
    return s;
  return guarded([&] {
    RasterConfig cfg;
    cfg.duration_us = duration_us;
    cfg.n_bins = uint32_t(original_raster->impl.dim(0));
    cfg.n_polarities = uint32_t(original_raster->impl.dim(1));
    *out = new sf_events{raster_to_new_events(
        original->impl, original_raster->impl, adv_raster->impl, cfg,
        t_start_us, honor_removals != 0)};
  });
}

/* ------------------------------------------------------------------ models */

sf_status sf_model_load(const char* path, sf_model** out) {
  if (sf_status s = require(path && out, "null argument"); s != SF_OK) return s;
  return guarded([&] { *out = new sf_model{load_model(path)}; });
}

sf_status sf_model_save(const sf_model* model, const char* path) {
  if (sf_status s = require(model && path, "null argument"); s != SF_OK)
    return s;
  return guarded([&] { save_model(model->impl, path); });
}

int sf_model_num_classes(const sf_model* model) {
  return model ? model->impl.n_classes() : 0;
}

sf_status sf_model_forward(sf_model* model, const sf_raster* x, double* counts,
                           int* label) {
  if (sf_status s = require(model && x, "null argument"); s != SF_OK) return s;
  return guarded([&] {
    std::vector<double> z = model->impl.forward(x->impl);
    if (counts)
      for (size_t i = 0; i < z.size(); ++i) counts[i] = z[i];
    if (label) *label = argmax_label(z);
  });
}

sf_status sf_model_quantize(const sf_model* model, int bits, sf_model** out) {
  if (sf_status s = require(model && out, "null argument"); s != SF_OK)
    return s;
  return guarded(
      [&] { *out = new sf_model{quantize_weights(model->impl, bits)}; });
}

void sf_model_free(sf_model* model) { delete model; }

/* ----------------------------------------------------------------- attacks */

sf_status sf_attack_run(sf_model* model, const sf_raster* x,
                        uint32_t true_label, const char* attack_config_json,
                        uint64_t seed, sf_attack_result* result,
                        sf_raster** x_adv) {
  if (sf_status s =
          require(model && x && attack_config_json && result, "null argument");
      s != SF_OK)
    return s;
  return guarded([&] {
    AttackSpecCfg spec = attack_spec_from_json(attack_config_json);
    NetworkTarget target(model->impl);
    AttackResult ar;
    switch (spec.kind) {
      case AttackKind::spikefool:
        ar = spikefool::spikefool(target, x->impl, int(true_label),
                                  spec.spikefool);
        break;
      case AttackKind::cd_pgd:
        ar = cd_pgd(target, x->impl, int(true_label), spec.cd);
        break;
      case AttackKind::prob_pgd:
        ar = prob_pgd(target, x->impl, int(true_label), spec.prob, seed);
        break;
    }
    result->success = ar.success ? 1 : 0;
    result->original_label = ar.original_label;
    result->adversarial_label = ar.adversarial_label;
    result->queries = ar.queries;
    result->l0 = ar.l0;
    result->elapsed_s = ar.elapsed_s;
    if (x_adv) *x_adv = new sf_raster{std::move(ar.x_adv)};
  });
}

/* ----------------------------------------------------------------- patches */

sf_status sf_patch_load(const char* path, sf_patch** out) {
  if (sf_status s = require(path && out, "null argument"); s != SF_OK) return s;
  return guarded([&] { *out = new sf_patch{load_patch(path)}; });
}

sf_status sf_patch_save(const sf_patch* patch, const char* path) {
  if (sf_status s = require(patch && path, "null argument"); s != SF_OK)
    return s;
  return guarded([&] { save_patch(patch->impl, path); });
}

sf_status sf_patch_apply(const sf_raster* x, const sf_patch* patch, int pos_y,
                         int pos_x, sf_raster** out) {
  if (sf_status s = require(x && patch && out, "null argument"); s != SF_OK)
    return s;
  return guarded([&] {
    *out = new sf_raster{apply_patch(x->impl, patch->impl, pos_y, pos_x)};
  });
}

void sf_patch_free(sf_patch* patch) { delete patch; }

/* ------------------------------------------------- experiment entry points */

sf_status sf_run_synth(const char* config_json, const char* out_dir,
                       char** summary) {
  if (sf_status s = require(config_json && out_dir, "null argument");
      s != SF_OK)
    return s;
  return run_command([&] { return run_synth(config_json, out_dir); }, summary);
}

sf_status sf_run_train(const char* config_json, const char* out_dir,
                       char** summary) {
  if (sf_status s = require(config_json && out_dir, "null argument");
      s != SF_OK)
    return s;
  return run_command([&] { return run_train(config_json, out_dir); }, summary);
}

sf_status sf_run_attack(const char* config_json, const char* out_dir,
                        char** summary) {
  if (sf_status s = require(config_json && out_dir, "null argument");
      s != SF_OK)
    return s;
  return run_command([&] { return run_attack(config_json, out_dir); }, summary);
}

sf_status sf_run_patch(const char* config_json, const char* out_dir,
                       char** summary) {
  if (sf_status s = require(config_json && out_dir, "null argument");
      s != SF_OK)
    return s;
  return run_command([&] { return run_patch(config_json, out_dir); }, summary);
}

sf_status sf_run_defend(const char* config_json, const char* out_dir,
                        char** summary) {
  if (sf_status s = require(config_json && out_dir, "null argument");
      s != SF_OK)
    return s;
  return run_command([&] { return run_defend(config_json, out_dir); }, summary);
}

sf_status sf_run_report(const char* const* report_paths, size_t n_paths,
                        const char* out_dir, char** summary) {
  if (sf_status s = require(report_paths != nullptr, "null argument");
      s != SF_OK)
    return s;
  return run_command(
      [&] {
        std::vector<std::string> paths(report_paths, report_paths + n_paths);
        return run_report(paths, out_dir ? out_dir : "");
      },
      summary);
}

} /* extern "C" */
