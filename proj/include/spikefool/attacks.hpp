#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "spikefool/network.hpp"
#include "spikefool/rng.hpp"
#include "spikefool/synth.hpp"
#include "spikefool/tensor.hpp"

namespace spikefool {

// Attack-facing view of a classifier. Every forward() call is one query;
// gradients reuse the forward that recorded them and are not extra queries.
// Implementations are not thread-safe; attacks on distinct samples each use
// their own target instance.
class AttackTarget {
 public:
  virtual ~AttackTarget() = default;
  virtual int num_classes() const = 0;
  virtual std::vector<double> forward(const Tensor& x, bool record) = 0;
  virtual Tensor input_gradient(const std::vector<double>& upstream) = 0;
};

class NetworkTarget : public AttackTarget {
 public:
  explicit NetworkTarget(Network& net) : net_(net) {}
  int num_classes() const override { return net_.n_classes(); }
  std::vector<double> forward(const Tensor& x, bool record) override {
    return net_.forward(x, record);
  }
  Tensor input_gradient(const std::vector<double>& upstream) override {
    return net_.backward(upstream, false);
  }

 private:
  Network& net_;
};

// Counts queries against an inner target. Attacks wrap their target in one of
// these; tests stack a second one outside to recount independently.
class CountingTarget : public AttackTarget {
 public:
  explicit CountingTarget(AttackTarget& inner) : inner_(inner) {}
  int num_classes() const override { return inner_.num_classes(); }
  std::vector<double> forward(const Tensor& x, bool record) override {
    ++queries_;
    return inner_.forward(x, record);
  }
  Tensor input_gradient(const std::vector<double>& upstream) override {
    return inner_.input_gradient(upstream);
  }
  int64_t queries() const { return queries_; }

 private:
  AttackTarget& inner_;
  int64_t queries_ = 0;
};

struct AttackResult {
  Tensor x_adv;
  bool success = false;
  int64_t queries = 0;
  int64_t l0 = 0;
  double elapsed_s = 0.0;
  int original_label = -1;
  int adversarial_label = -1;
  std::string diagnostic;  // set when the attack aborted (e.g. zero gradient)
};

struct SpikeFoolConfig {
  double eta = 0.2;        // minimum DeepFool step norm
  double lambda = 2.0;     // boundary overshoot applied to the DeepFool point
  double lower = 0.0;      // per-voxel box bounds (integers for discrete data)
  double upper = 1.0;
  int max_outer_iters = 20;
  int max_deepfool_iters = 50;
  double deepfool_overshoot = 1.02;

  void validate() const;
};

struct DeepFoolResult {
  Tensor x_boundary;
  Tensor normal;  // final boundary normal w_{k*}
  bool success = false;
  int iterations = 0;
};

// Multiclass DeepFool with a minimum per-iteration step norm eta (the
// eta-clamp). ref_label is the class to escape from; -1 means "whatever the
// first forward predicts". Throws DegenerateGradientError when every class
// gradient difference vanishes.
DeepFoolResult deepfool(AttackTarget& target, const Tensor& x, double eta,
                        int max_iters, double overshoot = 1.02,
                        int ref_label = -1);

// Sparse boundary projection: walks coordinates in decreasing |w_i|, moving
// each (clipped to its box) until <w, x - x_target> crosses zero. Returns the
// perturbed point; saturated=true when the box exhausted every coordinate.
struct LinearSolverResult {
  Tensor x;
  bool saturated = false;
};
LinearSolverResult linear_solver(const Tensor& x, const Tensor& x_target,
                                 const Tensor& w, double lower, double upper);

AttackResult spikefool(AttackTarget& target, const Tensor& x, int label,
                       const SpikeFoolConfig& cfg);

struct CdPgdConfig {
  int n_steps = 50;
  double step_size = 0.1;
  int max_flips = 2000;  // greedy finalization cap

  void validate() const;
};

AttackResult cd_pgd(AttackTarget& target, const Tensor& x, int label,
                    const CdPgdConfig& cfg);

struct ProbPgdConfig {
  double temperature = 0.01;
  int n_mc = 10;
  int n_steps = 50;
  double step_size = 0.1;
  int max_flips = 2000;
  double p_clip = 1e-4;  // keeps logit(p_adv) finite

  void validate() const;
};

AttackResult prob_pgd(AttackTarget& target, const Tensor& x, int label,
                      const ProbPgdConfig& cfg, uint64_t seed);

// Gumbel-sigmoid (binary concrete) relaxed Bernoulli sample.
double binary_concrete_sample(double p, double r, double temperature);

// One ascent direction for prob_pgd: cross-entropy gradients w.r.t. the
// Bernoulli probabilities, averaged over cfg.n_mc reparameterized samples.
Tensor prob_pgd_step_gradient(AttackTarget& target, const Tensor& p_adv,
                              int label, const ProbPgdConfig& cfg, Rng& rng);

struct Patch {
  Tensor data;  // [T,P,h,w], strictly binary
  int target_label = 0;
  // Placement region in sensor coordinates (patch origin moves within it).
  int region_y0 = 0, region_x0 = 0, region_h = 0, region_w = 0;
};

enum class PatchPlacement {
  sample_active_region,  // bounding box of each sample's events
  patch_region,          // a fixed region in sensor coordinates
};

struct PatchTrainConfig {
  int epochs = 1;
  int max_steps_per_sample = 50;
  double step_size = 0.1;
  double confidence_threshold = 0.75;  // stop once P(target) reaches this
  PatchPlacement placement = PatchPlacement::sample_active_region;
  // Fixed region, used when placement == patch_region (h/w of 0 means the
  // full frame). Stored on the trained patch either way.
  int region_y0 = 0, region_x0 = 0, region_h = 0, region_w = 0;

  void validate() const;
};

// Universal targeted patch trained with straight-through PGD on the target
// log-softmax, randomizing placement per sample. Samples labeled as the
// target are skipped.
Patch train_patch(AttackTarget& target, const Dataset& train_set,
                  int target_label, int patch_h, int patch_w,
                  const PatchTrainConfig& cfg, uint64_t seed);

Patch random_patch(int T, int n_polarities, int patch_h, int patch_w,
                   int target_label, uint64_t seed);

// Uniform patch position inside a region, clamped so the patch stays in the
// [H,W] frame even when the region is smaller than the patch.
void draw_patch_position(Rng& rng, int region_y0, int region_x0, int region_h,
                         int region_w, int patch_h, int patch_w, int frame_h,
                         int frame_w, int& pos_y, int& pos_x);

// Event union over the patch footprint: out = max(x, patch); no removals.
Tensor apply_patch(const Tensor& x, const Patch& patch, int pos_y, int pos_x);

// Bounding box of active pixels across all time bins and polarities,
// returned as (y0, x0, h, w). Falls back to the full frame when empty.
void active_region(const Tensor& raster, int& y0, int& x0, int& h, int& w);

// Patch file IO (magic "PAT0").
void save_patch(const Patch& patch, const std::string& path);
Patch load_patch(const std::string& path);

}  // namespace spikefool
