#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spikefool/network.hpp"
#include "spikefool/synth.hpp"
#include "spikefool/tensor.hpp"

namespace spikefool {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  AdamConfig adam;
  int batch_size = 64;
  int epochs = 10;
  uint64_t seed = 0;

  void validate() const;
};

// TRADES: loss = CE(f(x0), y) + (beta_rob / B) * sum_batch KL(f(x_adv) || f(x0)),
// with x_adv produced by L-inf PGD (straight-through rounding).
struct TradesConfig {
  double beta_rob = 0.0;
  double eps = 0.5;
  int n_pgd = 5;
  double step_size = 0.0;  // 0 selects the 2.5 * eps / n_pgd default

  double effective_step() const {
    return step_size > 0.0 ? step_size : 2.5 * eps / n_pgd;
  }
  void validate() const;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
  void step(const std::vector<Tensor*>& params,
            const std::vector<Tensor*>& grads);

 private:
  AdamConfig cfg_;
  int t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct TrainReport {
  uint64_t seed = 0;
  int epochs = 0;
  int batch_size = 0;
  double lr = 0.0;
  double beta_rob = 0.0;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_train_acc;
  std::vector<double> epoch_test_acc;  // empty when no test split given
  double final_train_acc = 0.0;
  double final_test_acc = 0.0;
};

std::string train_report_to_json(const TrainReport& report);

// Sum over the time dimension: [T,P,H,W] -> [P,H,W].
Tensor accumulate_frames(const Tensor& raster);
// Applies accumulate_frames to every sample, yielding a T=1 dataset.
Dataset accumulate_dataset(const Dataset& ds);

double accuracy(Network& net, const Dataset& ds);

// L-inf PGD with straight-through rounding: the forward runs on
// round(x_cont) while the ascent updates x_cont, which is projected onto
// {|x_cont - x|_inf <= eps} intersected with [0,1] after every step.
struct PgdResult {
  Tensor x_cont;
  Tensor x_round;
};
PgdResult pgd_linf(Network& net, const Tensor& x, int label, double eps,
                   int n_steps, double step_size);

// Accumulates parameter gradients of the TRADES loss over one batch into the
// network's grad buffers (zeroing them first) and returns the loss value.
// beta_rob = 0 reduces bit-exactly to plain cross-entropy.
double trades_step(Network& net, const Dataset& ds,
                   const std::vector<size_t>& batch,
                   const TradesConfig& trades);

// Surrogate-gradient BPTT training; deterministic for a fixed seed. The
// TRADES overload runs adversarial training, and collapses to the plain
// trainer when trades.beta_rob == 0.
TrainReport train_bptt(Network& net, const Dataset& train, const Dataset* test,
                       const TrainConfig& cfg);
TrainReport train_bptt(Network& net, const Dataset& train, const Dataset* test,
                       const TrainConfig& cfg, const TradesConfig& trades);

// ANN -> SNN weight transfer. The analog net (bias-free, batchnorm already
// folded) is calibrated on accumulated frames; layer weights are rescaled by
// s_{l-1}/s_l where s_l is the 99th percentile (nearest-rank) of the layer's
// pre-activation pool, computed with sum-pool semantics so that percentile
// activity maps exactly to the spiking threshold.
Network transfer_weights(const Network& analog_net, const Dataset& calibration);

// Per-layer symmetric quantization of conv/linear weights to the given bit
// width (default 8): scale = max|w| / qmax, codes = round(w / scale).
// The returned network carries dequantized weights plus the code tensors.
Network quantize_weights(const Network& net, int bits = 8);

// Nearest-rank percentile (p in (0,100]) of a sample set; sorts a copy.
double percentile_nearest_rank(std::vector<double> values, double p);

}  // namespace spikefool
