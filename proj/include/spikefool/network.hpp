#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spikefool/layers.hpp"
#include "spikefool/tensor.hpp"

namespace spikefool {

enum class NetMode : int { analog = 0, spiking = 1 };

struct NetworkSpec {
  NetMode mode = NetMode::spiking;
  int in_polarities = 2;
  int in_height = 0;
  int in_width = 0;
  int n_classes = 0;
  std::vector<LayerSpec> layers;
};

// Per-layer 8-bit weight codes plus scale, kept alongside the dequantized
// double weights so quantization round-trips exactly through model files.
struct QuantizedTensor {
  double scale = 1.0;
  std::vector<int8_t> codes;
};

// Discrete-time spiking (or analog) convolutional network. Not thread-safe:
// forward/backward mutate per-call state (membranes, tapes), so concurrent
// callers each take their own clone. Weights are only mutated by training.
class Network {
 public:
  Network(NetworkSpec spec, uint64_t init_seed);

  const NetworkSpec& spec() const { return spec_; }
  NetMode mode() const { return spec_.mode; }
  int n_classes() const { return spec_.n_classes; }

  // Runs the raster [T,P,H,W] through the network, zero-initialized state.
  // Returns per-class spike counts (spiking) or logits (analog, T must be 1).
  // With record=true the tape for backward() is kept.
  std::vector<double> forward(const Tensor& raster, bool record = false);

  // Reverse-mode gradient of sum_k upstream[k] * counts[k] with respect to
  // every input voxel. Requires a preceding forward(..., record=true); may be
  // called repeatedly on the same tape with different upstream vectors.
  Tensor backward(const std::vector<double>& upstream,
                  bool accumulate_param_grads = false);

  int predict(const Tensor& raster);

  void zero_grad();
  std::vector<Tensor*> parameters();
  std::vector<Tensor*> gradients();

  void set_training(bool on);
  // Replaces the hard threshold by the smooth primitive of the surrogate;
  // backward() then computes the exact gradient of this relaxed forward.
  void set_relaxed_spikes(bool on);

  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }
  Layer& layer(size_t i) { return *layers_[i]; }
  size_t n_layers() const { return layers_.size(); }

  // Per weighted layer (conv/linear), in network order.
  std::vector<QuantizedTensor>& quantized() { return quantized_; }
  const std::vector<QuantizedTensor>& quantized() const { return quantized_; }

  Network clone() const;

 private:
  Network() = default;
  void build(uint64_t init_seed, bool init_weights);
  friend Network load_model(const std::string&);
  friend Network fold_batchnorm(const Network&);

  NetworkSpec spec_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<QuantizedTensor> quantized_;  // empty when unquantized
  int recorded_T_ = 0;
  std::vector<int> input_shape_;
};

// Numerically stabilized log-softmax / cross-entropy over class counts.
std::vector<double> log_softmax(const std::vector<double>& z);
std::vector<double> softmax(const std::vector<double>& z);
double cross_entropy(const std::vector<double>& z, int target);
// Upstream gradient of cross_entropy w.r.t. z: softmax(z) - onehot(target).
std::vector<double> cross_entropy_grad(const std::vector<double>& z,
                                       int target);
// KL(softmax(p_logits) || softmax(q_logits)).
double kl_divergence(const std::vector<double>& p_logits,
                     const std::vector<double>& q_logits);

// Lowest index achieving the maximum.
int argmax_label(const std::vector<double>& counts);

// Model file IO: magic "SNN0", topology header, f32 weights, and an optional
// i8+scale section for quantized weights.
void save_model(const Network& net, const std::string& path);
Network load_model(const std::string& path);

// Returns an equivalent network with batchnorm layers folded into the
// preceding conv's weights (running statistics; adds a conv bias).
Network fold_batchnorm(const Network& net);

}  // namespace spikefool
