#pragma once

#include <memory>
#include <vector>

#include "spikefool/common.hpp"
#include "spikefool/tensor.hpp"

namespace spikefool {

enum class LayerKind : int {
  conv2d = 0,
  linear = 1,
  sum_pool2d = 2,
  batchnorm = 3,
  spiking_iaf = 4,
  relu = 5,
  flatten = 6,
};

const char* layer_kind_name(LayerKind kind);

// Serializable layer description. Weight payloads live in the Layer objects;
// this struct carries everything needed to rebuild the topology.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int in_channels = 0;   // conv2d / linear (in_features)
  int out_channels = 0;  // conv2d / linear (out_features)
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  bool bias = false;
  int pool = 2;              // sum_pool2d
  double theta = 1.0;        // spiking_iaf
  bool clamp_v_zero = false; // spiking_iaf: optional lower clamp at 0
  double bn_eps = 1e-5;      // batchnorm

  static LayerSpec conv2d(int in_c, int out_c, int k, int stride = 1,
                          int pad = 0, bool bias = false);
  static LayerSpec linear(int in_f, int out_f, bool bias = false);
  static LayerSpec sum_pool2d(int pool);
  static LayerSpec batchnorm(int channels, double eps = 1e-5);
  static LayerSpec spiking_iaf(double theta = 1.0, bool clamp_v_zero = false);
  static LayerSpec relu_spec();
  static LayerSpec flatten_spec();
};

// One network layer. step()/backward_step() process a single timestep; the
// layer keeps its own per-timestep tape so that BPTT can walk backwards, and
// backward cursors are reset by begin_backward() so one recorded forward can
// be differentiated several times (DeepFool needs per-class gradients).
class Layer {
 public:
  virtual ~Layer() = default;
  virtual LayerKind kind() const = 0;
  virtual const LayerSpec& spec() const = 0;
  virtual std::vector<int> out_shape(const std::vector<int>& in) const = 0;

  virtual Tensor step(const Tensor& x, bool record) = 0;
  virtual Tensor backward_step(const Tensor& gy) = 0;
  virtual void begin_forward() {}   // clears state and tape
  virtual void begin_backward() {}  // resets cursor and gradient carries

  virtual std::vector<Tensor*> params() { return {}; }
  virtual std::vector<Tensor*> grads() { return {}; }
  virtual void zero_grad();
  void set_accumulate_param_grads(bool on) { accumulate_param_grads_ = on; }

  virtual std::unique_ptr<Layer> clone() const = 0;

 protected:
  bool accumulate_param_grads_ = true;
};

class ConvLayer : public Layer {
 public:
  ConvLayer(const LayerSpec& spec, const std::vector<int>& in_shape);
  LayerKind kind() const override { return LayerKind::conv2d; }
  const LayerSpec& spec() const override { return spec_; }
  std::vector<int> out_shape(const std::vector<int>& in) const override;
  Tensor step(const Tensor& x, bool record) override;
  Tensor backward_step(const Tensor& gy) override;
  void begin_forward() override { tape_.clear(); }
  void begin_backward() override { cursor_ = tape_.size(); }
  std::vector<Tensor*> params() override;
  std::vector<Tensor*> grads() override;
  std::unique_ptr<Layer> clone() const override;

  Tensor weight;  // [out_c, in_c, k, k]
  Tensor bias;    // [out_c] or empty
  Tensor grad_weight;
  Tensor grad_bias;

 private:
  LayerSpec spec_;
  std::vector<int> in_shape_;
  std::vector<Tensor> tape_;  // recorded inputs per timestep
  size_t cursor_ = 0;
};

class LinearLayer : public Layer {
 public:
  LinearLayer(const LayerSpec& spec, const std::vector<int>& in_shape);
  LayerKind kind() const override { return LayerKind::linear; }
  const LayerSpec& spec() const override { return spec_; }
  std::vector<int> out_shape(const std::vector<int>& in) const override;
  Tensor step(const Tensor& x, bool record) override;
  Tensor backward_step(const Tensor& gy) override;
  void begin_forward() override { tape_.clear(); }
  void begin_backward() override { cursor_ = tape_.size(); }
  std::vector<Tensor*> params() override;
  std::vector<Tensor*> grads() override;
  std::unique_ptr<Layer> clone() const override;

  Tensor weight;  // [out_f, in_f]
  Tensor bias;    // [out_f] or empty
  Tensor grad_weight;
  Tensor grad_bias;

 private:
  LayerSpec spec_;
  std::vector<Tensor> tape_;
  size_t cursor_ = 0;
};

// Sum pooling over non-overlapping pool x pool blocks. Spiking networks use
// divisor 1 (spike counts are additive); analog networks use divisor pool^2,
// i.e. average pooling. The divisor is fixed when the network is built.
class SumPoolLayer : public Layer {
 public:
  SumPoolLayer(const LayerSpec& spec, double divisor);
  LayerKind kind() const override { return LayerKind::sum_pool2d; }
  const LayerSpec& spec() const override { return spec_; }
  std::vector<int> out_shape(const std::vector<int>& in) const override;
  Tensor step(const Tensor& x, bool record) override;
  Tensor backward_step(const Tensor& gy) override;
  std::unique_ptr<Layer> clone() const override;
  double divisor() const { return divisor_; }

 private:
  LayerSpec spec_;
  double divisor_;
  std::vector<int> in_shape_;
};

class BatchNormLayer : public Layer {
 public:
  BatchNormLayer(const LayerSpec& spec, const std::vector<int>& in_shape);
  LayerKind kind() const override { return LayerKind::batchnorm; }
  const LayerSpec& spec() const override { return spec_; }
  std::vector<int> out_shape(const std::vector<int>& in) const override;
  Tensor step(const Tensor& x, bool record) override;
  Tensor backward_step(const Tensor& gy) override;
  void begin_forward() override;
  void begin_backward() override { cursor_ = tape_xhat_.size(); }
  std::vector<Tensor*> params() override;
  std::vector<Tensor*> grads() override;
  std::unique_ptr<Layer> clone() const override;

  void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }

  Tensor gamma, beta;                  // [C]
  Tensor grad_gamma, grad_beta;        // [C]
  Tensor running_mean, running_var;    // [C]

 private:
  LayerSpec spec_;
  bool training_ = false;
  double momentum_ = 0.1;
  std::vector<Tensor> tape_xhat_;
  std::vector<Tensor> tape_inv_std_;  // per-channel [C], per timestep
  size_t cursor_ = 0;
};

// Non-leaky integrate-and-fire unit: v' = v + input; at most one spike per
// timestep where v' >= theta; reset by subtraction. In relaxed mode (gradient
// checking) the hard threshold is replaced by the smooth primitive of the
// triangular surrogate, so the recorded backward pass becomes the exact
// gradient of the relaxed forward.
class IafLayer : public Layer {
 public:
  explicit IafLayer(const LayerSpec& spec);
  LayerKind kind() const override { return LayerKind::spiking_iaf; }
  const LayerSpec& spec() const override { return spec_; }
  std::vector<int> out_shape(const std::vector<int>& in) const override {
    return in;
  }
  Tensor step(const Tensor& x, bool record) override;
  Tensor backward_step(const Tensor& gy) override;
  void begin_forward() override;
  void begin_backward() override;
  std::unique_ptr<Layer> clone() const override;

  void set_relaxed(bool on) { relaxed_ = on; }
  double theta() const { return spec_.theta; }
  const Tensor& membrane() const { return v_; }
  // Recorded pre-reset membrane values (one tensor per timestep).
  const std::vector<Tensor>& vpre_tape() const { return tape_vpre_; }

  // Triangular surrogate derivative g(v) = max(0, 1 - |v - theta| / theta),
  // evaluated at the pre-reset membrane value.
  static double surrogate(double v_pre, double theta);
  // Its primitive: 0 below 0, ramping to theta at 2*theta and saturating.
  static double surrogate_primitive(double v_pre, double theta);

 private:
  LayerSpec spec_;
  bool relaxed_ = false;
  Tensor v_;
  std::vector<Tensor> tape_vpre_;
  size_t cursor_ = 0;
  Tensor grad_v_carry_;
};

class ReluLayer : public Layer {
 public:
  explicit ReluLayer(const LayerSpec& spec) : spec_(spec) {}
  LayerKind kind() const override { return LayerKind::relu; }
  const LayerSpec& spec() const override { return spec_; }
  std::vector<int> out_shape(const std::vector<int>& in) const override {
    return in;
  }
  Tensor step(const Tensor& x, bool record) override;
  Tensor backward_step(const Tensor& gy) override;
  void begin_forward() override { tape_.clear(); }
  void begin_backward() override { cursor_ = tape_.size(); }
  std::unique_ptr<Layer> clone() const override;
  const std::vector<Tensor>& input_tape() const { return tape_; }

 private:
  LayerSpec spec_;
  std::vector<Tensor> tape_;
  size_t cursor_ = 0;
};

class FlattenLayer : public Layer {
 public:
  explicit FlattenLayer(const LayerSpec& spec) : spec_(spec) {}
  LayerKind kind() const override { return LayerKind::flatten; }
  const LayerSpec& spec() const override { return spec_; }
  std::vector<int> out_shape(const std::vector<int>& in) const override;
  Tensor step(const Tensor& x, bool record) override;
  Tensor backward_step(const Tensor& gy) override;
  std::unique_ptr<Layer> clone() const override;

 private:
  LayerSpec spec_;
  std::vector<int> in_shape_;
};

}  // namespace spikefool
