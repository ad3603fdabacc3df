#include "spikefool/layers.hpp"

#include <cmath>

namespace spikefool {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::linear: return "linear";
    case LayerKind::sum_pool2d: return "sum_pool2d";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::spiking_iaf: return "spiking_iaf";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

LayerSpec LayerSpec::conv2d(int in_c, int out_c, int k, int stride, int pad,
                            bool bias) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.in_channels = in_c;
  s.out_channels = out_c;
  s.kernel = k;
  s.stride = stride;
  s.pad = pad;
  s.bias = bias;
  return s;
}

LayerSpec LayerSpec::linear(int in_f, int out_f, bool bias) {
  LayerSpec s;
  s.kind = LayerKind::linear;
  s.in_channels = in_f;
  s.out_channels = out_f;
  s.bias = bias;
  return s;
}

LayerSpec LayerSpec::sum_pool2d(int pool) {
  LayerSpec s;
  s.kind = LayerKind::sum_pool2d;
  s.pool = pool;
  return s;
}

LayerSpec LayerSpec::batchnorm(int channels, double eps) {
  LayerSpec s;
  s.kind = LayerKind::batchnorm;
  s.in_channels = channels;
  s.out_channels = channels;
  s.bn_eps = eps;
  return s;
}

LayerSpec LayerSpec::spiking_iaf(double theta, bool clamp_v_zero) {
  LayerSpec s;
  s.kind = LayerKind::spiking_iaf;
  s.theta = theta;
  s.clamp_v_zero = clamp_v_zero;
  return s;
}

LayerSpec LayerSpec::relu_spec() {
  LayerSpec s;
  s.kind = LayerKind::relu;
  return s;
}

LayerSpec LayerSpec::flatten_spec() {
  LayerSpec s;
  s.kind = LayerKind::flatten;
  return s;
}

void Layer::zero_grad() {
  for (Tensor* g : grads()) g->fill(0.0);
}

// ---------------------------------------------------------------------------
// ConvLayer

ConvLayer::ConvLayer(const LayerSpec& spec, const std::vector<int>& in_shape)
    : spec_(spec), in_shape_(in_shape) {
  if (in_shape.size() != 3)
    throw ValidationError("conv2d expects a [C,H,W] input");
  if (in_shape[0] != spec.in_channels)
    throw ValidationError("conv2d in_channels mismatch");
  if (spec.kernel < 1 || spec.stride < 1 || spec.pad < 0)
    throw ValidationError("conv2d: bad kernel/stride/pad");
  auto out = out_shape(in_shape);
  if (out[1] < 1 || out[2] < 1)
    throw ValidationError("conv2d output collapses to zero size");
  weight = Tensor({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel});
  grad_weight = zeros_like(weight);
  if (spec.bias) {
    bias = Tensor({spec.out_channels});
    grad_bias = zeros_like(bias);
  }
}

std::vector<int> ConvLayer::out_shape(const std::vector<int>& in) const {
  int oh = (in[1] + 2 * spec_.pad - spec_.kernel) / spec_.stride + 1;
  int ow = (in[2] + 2 * spec_.pad - spec_.kernel) / spec_.stride + 1;
  return {spec_.out_channels, oh, ow};
}

Tensor ConvLayer::step(const Tensor& x, bool record) {
  const int in_c = spec_.in_channels, k = spec_.kernel, s = spec_.stride,
            p = spec_.pad;
  const int ih = x.dim(1), iw = x.dim(2);
  auto os = out_shape({in_c, ih, iw});
  Tensor out(os);
  for (int oc = 0; oc < os[0]; ++oc) {
    const double b = bias.empty() ? 0.0 : bias[oc];
    for (int oy = 0; oy < os[1]; ++oy) {
      for (int ox = 0; ox < os[2]; ++ox) {
        double acc = b;
        for (int ic = 0; ic < in_c; ++ic) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * s - p + ky;
            if (iy < 0 || iy >= ih) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * s - p + kx;
              if (ix < 0 || ix >= iw) continue;
              acc += weight.at4(oc, ic, ky, kx) * x.at3(ic, iy, ix);
            }
          }
        }
        out.at3(oc, oy, ox) = acc;
      }
    }
  }
  if (record) tape_.push_back(x);
  return out;
}

Tensor ConvLayer::backward_step(const Tensor& gy) {
  if (cursor_ == 0) throw ValidationError("conv2d backward past tape start");
  const Tensor& x = tape_[--cursor_];
  const int in_c = spec_.in_channels, k = spec_.kernel, s = spec_.stride,
            p = spec_.pad;
  const int ih = x.dim(1), iw = x.dim(2);
  Tensor gx(x.shape());
  for (int oc = 0; oc < gy.dim(0); ++oc) {
    for (int oy = 0; oy < gy.dim(1); ++oy) {
      for (int ox = 0; ox < gy.dim(2); ++ox) {
        const double g = gy.at3(oc, oy, ox);
        if (g == 0.0) continue;
        if (accumulate_param_grads_ && !bias.empty()) grad_bias[oc] += g;
        for (int ic = 0; ic < in_c; ++ic) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * s - p + ky;
            if (iy < 0 || iy >= ih) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * s - p + kx;
              if (ix < 0 || ix >= iw) continue;
              gx.at3(ic, iy, ix) += weight.at4(oc, ic, ky, kx) * g;
              if (accumulate_param_grads_)
                grad_weight.at4(oc, ic, ky, kx) += g * x.at3(ic, iy, ix);
            }
          }
        }
      }
    }
  }
  return gx;
}

std::vector<Tensor*> ConvLayer::params() {
  std::vector<Tensor*> p{&weight};
  if (!bias.empty()) p.push_back(&bias);
  return p;
}

std::vector<Tensor*> ConvLayer::grads() {
  std::vector<Tensor*> g{&grad_weight};
  if (!bias.empty()) g.push_back(&grad_bias);
  return g;
}

std::unique_ptr<Layer> ConvLayer::clone() const {
  return std::make_unique<ConvLayer>(*this);
}

// ---------------------------------------------------------------------------
// LinearLayer

LinearLayer::LinearLayer(const LayerSpec& spec,
                         const std::vector<int>& in_shape)
    : spec_(spec) {
  if (in_shape.size() != 1)
    throw ValidationError("linear expects a flattened [N] input");
  if (in_shape[0] != spec.in_channels)
    throw ValidationError("linear in_features mismatch: expected " +
                          std::to_string(spec.in_channels) + ", got " +
                          std::to_string(in_shape[0]));
  weight = Tensor({spec.out_channels, spec.in_channels});
  grad_weight = zeros_like(weight);
  if (spec.bias) {
    bias = Tensor({spec.out_channels});
    grad_bias = zeros_like(bias);
  }
}

std::vector<int> LinearLayer::out_shape(const std::vector<int>&) const {
  return {spec_.out_channels};
}

Tensor LinearLayer::step(const Tensor& x, bool record) {
  const int out_f = spec_.out_channels, in_f = spec_.in_channels;
  Tensor out({out_f});
  for (int o = 0; o < out_f; ++o) {
    double acc = bias.empty() ? 0.0 : bias[o];
    const double* w = weight.data() + int64_t(o) * in_f;
    for (int i = 0; i < in_f; ++i) acc += w[i] * x[i];
    out[o] = acc;
  }
  if (record) tape_.push_back(x);
  return out;
}

Tensor LinearLayer::backward_step(const Tensor& gy) {
  if (cursor_ == 0) throw ValidationError("linear backward past tape start");
  const Tensor& x = tape_[--cursor_];
  const int out_f = spec_.out_channels, in_f = spec_.in_channels;
  Tensor gx({in_f});
  for (int o = 0; o < out_f; ++o) {
    const double g = gy[o];
    if (g == 0.0) continue;
    const double* w = weight.data() + int64_t(o) * in_f;
    double* gw = grad_weight.data() + int64_t(o) * in_f;
    for (int i = 0; i < in_f; ++i) {
      gx[i] += w[i] * g;
      if (accumulate_param_grads_) gw[i] += g * x[i];
    }
    if (accumulate_param_grads_ && !bias.empty()) grad_bias[o] += g;
  }
  return gx;
}

std::vector<Tensor*> LinearLayer::params() {
  std::vector<Tensor*> p{&weight};
  if (!bias.empty()) p.push_back(&bias);
  return p;
}

std::vector<Tensor*> LinearLayer::grads() {
  std::vector<Tensor*> g{&grad_weight};
  if (!bias.empty()) g.push_back(&grad_bias);
  return g;
}

std::unique_ptr<Layer> LinearLayer::clone() const {
  return std::make_unique<LinearLayer>(*this);
}

// ---------------------------------------------------------------------------
// SumPoolLayer

SumPoolLayer::SumPoolLayer(const LayerSpec& spec, double divisor)
    : spec_(spec), divisor_(divisor) {
  if (spec.pool < 1) throw ValidationError("sum_pool2d: pool must be >= 1");
}

std::vector<int> SumPoolLayer::out_shape(const std::vector<int>& in) const {
  if (in.size() != 3) throw ValidationError("sum_pool2d expects [C,H,W]");
  return {in[0], in[1] / spec_.pool, in[2] / spec_.pool};
}

Tensor SumPoolLayer::step(const Tensor& x, bool record) {
  (void)record;
  in_shape_ = x.shape();
  const int k = spec_.pool;
  auto os = out_shape(x.shape());
  Tensor out(os);
  for (int c = 0; c < os[0]; ++c)
    for (int oy = 0; oy < os[1]; ++oy)
      for (int ox = 0; ox < os[2]; ++ox) {
        double acc = 0.0;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx)
            acc += x.at3(c, oy * k + ky, ox * k + kx);
        out.at3(c, oy, ox) = acc / divisor_;
      }
  return out;
}

Tensor SumPoolLayer::backward_step(const Tensor& gy) {
  const int k = spec_.pool;
  Tensor gx(in_shape_);
  for (int c = 0; c < gy.dim(0); ++c)
    for (int oy = 0; oy < gy.dim(1); ++oy)
      for (int ox = 0; ox < gy.dim(2); ++ox) {
        const double g = gy.at3(c, oy, ox) / divisor_;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx)
            gx.at3(c, oy * k + ky, ox * k + kx) += g;
      }
  return gx;
}

std::unique_ptr<Layer> SumPoolLayer::clone() const {
  return std::make_unique<SumPoolLayer>(*this);
}

// ---------------------------------------------------------------------------
// BatchNormLayer

BatchNormLayer::BatchNormLayer(const LayerSpec& spec,
                               const std::vector<int>& in_shape)
    : spec_(spec) {
  if (in_shape.size() != 3)
    throw ValidationError("batchnorm expects a [C,H,W] input");
  if (in_shape[0] != spec.in_channels)
    throw ValidationError("batchnorm channel mismatch");
  gamma = Tensor({spec.in_channels});
  beta = Tensor({spec.in_channels});
  gamma.fill(1.0);
  grad_gamma = zeros_like(gamma);
  grad_beta = zeros_like(beta);
  running_mean = Tensor({spec.in_channels});
  running_var = Tensor({spec.in_channels});
  running_var.fill(1.0);
}

std::vector<int> BatchNormLayer::out_shape(const std::vector<int>& in) const {
  return in;
}

void BatchNormLayer::begin_forward() {
  tape_xhat_.clear();
  tape_inv_std_.clear();
}

// Normalization always uses the running statistics, which training forwards
// update from per-step spatial moments afterwards. This keeps the function
// the attacks see identical to the one trained (no batch-stat mismatch with
// single-sample batches), makes the stats fixed constants for gradients, and
// keeps the layer foldable into the preceding convolution.
Tensor BatchNormLayer::step(const Tensor& x, bool record) {
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int m = H * W;
  Tensor out(x.shape());
  Tensor xhat(x.shape());
  Tensor inv_std({C});
  for (int c = 0; c < C; ++c) {
    const double mean = running_mean[c];
    const double istd = 1.0 / std::sqrt(running_var[c] + spec_.bn_eps);
    inv_std[c] = istd;
    for (int y = 0; y < H; ++y)
      for (int xw = 0; xw < W; ++xw) {
        double xn = (x.at3(c, y, xw) - mean) * istd;
        xhat.at3(c, y, xw) = xn;
        out.at3(c, y, xw) = gamma[c] * xn + beta[c];
      }
    if (training_) {
      double s = 0.0;
      for (int y = 0; y < H; ++y)
        for (int xw = 0; xw < W; ++xw) s += x.at3(c, y, xw);
      const double batch_mean = s / m;
      double v = 0.0;
      for (int y = 0; y < H; ++y)
        for (int xw = 0; xw < W; ++xw) {
          double d = x.at3(c, y, xw) - batch_mean;
          v += d * d;
        }
      running_mean[c] =
          (1.0 - momentum_) * running_mean[c] + momentum_ * batch_mean;
      running_var[c] = (1.0 - momentum_) * running_var[c] + momentum_ * (v / m);
    }
  }
  if (record) {
    tape_xhat_.push_back(std::move(xhat));
    tape_inv_std_.push_back(std::move(inv_std));
  }
  return out;
}

Tensor BatchNormLayer::backward_step(const Tensor& gy) {
  if (cursor_ == 0) throw ValidationError("batchnorm backward past tape start");
  --cursor_;
  const Tensor& xhat = tape_xhat_[cursor_];
  const Tensor& inv_std = tape_inv_std_[cursor_];
  const int C = gy.dim(0), H = gy.dim(1), W = gy.dim(2);
  Tensor gx(gy.shape());
  for (int c = 0; c < C; ++c) {
    double sum_gy = 0.0, sum_gy_xhat = 0.0;
    for (int y = 0; y < H; ++y)
      for (int xw = 0; xw < W; ++xw) {
        sum_gy += gy.at3(c, y, xw);
        sum_gy_xhat += gy.at3(c, y, xw) * xhat.at3(c, y, xw);
      }
    if (accumulate_param_grads_) {
      grad_gamma[c] += sum_gy_xhat;
      grad_beta[c] += sum_gy;
    }
    const double scale = gamma[c] * inv_std[c];
    for (int y = 0; y < H; ++y)
      for (int xw = 0; xw < W; ++xw)
        gx.at3(c, y, xw) = scale * gy.at3(c, y, xw);
  }
  return gx;
}

std::vector<Tensor*> BatchNormLayer::params() { return {&gamma, &beta}; }
std::vector<Tensor*> BatchNormLayer::grads() {
  return {&grad_gamma, &grad_beta};
}

std::unique_ptr<Layer> BatchNormLayer::clone() const {
  return std::make_unique<BatchNormLayer>(*this);
}

// ---------------------------------------------------------------------------
// IafLayer

IafLayer::IafLayer(const LayerSpec& spec) : spec_(spec) {
  if (spec.theta <= 0.0)
    throw ValidationError("spiking_iaf: theta must be positive");
}

double IafLayer::surrogate(double v_pre, double theta) {
  return std::max(0.0, 1.0 - std::abs(v_pre - theta) / theta);
}

double IafLayer::surrogate_primitive(double v_pre, double theta) {
  if (v_pre <= 0.0) return 0.0;
  if (v_pre <= theta) return v_pre * v_pre / (2.0 * theta);
  if (v_pre <= 2.0 * theta) {
    const double d = v_pre - theta;
    return theta / 2.0 + d - d * d / (2.0 * theta);
  }
  return theta;
}

void IafLayer::begin_forward() {
  v_ = Tensor();
  tape_vpre_.clear();
}

void IafLayer::begin_backward() {
  cursor_ = tape_vpre_.size();
  grad_v_carry_ = Tensor();
}

Tensor IafLayer::step(const Tensor& x, bool record) {
  if (!x.all_finite())
    throw NumericError("spiking_iaf: non-finite input current");
  if (v_.empty()) v_ = Tensor(x.shape());
  if (!v_.same_shape(x))
    throw ValidationError("spiking_iaf: input shape changed mid-run");
  const double theta = spec_.theta;
  Tensor spikes(x.shape());
  Tensor vpre(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) {
    const double vp = v_[i] + x[i];
    vpre[i] = vp;
    double s;
    if (relaxed_)
      s = surrogate_primitive(vp, theta) / theta;  // in [0,1]
    else
      s = vp >= theta ? 1.0 : 0.0;
    spikes[i] = s;
    double vnew = vp - theta * s;
    if (spec_.clamp_v_zero && vnew < 0.0) vnew = 0.0;
    v_[i] = vnew;
  }
  if (record) tape_vpre_.push_back(std::move(vpre));
  return spikes;
}

Tensor IafLayer::backward_step(const Tensor& gy) {
  if (cursor_ == 0) throw ValidationError("spiking_iaf backward past tape start");
  --cursor_;
  const Tensor& vpre = tape_vpre_[cursor_];
  const double theta = spec_.theta;
  if (grad_v_carry_.empty()) grad_v_carry_ = Tensor(vpre.shape());
  Tensor gin(vpre.shape());
  for (int64_t i = 0; i < vpre.size(); ++i) {
    // spikes s = f(v_pre), v_next = v_pre - theta * s (clamped at 0 when
    // enabled). The carry holds dL/dv_next from the future; the surrogate
    // stands in for ds/dv_pre. Relaxed forward emits s = S(v_pre)/theta,
    // whose true derivative is the surrogate scaled by 1/theta, so the same
    // code path is exact there.
    const double g = relaxed_ ? surrogate(vpre[i], theta) / theta
                              : surrogate(vpre[i], theta);
    double reset_path = 1.0 - theta * g;
    if (spec_.clamp_v_zero) {
      const double s = relaxed_ ? surrogate_primitive(vpre[i], theta) / theta
                                : (vpre[i] >= theta ? 1.0 : 0.0);
      if (vpre[i] - theta * s <= 0.0) reset_path = 0.0;
    }
    const double d_vpre = gy[i] * g + grad_v_carry_[i] * reset_path;
    gin[i] = d_vpre;
    grad_v_carry_[i] = d_vpre;
  }
  return gin;
}

std::unique_ptr<Layer> IafLayer::clone() const {
  return std::make_unique<IafLayer>(*this);
}

// ---------------------------------------------------------------------------
// ReluLayer

Tensor ReluLayer::step(const Tensor& x, bool record) {
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  if (record) tape_.push_back(x);
  return out;
}

Tensor ReluLayer::backward_step(const Tensor& gy) {
  if (cursor_ == 0) throw ValidationError("relu backward past tape start");
  const Tensor& x = tape_[--cursor_];
  Tensor gx(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) gx[i] = x[i] > 0.0 ? gy[i] : 0.0;
  return gx;
}

std::unique_ptr<Layer> ReluLayer::clone() const {
  return std::make_unique<ReluLayer>(*this);
}

// ---------------------------------------------------------------------------
// FlattenLayer

std::vector<int> FlattenLayer::out_shape(const std::vector<int>& in) const {
  int n = 1;
  for (int d : in) n *= d;
  return {n};
}

Tensor FlattenLayer::step(const Tensor& x, bool record) {
  (void)record;
  in_shape_ = x.shape();
  Tensor out({int(x.size())});
  for (int64_t i = 0; i < x.size(); ++i) out[i] = x[i];
  return out;
}

Tensor FlattenLayer::backward_step(const Tensor& gy) {
  Tensor gx(in_shape_);
  for (int64_t i = 0; i < gy.size(); ++i) gx[i] = gy[i];
  return gx;
}

std::unique_ptr<Layer> FlattenLayer::clone() const {
  return std::make_unique<FlattenLayer>(*this);
}

}  // namespace spikefool
