#include "spikefool/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "spikefool/rng.hpp"

namespace spikefool {

namespace {

// gain > 1 for spiking networks: with unit thresholds and sparse binary
// inputs, fan-in-scaled weights alone rarely drive membranes across theta,
// which stalls surrogate-gradient training at the start.
void init_uniform(Tensor& w, int fan_in, double gain, Rng& rng) {
  const double bound = gain / std::sqrt(double(std::max(fan_in, 1)));
  for (int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
}

}  // namespace

Network::Network(NetworkSpec spec, uint64_t init_seed)
    : spec_(std::move(spec)) {
  build(init_seed, true);
}

void Network::build(uint64_t init_seed, bool init_weights) {
  if (spec_.n_classes < 2)
    throw ValidationError("network needs at least 2 classes");
  if (spec_.in_polarities < 1 || spec_.in_height < 1 || spec_.in_width < 1)
    throw ValidationError("network input shape must be positive");

  layers_.clear();
  input_shape_ = {spec_.in_polarities, spec_.in_height, spec_.in_width};
  std::vector<int> shape = input_shape_;
  int n_iaf = 0;
  for (size_t li = 0; li < spec_.layers.size(); ++li) {
    const LayerSpec& ls = spec_.layers[li];
    std::unique_ptr<Layer> layer;
    switch (ls.kind) {
      case LayerKind::conv2d:
        layer = std::make_unique<ConvLayer>(ls, shape);
        break;
      case LayerKind::linear:
        layer = std::make_unique<LinearLayer>(ls, shape);
        break;
      case LayerKind::sum_pool2d:
        layer = std::make_unique<SumPoolLayer>(
            ls, spec_.mode == NetMode::analog ? double(ls.pool) * ls.pool
                                              : 1.0);
        break;
      case LayerKind::batchnorm:
        layer = std::make_unique<BatchNormLayer>(ls, shape);
        break;
      case LayerKind::spiking_iaf:
        if (spec_.mode == NetMode::analog)
          throw ValidationError("analog networks cannot contain spiking_iaf");
        ++n_iaf;
        layer = std::make_unique<IafLayer>(ls);
        break;
      case LayerKind::relu:
        layer = std::make_unique<ReluLayer>(ls);
        break;
      case LayerKind::flatten:
        layer = std::make_unique<FlattenLayer>(ls);
        break;
    }
    shape = layer->out_shape(shape);
    if (init_weights) {
      Rng rng(mix_seed(init_seed, 0x6c617965 /* "laye" */, li));
      const double gain = spec_.mode == NetMode::spiking ? 3.0 : 1.0;
      if (auto* c = dynamic_cast<ConvLayer*>(layer.get()))
        init_uniform(c->weight, ls.in_channels * ls.kernel * ls.kernel, gain,
                     rng);
      else if (auto* l = dynamic_cast<LinearLayer*>(layer.get()))
        init_uniform(l->weight, ls.in_channels, gain, rng);
    }
    layers_.push_back(std::move(layer));
  }
  if (spec_.mode == NetMode::spiking && n_iaf == 0)
    throw ValidationError("spiking networks need at least one spiking_iaf");
  if (shape != std::vector<int>{spec_.n_classes})
    throw ValidationError(
        "network output shape does not match n_classes (got rank " +
        std::to_string(shape.size()) + ", first dim " +
        std::to_string(shape.empty() ? -1 : shape[0]) + ")");
}

std::vector<double> Network::forward(const Tensor& raster, bool record) {
  if (raster.rank() != 4)
    throw ValidationError("forward expects a [T,P,H,W] raster");
  if (raster.dim(1) != spec_.in_polarities ||
      raster.dim(2) != spec_.in_height || raster.dim(3) != spec_.in_width)
    throw ValidationError("forward: raster shape does not match network input");
  const int T = raster.dim(0);
  if (spec_.mode == NetMode::analog && T != 1)
    throw ValidationError("analog forward requires T == 1");
  if (!raster.all_finite()) throw NumericError("forward: non-finite input");

  for (auto& l : layers_) l->begin_forward();
  recorded_T_ = record ? T : 0;

  std::vector<double> counts(size_t(spec_.n_classes), 0.0);
  const int64_t step_size = raster.size() / T;
  for (int t = 0; t < T; ++t) {
    Tensor x(input_shape_);
    std::memcpy(x.data(), raster.data() + int64_t(t) * step_size,
                size_t(step_size) * sizeof(double));
    for (auto& l : layers_) x = l->step(x, record);
    for (int k = 0; k < spec_.n_classes; ++k) counts[size_t(k)] += x[k];
  }
  for (double c : counts)
    if (!std::isfinite(c)) throw NumericError("forward: non-finite output");
  return counts;
}

Tensor Network::backward(const std::vector<double>& upstream,
                         bool accumulate_param_grads) {
  if (recorded_T_ == 0)
    throw ValidationError("backward without a recorded forward");
  if (int(upstream.size()) != spec_.n_classes)
    throw ValidationError("backward: upstream size != n_classes");

  for (auto& l : layers_) {
    l->set_accumulate_param_grads(accumulate_param_grads);
    l->begin_backward();
  }
  const int T = recorded_T_;
  Tensor grad_input({T, spec_.in_polarities, spec_.in_height, spec_.in_width});
  const int64_t step_size = grad_input.size() / T;
  // counts[k] = sum_t out_t[k], so each timestep receives the same upstream.
  for (int t = T - 1; t >= 0; --t) {
    Tensor g({spec_.n_classes});
    for (int k = 0; k < spec_.n_classes; ++k) g[k] = upstream[size_t(k)];
    for (size_t li = layers_.size(); li-- > 0;)
      g = layers_[li]->backward_step(g);
    std::memcpy(grad_input.data() + int64_t(t) * step_size, g.data(),
                size_t(step_size) * sizeof(double));
  }
  return grad_input;
}

int Network::predict(const Tensor& raster) { return argmax_label(forward(raster)); }

void Network::zero_grad() {
  for (auto& l : layers_) l->zero_grad();
}

std::vector<Tensor*> Network::parameters() {
  std::vector<Tensor*> out;
  for (auto& l : layers_)
    for (Tensor* p : l->params()) out.push_back(p);
  return out;
}

std::vector<Tensor*> Network::gradients() {
  std::vector<Tensor*> out;
  for (auto& l : layers_)
    for (Tensor* g : l->grads()) out.push_back(g);
  return out;
}

void Network::set_training(bool on) {
  for (auto& l : layers_)
    if (auto* bn = dynamic_cast<BatchNormLayer*>(l.get())) bn->set_training(on);
}

void Network::set_relaxed_spikes(bool on) {
  for (auto& l : layers_)
    if (auto* iaf = dynamic_cast<IafLayer*>(l.get())) iaf->set_relaxed(on);
}

Network Network::clone() const {
  Network out;
  out.spec_ = spec_;
  out.quantized_ = quantized_;
  out.input_shape_ = input_shape_;
  for (const auto& l : layers_) out.layers_.push_back(l->clone());
  return out;
}

// ---------------------------------------------------------------------------
// Losses

std::vector<double> log_softmax(const std::vector<double>& z) {
  double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  const double lse = zmax + std::log(sum);
  std::vector<double> out(z.size());
  for (size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
  return out;
}

std::vector<double> softmax(const std::vector<double>& z) {
  std::vector<double> out = log_softmax(z);
  for (double& v : out) v = std::exp(v);
  return out;
}

double cross_entropy(const std::vector<double>& z, int target) {
  return -log_softmax(z)[size_t(target)];
}

std::vector<double> cross_entropy_grad(const std::vector<double>& z,
                                       int target) {
  std::vector<double> g = softmax(z);
  g[size_t(target)] -= 1.0;
  return g;
}

double kl_divergence(const std::vector<double>& p_logits,
                     const std::vector<double>& q_logits) {
  std::vector<double> log_p = log_softmax(p_logits);
  std::vector<double> log_q = log_softmax(q_logits);
  double kl = 0.0;
  for (size_t i = 0; i < log_p.size(); ++i)
    kl += std::exp(log_p[i]) * (log_p[i] - log_q[i]);
  return kl;
}

int argmax_label(const std::vector<double>& counts) {
  int best = 0;
  for (int i = 1; i < int(counts.size()); ++i)
    if (counts[size_t(i)] > counts[size_t(best)]) best = i;
  return best;
}

// ---------------------------------------------------------------------------
// Model file IO

namespace {

constexpr char kModelMagic[4] = {'S', 'N', 'N', '0'};

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw ParseError("model file truncated");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

void write_f32(std::ostream& os, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

float read_f32(std::istream& is) {
  uint32_t bits = read_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void write_u8(std::ostream& os, uint8_t v) {
  os.write(reinterpret_cast<const char*>(&v), 1);
}

uint8_t read_u8(std::istream& is) {
  uint8_t v;
  if (!is.read(reinterpret_cast<char*>(&v), 1))
    throw ParseError("model file truncated");
  return v;
}

void write_tensor_f32(std::ostream& os, const Tensor& t) {
  for (int64_t i = 0; i < t.size(); ++i) write_f32(os, float(t[i]));
}

void read_tensor_f32(std::istream& is, Tensor& t) {
  for (int64_t i = 0; i < t.size(); ++i) t[i] = double(read_f32(is));
}

}  // namespace

void save_model(const Network& net, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  const NetworkSpec& spec = net.spec();
  os.write(kModelMagic, 4);
  write_u32(os, 1);  // version
  write_u8(os, spec.mode == NetMode::spiking ? 1 : 0);
  write_u32(os, uint32_t(spec.n_classes));
  write_u32(os, uint32_t(spec.in_polarities));
  write_u32(os, uint32_t(spec.in_height));
  write_u32(os, uint32_t(spec.in_width));
  write_u32(os, uint32_t(spec.layers.size()));
  for (const LayerSpec& ls : spec.layers) {
    write_u8(os, uint8_t(ls.kind));
    switch (ls.kind) {
      case LayerKind::conv2d:
        write_u32(os, uint32_t(ls.in_channels));
        write_u32(os, uint32_t(ls.out_channels));
        write_u32(os, uint32_t(ls.kernel));
        write_u32(os, uint32_t(ls.stride));
        write_u32(os, uint32_t(ls.pad));
        write_u8(os, ls.bias ? 1 : 0);
        break;
      case LayerKind::linear:
        write_u32(os, uint32_t(ls.in_channels));
        write_u32(os, uint32_t(ls.out_channels));
        write_u8(os, ls.bias ? 1 : 0);
        break;
      case LayerKind::sum_pool2d:
        write_u32(os, uint32_t(ls.pool));
        break;
      case LayerKind::batchnorm:
        write_u32(os, uint32_t(ls.in_channels));
        write_f32(os, float(ls.bn_eps));
        break;
      case LayerKind::spiking_iaf:
        write_f32(os, float(ls.theta));
        write_u8(os, ls.clamp_v_zero ? 1 : 0);
        break;
      case LayerKind::relu:
      case LayerKind::flatten:
        break;
    }
  }
  // Weight payload, in layer order.
  for (const auto& l : net.layers()) {
    if (auto* c = dynamic_cast<const ConvLayer*>(l.get())) {
      write_tensor_f32(os, c->weight);
      if (!c->bias.empty()) write_tensor_f32(os, c->bias);
    } else if (auto* ln = dynamic_cast<const LinearLayer*>(l.get())) {
      write_tensor_f32(os, ln->weight);
      if (!ln->bias.empty()) write_tensor_f32(os, ln->bias);
    } else if (auto* bn = dynamic_cast<const BatchNormLayer*>(l.get())) {
      write_tensor_f32(os, bn->gamma);
      write_tensor_f32(os, bn->beta);
      write_tensor_f32(os, bn->running_mean);
      write_tensor_f32(os, bn->running_var);
    }
  }
  // Optional quantized section.
  const auto& q = net.quantized();
  write_u8(os, q.empty() ? 0 : 1);
  if (!q.empty()) {
    write_u32(os, uint32_t(q.size()));
    for (const QuantizedTensor& qt : q) {
      write_f32(os, float(qt.scale));
      write_u32(os, uint32_t(qt.codes.size()));
      os.write(reinterpret_cast<const char*>(qt.codes.data()),
               long(qt.codes.size()));
    }
  }
  if (!os) throw IoError("write failed: " + path);
}

Network load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kModelMagic, 4) != 0)
    throw ParseError(path + ": bad magic (expected SNN0)");
  uint32_t version = read_u32(is);
  if (version != 1)
    throw ParseError(path + ": unsupported model version " +
                     std::to_string(version));
  NetworkSpec spec;
  spec.mode = read_u8(is) ? NetMode::spiking : NetMode::analog;
  spec.n_classes = int(read_u32(is));
  spec.in_polarities = int(read_u32(is));
  spec.in_height = int(read_u32(is));
  spec.in_width = int(read_u32(is));
  uint32_t n_layers = read_u32(is);
  for (uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec ls;
    ls.kind = LayerKind(read_u8(is));
    switch (ls.kind) {
      case LayerKind::conv2d:
        ls.in_channels = int(read_u32(is));
        ls.out_channels = int(read_u32(is));
        ls.kernel = int(read_u32(is));
        ls.stride = int(read_u32(is));
        ls.pad = int(read_u32(is));
        ls.bias = read_u8(is) != 0;
        break;
      case LayerKind::linear:
        ls.in_channels = int(read_u32(is));
        ls.out_channels = int(read_u32(is));
        ls.bias = read_u8(is) != 0;
        break;
      case LayerKind::sum_pool2d:
        ls.pool = int(read_u32(is));
        break;
      case LayerKind::batchnorm:
        ls.in_channels = int(read_u32(is));
        ls.out_channels = ls.in_channels;
        ls.bn_eps = double(read_f32(is));
        break;
      case LayerKind::spiking_iaf:
        ls.theta = double(read_f32(is));
        ls.clamp_v_zero = read_u8(is) != 0;
        break;
      case LayerKind::relu:
      case LayerKind::flatten:
        break;
      default:
        throw ParseError(path + ": unknown layer kind");
    }
    spec.layers.push_back(ls);
  }
  Network net;
  net.spec_ = spec;
  net.build(0, false);
  for (auto& l : net.layers_) {
    if (auto* c = dynamic_cast<ConvLayer*>(l.get())) {
      read_tensor_f32(is, c->weight);
      if (!c->bias.empty()) read_tensor_f32(is, c->bias);
    } else if (auto* ln = dynamic_cast<LinearLayer*>(l.get())) {
      read_tensor_f32(is, ln->weight);
      if (!ln->bias.empty()) read_tensor_f32(is, ln->bias);
    } else if (auto* bn = dynamic_cast<BatchNormLayer*>(l.get())) {
      read_tensor_f32(is, bn->gamma);
      read_tensor_f32(is, bn->beta);
      read_tensor_f32(is, bn->running_mean);
      read_tensor_f32(is, bn->running_var);
    }
  }
  if (read_u8(is)) {
    uint32_t nq = read_u32(is);
    for (uint32_t i = 0; i < nq; ++i) {
      QuantizedTensor qt;
      qt.scale = double(read_f32(is));
      uint32_t n = read_u32(is);
      qt.codes.resize(n);
      if (!is.read(reinterpret_cast<char*>(qt.codes.data()), long(n)))
        throw ParseError(path + ": truncated quantized section");
      net.quantized_.push_back(std::move(qt));
    }
  }
  return net;
}

Network fold_batchnorm(const Network& net) {
  Network out;
  out.spec_ = net.spec();
  out.spec_.layers.clear();

  // Pass 1: build folded layer specs (batchnorm dropped, preceding conv
  // gains a bias).
  const auto& in_layers = net.layers();
  for (size_t i = 0; i < in_layers.size(); ++i) {
    LayerSpec ls = in_layers[i]->spec();
    if (ls.kind == LayerKind::batchnorm) {
      if (i == 0 || in_layers[i - 1]->kind() != LayerKind::conv2d)
        throw ValidationError(
            "fold_batchnorm: batchnorm must directly follow a conv2d");
      continue;
    }
    if (ls.kind == LayerKind::conv2d && i + 1 < in_layers.size() &&
        in_layers[i + 1]->kind() == LayerKind::batchnorm)
      ls.bias = true;
    out.spec_.layers.push_back(ls);
  }
  out.build(0, false);

  // Pass 2: copy weights, folding y = gamma*(w*x + b - mu)/sigma + beta.
  size_t oi = 0;
  for (size_t i = 0; i < in_layers.size(); ++i) {
    const Layer* src = in_layers[i].get();
    if (src->kind() == LayerKind::batchnorm) continue;
    Layer* dst = out.layers_[oi++].get();
    if (auto* c = dynamic_cast<const ConvLayer*>(src)) {
      auto* dc = dynamic_cast<ConvLayer*>(dst);
      dc->weight = c->weight;
      if (!c->bias.empty())
        for (int64_t k = 0; k < c->bias.size(); ++k) dc->bias[k] = c->bias[k];
      if (i + 1 < in_layers.size() &&
          in_layers[i + 1]->kind() == LayerKind::batchnorm) {
        auto* bn = dynamic_cast<const BatchNormLayer*>(in_layers[i + 1].get());
        const int out_c = dc->weight.dim(0);
        const int64_t per_oc = dc->weight.size() / out_c;
        for (int oc = 0; oc < out_c; ++oc) {
          const double istd =
              1.0 / std::sqrt(bn->running_var[oc] + bn->spec().bn_eps);
          const double scale = bn->gamma[oc] * istd;
          for (int64_t k = 0; k < per_oc; ++k)
            dc->weight[int64_t(oc) * per_oc + k] *= scale;
          const double b0 = c->bias.empty() ? 0.0 : c->bias[oc];
          dc->bias[oc] =
              (b0 - bn->running_mean[oc]) * scale + bn->beta[oc];
        }
      }
    } else if (auto* ln = dynamic_cast<const LinearLayer*>(src)) {
      auto* dl = dynamic_cast<LinearLayer*>(dst);
      dl->weight = ln->weight;
      dl->bias = ln->bias;
    }
  }
  return out;
}

}  // namespace spikefool
