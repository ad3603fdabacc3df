#include "spikefool/training.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "spikefool/rng.hpp"

namespace spikefool {

void TrainConfig::validate() const {
  if (adam.lr <= 0.0) throw ConfigError("train: lr must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
}

void TradesConfig::validate() const {
  if (beta_rob < 0.0) throw ConfigError("trades: beta_rob must be >= 0");
  if (eps <= 0.0 || eps > 1.0) throw ConfigError("trades: eps must be in (0,1]");
  if (n_pgd < 1) throw ConfigError("trades: n_pgd must be >= 1");
}

void Adam::step(const std::vector<Tensor*>& params,
                const std::vector<Tensor*>& grads) {
  if (params.size() != grads.size())
    throw ValidationError("adam: params/grads size mismatch");
  if (m_.empty()) {
    for (Tensor* p : params) {
      m_.push_back(zeros_like(*p));
      v_.push_back(zeros_like(*p));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (int64_t k = 0; k < p.size(); ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      p[k] -= cfg_.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg_.eps);
    }
  }
}

std::string train_report_to_json(const TrainReport& r) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["kind"] = "train_report";
  j["seed"] = r.seed;
  j["config"] = {{"epochs", r.epochs},
                 {"batch_size", r.batch_size},
                 {"lr", r.lr},
                 {"beta_rob", r.beta_rob}};
  j["epoch_loss"] = r.epoch_loss;
  j["epoch_train_acc"] = r.epoch_train_acc;
  j["epoch_test_acc"] = r.epoch_test_acc;
  j["final_train_acc"] = r.final_train_acc;
  j["final_test_acc"] = r.final_test_acc;
  return j.dump(2);
}

Tensor accumulate_frames(const Tensor& raster) {
  if (raster.rank() != 4)
    throw ValidationError("accumulate_frames expects [T,P,H,W]");
  const int T = raster.dim(0);
  Tensor frame({raster.dim(1), raster.dim(2), raster.dim(3)});
  const int64_t step = frame.size();
  for (int t = 0; t < T; ++t)
    for (int64_t i = 0; i < step; ++i) frame[i] += raster[int64_t(t) * step + i];
  return frame;
}

Dataset accumulate_dataset(const Dataset& ds) {
  Dataset out;
  out.n_classes = ds.n_classes;
  out.labels = ds.labels;
  for (const Tensor& r : ds.rasters) {
    Tensor frame = accumulate_frames(r);
    Tensor t1({1, frame.dim(0), frame.dim(1), frame.dim(2)});
    for (int64_t i = 0; i < frame.size(); ++i) t1[i] = frame[i];
    out.rasters.push_back(std::move(t1));
  }
  return out;
}

double accuracy(Network& net, const Dataset& ds) {
  if (ds.size() == 0) return 0.0;
  size_t correct = 0;
  for (size_t i = 0; i < ds.size(); ++i)
    if (net.predict(ds.rasters[i]) == ds.labels[i]) ++correct;
  return double(correct) / double(ds.size());
}

PgdResult pgd_linf(Network& net, const Tensor& x, int label, double eps,
                   int n_steps, double step_size) {
  if (!x.integer_valued())
    throw ValidationError("pgd_linf expects a binary raster");
  PgdResult out;
  out.x_cont = x;
  Tensor rounded = x;
  for (int step = 0; step < n_steps; ++step) {
    for (int64_t i = 0; i < rounded.size(); ++i)
      rounded[i] = std::round(out.x_cont[i]);
    std::vector<double> z = net.forward(rounded, true);
    Tensor g = net.backward(cross_entropy_grad(z, label));
    for (int64_t i = 0; i < out.x_cont.size(); ++i) {
      const double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
      double v = out.x_cont[i] + step_size * s;
      v = std::min(v, x[i] + eps);
      v = std::max(v, x[i] - eps);
      v = std::min(1.0, std::max(0.0, v));
      out.x_cont[i] = v;
    }
  }
  out.x_round = out.x_cont;
  for (int64_t i = 0; i < out.x_round.size(); ++i)
    out.x_round[i] = std::round(out.x_cont[i]);
  return out;
}

double trades_step(Network& net, const Dataset& ds,
                   const std::vector<size_t>& batch,
                   const TradesConfig& trades) {
  trades.validate();
  net.zero_grad();
  const double B = double(batch.size());
  double total_ce = 0.0, total_kl = 0.0;
  for (size_t idx : batch) {
    const Tensor& x = ds.rasters[idx];
    const int y = ds.labels[idx];
    std::vector<double> up0;
    if (trades.beta_rob > 0.0) {
      net.set_training(false);
      PgdResult adv =
          pgd_linf(net, x, y, trades.eps, trades.n_pgd, trades.effective_step());
      net.set_training(true);

      std::vector<double> z0_probe = net.forward(x, false);
      std::vector<double> z_adv = net.forward(adv.x_round, true);
      // KL(p || q), p = softmax(z_adv), q = softmax(z0).
      std::vector<double> lp = log_softmax(z_adv);
      std::vector<double> lq = log_softmax(z0_probe);
      double kl = 0.0;
      for (size_t k = 0; k < lp.size(); ++k)
        kl += std::exp(lp[k]) * (lp[k] - lq[k]);
      if (!std::isfinite(kl))
        throw NumericError("trades: non-finite KL divergence");
      total_kl += kl;

      // d KL / d z_adv = p * (lp - lq - KL), through the recorded tape.
      std::vector<double> up_adv(lp.size());
      for (size_t k = 0; k < lp.size(); ++k)
        up_adv[k] = trades.beta_rob / B * std::exp(lp[k]) * (lp[k] - lq[k] - kl);
      net.backward(up_adv, true);

      // Clean term: d/dz0 of CE + (beta/B) * (q - p).
      std::vector<double> z0 = net.forward(x, true);
      total_ce += cross_entropy(z0, y);
      up0 = cross_entropy_grad(z0, y);
      for (size_t k = 0; k < up0.size(); ++k) {
        up0[k] /= B;
        up0[k] += trades.beta_rob / B * (std::exp(lq[k]) - std::exp(lp[k]));
      }
    } else {
      std::vector<double> z0 = net.forward(x, true);
      total_ce += cross_entropy(z0, y);
      up0 = cross_entropy_grad(z0, y);
      for (double& v : up0) v /= B;
    }
    net.backward(up0, true);
  }
  const double loss = total_ce / B + trades.beta_rob / B * total_kl;
  if (!std::isfinite(loss))
    throw NumericError("training diverged: non-finite loss");
  return loss;
}

TrainReport train_bptt(Network& net, const Dataset& train, const Dataset* test,
                       const TrainConfig& cfg) {
  return train_bptt(net, train, test, cfg, TradesConfig{});
}

TrainReport train_bptt(Network& net, const Dataset& train, const Dataset* test,
                       const TrainConfig& cfg, const TradesConfig& trades) {
  cfg.validate();
  trades.validate();
  if (train.size() == 0) throw ConfigError("train: empty dataset");

  TrainReport report;
  report.seed = cfg.seed;
  report.epochs = cfg.epochs;
  report.batch_size = cfg.batch_size;
  report.lr = cfg.adam.lr;
  report.beta_rob = trades.beta_rob;

  Adam adam(cfg.adam);
  Rng shuffle_rng(mix_seed(cfg.seed, 0x74726169 /* "trai" */));
  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the project RNG for cross-platform determinism.
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[size_t(shuffle_rng.below(i))]);

    net.set_training(true);
    double epoch_loss = 0.0;
    size_t n_batches = 0;
    for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + size_t(cfg.batch_size));
      std::vector<size_t> batch(order.begin() + long(start),
                                order.begin() + long(end));
      epoch_loss += trades_step(net, train, batch, trades);
      adam.step(net.parameters(), net.gradients());
      ++n_batches;
    }
    net.set_training(false);
    report.epoch_loss.push_back(epoch_loss / double(n_batches));
    report.epoch_train_acc.push_back(accuracy(net, train));
    if (test) report.epoch_test_acc.push_back(accuracy(net, *test));
    log_msg(LogLevel::info,
            "epoch " + std::to_string(epoch + 1) + "/" +
                std::to_string(cfg.epochs) + " loss " +
                std::to_string(report.epoch_loss.back()) + " train_acc " +
                std::to_string(report.epoch_train_acc.back()) +
                (test ? " test_acc " + std::to_string(report.epoch_test_acc.back())
                      : ""));
  }
  net.set_training(false);
  report.final_train_acc = accuracy(net, train);
  if (test) report.final_test_acc = accuracy(net, *test);
  return report;
}

double percentile_nearest_rank(std::vector<double> values, double p) {
  if (values.empty())
    throw CalibrationError("percentile of an empty sample set");
  std::sort(values.begin(), values.end());
  size_t rank = size_t(std::ceil(p / 100.0 * double(values.size())));
  rank = std::max<size_t>(1, std::min(rank, values.size()));
  return values[rank - 1];
}

namespace {

// Runs one accumulated frame through the analog layers with sum-pool
// semantics (undoing the average divisor), collecting every conv/linear
// pre-activation. This matches the linear algebra the spiking network will
// execute, so the percentile-to-threshold mapping is exact.
void collect_preactivations(const Network& analog, const Tensor& frame_t1,
                            std::vector<std::vector<double>>& pools) {
  Tensor x({frame_t1.dim(1), frame_t1.dim(2), frame_t1.dim(3)});
  for (int64_t i = 0; i < x.size(); ++i) x[i] = frame_t1[i];
  size_t wi = 0;
  for (const auto& l : analog.layers()) {
    Layer* layer = const_cast<Layer*>(l.get());
    x = layer->step(x, false);
    switch (l->kind()) {
      case LayerKind::conv2d:
      case LayerKind::linear: {
        for (int64_t i = 0; i < x.size(); ++i) pools[wi].push_back(x[i]);
        ++wi;
        break;
      }
      case LayerKind::sum_pool2d: {
        auto* pool = dynamic_cast<const SumPoolLayer*>(l.get());
        for (int64_t i = 0; i < x.size(); ++i) x[i] *= pool->divisor();
        break;
      }
      default:
        break;
    }
  }
}

}  // namespace

Network transfer_weights(const Network& analog_net, const Dataset& calibration) {
  if (analog_net.mode() != NetMode::analog)
    throw ConfigError("transfer_weights: source must be an analog network");
  if (calibration.size() == 0)
    throw CalibrationError("transfer_weights: empty calibration set");
  for (const auto& l : analog_net.layers()) {
    if (l->kind() == LayerKind::batchnorm)
      throw ConfigError(
          "transfer_weights: fold batchnorm before transferring");
    const LayerSpec& ls = l->spec();
    if ((ls.kind == LayerKind::conv2d || ls.kind == LayerKind::linear) &&
        ls.bias)
      throw ConfigError(
          "transfer_weights: biased layers are not chip-compatible");
  }

  // Calibration frames: accumulate over time if the set is spiking-shaped.
  Dataset frames = calibration.rasters[0].dim(0) == 1
                       ? calibration
                       : accumulate_dataset(calibration);

  size_t n_weighted = 0;
  for (const auto& l : analog_net.layers())
    if (l->kind() == LayerKind::conv2d || l->kind() == LayerKind::linear)
      ++n_weighted;
  std::vector<std::vector<double>> pools(n_weighted);
  Network probe = analog_net.clone();
  for (const Tensor& f : frames.rasters) collect_preactivations(probe, f, pools);

  std::vector<double> s(n_weighted);
  for (size_t i = 0; i < n_weighted; ++i) {
    s[i] = percentile_nearest_rank(pools[i], 99.0);
    if (s[i] <= 0.0)
      throw CalibrationError(
          "transfer_weights: non-positive 99th percentile at weighted layer " +
          std::to_string(i));
  }

  // Build the spiking twin: relu -> spiking_iaf, mode flips, pooling becomes
  // sum pooling automatically. The output layer always gets a spiking unit
  // so class scores are spike counts.
  NetworkSpec spiking_spec = analog_net.spec();
  spiking_spec.mode = NetMode::spiking;
  for (LayerSpec& ls : spiking_spec.layers)
    if (ls.kind == LayerKind::relu) ls = LayerSpec::spiking_iaf(1.0);
  if (spiking_spec.layers.empty() ||
      spiking_spec.layers.back().kind != LayerKind::spiking_iaf)
    spiking_spec.layers.push_back(LayerSpec::spiking_iaf(1.0));
  Network spiking(spiking_spec, 0);

  size_t wi = 0;
  for (size_t li = 0; li < analog_net.layers().size(); ++li) {
    const Layer* src = analog_net.layers()[li].get();
    Layer* dst = const_cast<Layer*>(spiking.layers()[li].get());
    if (auto* c = dynamic_cast<const ConvLayer*>(src)) {
      auto* dc = dynamic_cast<ConvLayer*>(dst);
      const double factor = (wi == 0 ? 1.0 : s[wi - 1]) / s[wi];
      dc->weight = c->weight;
      for (int64_t k = 0; k < dc->weight.size(); ++k) dc->weight[k] *= factor;
      ++wi;
    } else if (auto* ln = dynamic_cast<const LinearLayer*>(src)) {
      auto* dl = dynamic_cast<LinearLayer*>(dst);
      const double factor = (wi == 0 ? 1.0 : s[wi - 1]) / s[wi];
      dl->weight = ln->weight;
      for (int64_t k = 0; k < dl->weight.size(); ++k) dl->weight[k] *= factor;
      ++wi;
    }
  }
  return spiking;
}

Network quantize_weights(const Network& net, int bits) {
  if (bits < 2 || bits > 8)
    throw ConfigError("quantize_weights: bits must be in [2,8]");
  const double qmax = double((1 << (bits - 1)) - 1);
  Network out = net.clone();
  out.quantized().clear();
  for (const auto& l : out.layers()) {
    Tensor* w = nullptr;
    if (auto* c = dynamic_cast<ConvLayer*>(const_cast<Layer*>(l.get())))
      w = &c->weight;
    else if (auto* ln = dynamic_cast<LinearLayer*>(const_cast<Layer*>(l.get())))
      w = &ln->weight;
    if (!w) continue;
    double wmax = 0.0;
    for (int64_t i = 0; i < w->size(); ++i) wmax = std::max(wmax, std::abs((*w)[i]));
    QuantizedTensor qt;
    qt.scale = wmax == 0.0 ? 1.0 : wmax / qmax;
    qt.codes.resize(size_t(w->size()));
    for (int64_t i = 0; i < w->size(); ++i) {
      double code = std::round((*w)[i] / qt.scale);
      code = std::max(-qmax, std::min(qmax, code));
      qt.codes[size_t(i)] = int8_t(code);
      (*w)[i] = code * qt.scale;
    }
    out.quantized().push_back(std::move(qt));
  }
  return out;
}

}  // namespace spikefool
