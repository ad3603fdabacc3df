#include <doctest.h>

#include <cmath>

#include "net_builders.hpp"
#include "spikefool/synth.hpp"
#include "spikefool/training.hpp"
#include "test_util.hpp"

using namespace spikefool;

namespace {

// Analog net with a single linear layer and hand-set weights; gradient of
// class k w.r.t. input is row k.
Network affine_net(const Tensor& w /*[out,in]*/) {
  NetworkSpec spec;
  spec.mode = NetMode::analog;
  spec.in_polarities = 1;
  spec.in_height = 1;
  spec.in_width = w.dim(1);
  spec.n_classes = w.dim(0);
  spec.layers.push_back(LayerSpec::flatten_spec());
  spec.layers.push_back(LayerSpec::linear(w.dim(1), w.dim(0)));
  Network net(spec, 0);
  dynamic_cast<LinearLayer*>(&net.layer(1))->weight = w;
  return net;
}

bool weights_identical(Network& a, Network& b) {
  auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (size_t i = 0; i < pa.size(); ++i)
    for (int64_t k = 0; k < pa[i]->size(); ++k)
      if ((*pa[i])[k] != (*pb[i])[k]) return false;
  return true;
}

}  // namespace

TEST_CASE("accumulate_frames sums over the time dimension") {
  Tensor zero({6, 2, 3, 3});
  Tensor fz = accumulate_frames(zero);
  for (int64_t i = 0; i < fz.size(); ++i) CHECK(fz[i] == 0.0);

  Tensor r({60, 1, 2, 2});
  for (int t = 0; t < 60; ++t) r.at4(t, 0, 1, 1) = 1.0;
  Tensor f = accumulate_frames(r);
  CHECK(f.at3(0, 1, 1) == 60.0);
  CHECK(f.at3(0, 0, 0) == 0.0);

  Rng rng(2);
  Tensor rand = sftest::random_binary_raster(7, 2, 4, 4, 0.5, rng);
  Tensor fr = accumulate_frames(rand);
  for (int p = 0; p < 2; ++p)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) {
        double want = 0.0;
        for (int t = 0; t < 7; ++t) want += rand.at4(t, p, y, x);
        CHECK(fr.at3(p, y, x) == want);
      }
}

TEST_CASE("pgd_linf: no steps or zero eps leave x unchanged") {
  Tensor w({2, 4});
  for (int64_t i = 0; i < w.size(); ++i) w[i] = (i % 3 == 0 ? 1.0 : -0.5);
  Network net = affine_net(w);
  Tensor x({1, 1, 1, 4});
  x[0] = 1.0;
  x[2] = 1.0;

  PgdResult r0 = pgd_linf(net, x, 0, 0.5, 0, 0.25);
  for (int64_t i = 0; i < x.size(); ++i) CHECK(r0.x_cont[i] == x[i]);

  PgdResult re = pgd_linf(net, x, 0, 0.0, 3, 0.25);
  for (int64_t i = 0; i < x.size(); ++i) CHECK(re.x_cont[i] == x[i]);
}

TEST_CASE("pgd_linf single step moves every coordinate by +-eps inside the box") {
  Tensor w({2, 4});
  w.fill(0.0);
  for (int i = 0; i < 4; ++i) {
    w[0 * 4 + i] = i < 2 ? 2.0 : -2.0;  // class 0 likes coords 0,1
    w[1 * 4 + i] = i < 2 ? -2.0 : 2.0;
  }
  Network net = affine_net(w);
  Tensor x({1, 1, 1, 4});
  x[0] = 1.0;  // class-0 evidence present, label = 0
  const double eps = 0.25;
  PgdResult r = pgd_linf(net, x, 0, eps, 1, eps);
  // ascent on CE(label 0) pushes away from class-0 evidence: coords 0,1 down
  // (clipped at 0 where x=0), coords 2,3 up
  CHECK(r.x_cont[0] == doctest::Approx(1.0 - eps));
  CHECK(r.x_cont[1] == 0.0);
  CHECK(r.x_cont[2] == doctest::Approx(eps));
  CHECK(r.x_cont[3] == doctest::Approx(eps));

  for (int64_t i = 0; i < x.size(); ++i) {
    CHECK(r.x_cont[i] >= 0.0);
    CHECK(r.x_cont[i] <= 1.0);
    CHECK(std::abs(r.x_cont[i] - x[i]) <= eps + 1e-15);
  }
}

TEST_CASE("pgd_linf respects constraints on random spiking nets") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    sftest::RandomNetInstance inst = sftest::random_spiking_instance(seed + 50);
    const double eps = 0.5;
    PgdResult r = pgd_linf(inst.net, inst.input, 0, eps, 5, 0.25);
    for (int64_t i = 0; i < r.x_cont.size(); ++i) {
      REQUIRE(r.x_cont[i] >= 0.0);
      REQUIRE(r.x_cont[i] <= 1.0);
      REQUIRE(std::abs(r.x_cont[i] - inst.input[i]) <= eps + 1e-15);
      REQUIRE(r.x_round[i] == std::round(r.x_cont[i]));
    }
  }
}

TEST_CASE("trades_step: beta 0 equals plain cross-entropy bit-exactly") {
  SynthSpec sspec;
  sspec.n_classes = 2;
  sspec.height = 8;
  sspec.width = 8;
  sspec.n_bins = 5;
  sspec.n_train = 8;
  sspec.n_test = 4;
  SynthDataset ds = synth_dataset(sspec, 3);

  NetworkSpec nspec;
  nspec.mode = NetMode::spiking;
  nspec.in_polarities = 2;
  nspec.in_height = 8;
  nspec.in_width = 8;
  nspec.n_classes = 2;
  nspec.layers.push_back(LayerSpec::flatten_spec());
  nspec.layers.push_back(LayerSpec::linear(2 * 8 * 8, 2));
  nspec.layers.push_back(LayerSpec::spiking_iaf(1.0));

  Network a(nspec, 5);
  Network b(nspec, 5);
  std::vector<size_t> batch = {0, 1, 2, 3};

  TradesConfig zero;
  zero.beta_rob = 0.0;
  const double loss_a = trades_step(a, ds.train, batch, zero);

  b.zero_grad();
  double loss_b = 0.0;
  for (size_t idx : batch) {
    std::vector<double> z = b.forward(ds.train.rasters[idx], true);
    loss_b += cross_entropy(z, ds.train.labels[idx]);
    std::vector<double> up = cross_entropy_grad(z, ds.train.labels[idx]);
    for (double& v : up) v /= double(batch.size());
    b.backward(up, true);
  }
  loss_b /= double(batch.size());

  CHECK(loss_a == loss_b);
  auto ga = a.gradients(), gb = b.gradients();
  for (size_t i = 0; i < ga.size(); ++i)
    for (int64_t k = 0; k < ga[i]->size(); ++k)
      REQUIRE((*ga[i])[k] == (*gb[i])[k]);
}

TEST_CASE("trades_step: KL term is non-negative and vanishes for x_adv == x0") {
  SynthSpec sspec;
  sspec.n_classes = 2;
  sspec.height = 8;
  sspec.width = 8;
  sspec.n_bins = 5;
  sspec.n_train = 8;
  sspec.n_test = 4;
  SynthDataset ds = synth_dataset(sspec, 4);

  NetworkSpec nspec;
  nspec.mode = NetMode::spiking;
  nspec.in_polarities = 2;
  nspec.in_height = 8;
  nspec.in_width = 8;
  nspec.n_classes = 2;
  nspec.layers.push_back(LayerSpec::conv2d(2, 4, 3, 1, 1));
  nspec.layers.push_back(LayerSpec::spiking_iaf(1.0));
  nspec.layers.push_back(LayerSpec::flatten_spec());
  nspec.layers.push_back(LayerSpec::linear(4 * 8 * 8, 2));
  nspec.layers.push_back(LayerSpec::spiking_iaf(1.0));
  Network net(nspec, 9);
  Rng arng(17);
  sftest::amplify_weights(net, 3.0, arng);

  std::vector<size_t> batch = {0, 1, 2, 3, 4, 5};
  TradesConfig tr;
  tr.beta_rob = 0.1;
  const double loss_trades = trades_step(net, ds.train, batch, tr);

  TradesConfig zero = tr;
  zero.beta_rob = 0.0;
  const double loss_plain = trades_step(net, ds.train, batch, zero);

  // KL >= 0 (Gibbs), so the TRADES loss can only add mass
  CHECK(loss_trades >= loss_plain - 1e-12);

  // x_adv == x0 (zero-step PGD) makes the KL term exactly 0
  CHECK(kl_divergence({1.0, -2.0, 0.5}, {1.0, -2.0, 0.5}) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("train_bptt: epochs=0 returns the net unchanged; determinism") {
  SynthSpec sspec;
  sspec.n_classes = 2;
  sspec.height = 8;
  sspec.width = 8;
  sspec.n_bins = 6;
  sspec.n_train = 12;
  sspec.n_test = 6;
  SynthDataset ds = synth_dataset(sspec, 11);

  NetworkSpec nspec;
  nspec.mode = NetMode::spiking;
  nspec.in_polarities = 2;
  nspec.in_height = 8;
  nspec.in_width = 8;
  nspec.n_classes = 2;
  nspec.layers.push_back(LayerSpec::flatten_spec());
  nspec.layers.push_back(LayerSpec::linear(2 * 8 * 8, 2));
  nspec.layers.push_back(LayerSpec::spiking_iaf(1.0));

  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.batch_size = 4;
  cfg.seed = 5;
  Network net(nspec, 5);
  Network before = net.clone();
  TrainReport rep = train_bptt(net, ds.train, &ds.test, cfg);
  CHECK(weights_identical(net, before));
  CHECK(rep.epoch_loss.empty());

  cfg.epochs = 3;
  Network n1(nspec, 5);
  Network n2(nspec, 5);
  TrainReport r1 = train_bptt(n1, ds.train, &ds.test, cfg);
  TrainReport r2 = train_bptt(n2, ds.train, &ds.test, cfg);
  CHECK(weights_identical(n1, n2));
  CHECK(r1.epoch_loss == r2.epoch_loss);
}

TEST_CASE("train_bptt separates an easy 2-class task") {
  // vertical vs horizontal bars (classes 0 and 2) differ spatially, so a
  // tiny net should fit them quickly
  SynthSpec sspec;
  sspec.n_classes = 3;
  sspec.height = 8;
  sspec.width = 8;
  sspec.n_bins = 6;
  sspec.n_train = 36;
  sspec.n_test = 18;
  SynthDataset full = synth_dataset(sspec, 23);
  Dataset train, test;
  train.n_classes = test.n_classes = 2;
  for (size_t i = 0; i < full.train.size(); ++i) {
    if (full.train.labels[i] == 1) continue;
    train.rasters.push_back(full.train.rasters[i]);
    train.labels.push_back(full.train.labels[i] == 0 ? 0 : 1);
  }
  for (size_t i = 0; i < full.test.size(); ++i) {
    if (full.test.labels[i] == 1) continue;
    test.rasters.push_back(full.test.rasters[i]);
    test.labels.push_back(full.test.labels[i] == 0 ? 0 : 1);
  }

  NetworkSpec nspec;
  nspec.mode = NetMode::spiking;
  nspec.in_polarities = 2;
  nspec.in_height = 8;
  nspec.in_width = 8;
  nspec.n_classes = 2;
  nspec.layers.push_back(LayerSpec::conv2d(2, 8, 3, 1, 1));
  nspec.layers.push_back(LayerSpec::spiking_iaf(1.0));
  nspec.layers.push_back(LayerSpec::sum_pool2d(2));
  nspec.layers.push_back(LayerSpec::flatten_spec());
  nspec.layers.push_back(LayerSpec::linear(8 * 4 * 4, 2));
  nspec.layers.push_back(LayerSpec::spiking_iaf(1.0));

  Network net(nspec, 31);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 8;
  cfg.seed = 31;
  cfg.adam.lr = 5e-3;  // desk-scale pilot setting
  TrainReport rep = train_bptt(net, train, &test, cfg);
  CHECK(rep.final_test_acc >= 0.95);
}

TEST_CASE("transfer_weights: identity network with s = theta keeps weights") {
  NetworkSpec aspec;
  aspec.mode = NetMode::analog;
  aspec.in_polarities = 1;
  aspec.in_height = 1;
  aspec.in_width = 3;
  aspec.n_classes = 3;
  aspec.layers.push_back(LayerSpec::flatten_spec());
  aspec.layers.push_back(LayerSpec::linear(3, 3));
  Network ann(aspec, 0);
  auto* lin = dynamic_cast<LinearLayer*>(&ann.layer(1));
  lin->weight.fill(0.0);
  for (int i = 0; i < 3; ++i) lin->weight[int64_t(i) * 3 + i] = 1.0;

  // calibration where the 99th percentile pre-activation is exactly 1.0
  Dataset calib;
  calib.n_classes = 3;
  for (int i = 0; i < 10; ++i) {
    Tensor x({1, 1, 1, 3});
    x[0] = 0.1 * (i + 1);
    x[1] = 0.1 * (i + 1);
    x[2] = 0.1 * (i + 1);
    calib.rasters.push_back(x);
    calib.labels.push_back(0);
  }
  Network snn = transfer_weights(ann, calib);
  CHECK(snn.mode() == NetMode::spiking);
  auto* slin = dynamic_cast<LinearLayer*>(&snn.layer(1));
  for (int64_t i = 0; i < slin->weight.size(); ++i)
    CHECK(slin->weight[i] == doctest::Approx(lin->weight[i]).epsilon(1e-12));
}

TEST_CASE("percentile matches the sort-and-index oracle") {
  std::vector<double> vals;
  for (int i = 1; i <= 10; ++i) vals.push_back(0.1 * i);
  CHECK(percentile_nearest_rank(vals, 99.0) == doctest::Approx(1.0));
  std::vector<double> big;
  for (int i = 1; i <= 200; ++i) big.push_back(double(i));
  CHECK(percentile_nearest_rank(big, 99.0) == doctest::Approx(198.0));
}

TEST_CASE("transfer_weights: doubling calibration inputs halves the first factor") {
  NetworkSpec aspec;
  aspec.mode = NetMode::analog;
  aspec.in_polarities = 1;
  aspec.in_height = 2;
  aspec.in_width = 2;
  aspec.n_classes = 2;
  aspec.layers.push_back(LayerSpec::conv2d(1, 2, 2, 1, 0));
  aspec.layers.push_back(LayerSpec::relu_spec());
  aspec.layers.push_back(LayerSpec::flatten_spec());
  aspec.layers.push_back(LayerSpec::linear(2, 2));
  Network ann(aspec, 41);
  Rng arng(8);
  sftest::amplify_weights(ann, 4.0, arng);

  Dataset calib, calib2;
  calib.n_classes = calib2.n_classes = 2;
  Rng rng(6);
  for (int i = 0; i < 20; ++i) {
    Tensor x({1, 1, 2, 2});
    for (int64_t k = 0; k < x.size(); ++k) x[k] = rng.uniform(0.0, 2.0);
    Tensor x2 = x;
    for (int64_t k = 0; k < x2.size(); ++k) x2[k] *= 2.0;
    calib.rasters.push_back(x);
    calib2.rasters.push_back(x2);
    calib.labels.push_back(0);
    calib2.labels.push_back(0);
  }

  Network snn1 = transfer_weights(ann, calib);
  Network snn2 = transfer_weights(ann, calib2);
  auto* c1 = dynamic_cast<ConvLayer*>(&snn1.layer(0));
  auto* c2 = dynamic_cast<ConvLayer*>(&snn2.layer(0));
  for (int64_t i = 0; i < c1->weight.size(); ++i)
    CHECK(c2->weight[i] == doctest::Approx(c1->weight[i] / 2.0).epsilon(1e-9));

  for (size_t i = 0; i < calib.size(); ++i)
    CHECK(snn1.predict(calib.rasters[i]) == snn2.predict(calib2.rasters[i]));
}

TEST_CASE("transfer_weights: zero percentile raises a calibration error") {
  NetworkSpec aspec;
  aspec.mode = NetMode::analog;
  aspec.in_polarities = 1;
  aspec.in_height = 1;
  aspec.in_width = 2;
  aspec.n_classes = 2;
  aspec.layers.push_back(LayerSpec::flatten_spec());
  aspec.layers.push_back(LayerSpec::linear(2, 2));
  Network ann(aspec, 1);
  Dataset calib;
  calib.n_classes = 2;
  Tensor zero({1, 1, 1, 2});
  calib.rasters.push_back(zero);
  calib.labels.push_back(0);
  CHECK_THROWS_AS(transfer_weights(ann, calib), CalibrationError);
}

TEST_CASE("quantize_weights: codes, round trip, idempotence, error bound") {
  NetworkSpec spec;
  spec.mode = NetMode::analog;
  spec.in_polarities = 1;
  spec.in_height = 1;
  spec.in_width = 3;
  spec.n_classes = 2;
  spec.layers.push_back(LayerSpec::flatten_spec());
  spec.layers.push_back(LayerSpec::linear(3, 2));
  Network net(spec, 0);
  auto* lin = dynamic_cast<LinearLayer*>(&net.layer(1));
  lin->weight[0] = -1.0;
  lin->weight[1] = 0.5;
  lin->weight[2] = 1.0;
  lin->weight[3] = 0.0;
  lin->weight[4] = 0.25;
  lin->weight[5] = -0.75;

  Network q = quantize_weights(net, 8);
  REQUIRE(q.quantized().size() == 1);
  const QuantizedTensor& qt = q.quantized()[0];
  CHECK(qt.scale == doctest::Approx(1.0 / 127.0));
  CHECK(qt.codes[0] == -127);
  CHECK(qt.codes[1] == 64);  // round(63.5), half away from zero
  CHECK(qt.codes[2] == 127);

  auto* qlin = dynamic_cast<LinearLayer*>(&q.layer(1));
  for (int64_t i = 0; i < qlin->weight.size(); ++i)
    CHECK(std::abs(qlin->weight[i] - lin->weight[i]) <= qt.scale / 2 + 1e-15);

  Network qq = quantize_weights(q, 8);
  auto* qqlin = dynamic_cast<LinearLayer*>(&qq.layer(1));
  for (int64_t i = 0; i < qlin->weight.size(); ++i)
    CHECK(qqlin->weight[i] == qlin->weight[i]);
  CHECK(qq.quantized()[0].codes == q.quantized()[0].codes);

  // exact round trip for weights already on the code grid
  lin->weight.fill(0.0);
  lin->weight[0] = 127.0;
  lin->weight[1] = -64.0;
  Network q2 = quantize_weights(net, 8);
  auto* q2lin = dynamic_cast<LinearLayer*>(&q2.layer(1));
  CHECK(q2lin->weight[0] == 127.0);
  CHECK(q2lin->weight[1] == -64.0);
}

TEST_CASE("quantize_weights: all-zero layer gets scale 1 and zero codes") {
  NetworkSpec spec;
  spec.mode = NetMode::analog;
  spec.in_polarities = 1;
  spec.in_height = 1;
  spec.in_width = 2;
  spec.n_classes = 2;
  spec.layers.push_back(LayerSpec::flatten_spec());
  spec.layers.push_back(LayerSpec::linear(2, 2));
  Network net(spec, 0);
  dynamic_cast<LinearLayer*>(&net.layer(1))->weight.fill(0.0);
  Network q = quantize_weights(net, 8);
  CHECK(q.quantized()[0].scale == 1.0);
  for (int8_t c : q.quantized()[0].codes) CHECK(c == 0);
}

TEST_CASE("quantized model file round trip keeps codes and scales") {
  sftest::TempDir dir("quant_io");
  sftest::RandomNetInstance inst = sftest::random_spiking_instance(12);
  Network q = quantize_weights(inst.net, 8);
  const std::string p = dir.str() + "/q.snn";
  save_model(q, p);
  Network back = load_model(p);
  REQUIRE(back.quantized().size() == q.quantized().size());
  for (size_t i = 0; i < q.quantized().size(); ++i) {
    CHECK(back.quantized()[i].codes == q.quantized()[i].codes);
    CHECK(float(back.quantized()[i].scale) == float(q.quantized()[i].scale));
  }
}
