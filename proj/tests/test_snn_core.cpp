#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "net_builders.hpp"
#include "oracle_scalar_snn.hpp"
#include "spikefool/network.hpp"
#include "test_util.hpp"

using namespace spikefool;
using sftest::TempDir;

namespace {

// Single IAF neuron driven by a scripted input current.
struct TinyIaf {
  IafLayer layer{LayerSpec::spiking_iaf(1.0)};
  Tensor step(double current) {
    Tensor x({1});
    x[0] = current;
    return layer.step(x, false);
  }
};

Network one_hot_linear_net(int n, double scale) {
  NetworkSpec spec;
  spec.mode = NetMode::spiking;
  spec.in_polarities = 1;
  spec.in_height = 1;
  spec.in_width = n;
  spec.n_classes = n;
  spec.layers.push_back(LayerSpec::flatten_spec());
  spec.layers.push_back(LayerSpec::linear(n, n));
  spec.layers.push_back(LayerSpec::spiking_iaf(1.0));
  Network net(spec, 0);
  auto* lin = dynamic_cast<LinearLayer*>(&net.layer(1));
  lin->weight.fill(0.0);
  for (int i = 0; i < n; ++i) lin->weight[int64_t(i) * n + i] = scale;
  return net;
}

}  // namespace

TEST_CASE("iaf_step integrates, caps at one spike, resets by subtraction") {
  SUBCASE("0.6 twice: no spike then spike, residual 0.2") {
    TinyIaf n;
    Tensor s1 = n.step(0.6);
    CHECK(s1[0] == 0.0);
    Tensor s2 = n.step(0.6);
    CHECK(s2[0] == 1.0);
    CHECK(n.layer.membrane()[0] == doctest::Approx(0.2).epsilon(1e-12));
  }

  SUBCASE("zero input leaves the membrane untouched, no spikes") {
    TinyIaf n;
    n.step(0.3);
    for (int i = 0; i < 5; ++i) {
      Tensor s = n.step(0.0);
      CHECK(s[0] == 0.0);
    }
    CHECK(n.layer.membrane()[0] == doctest::Approx(0.3));
  }

  SUBCASE("input 2.5: one spike, v=1.5, second spike on zero input") {
    TinyIaf n;
    Tensor s1 = n.step(2.5);
    CHECK(s1[0] == 1.0);
    CHECK(n.layer.membrane()[0] == doctest::Approx(1.5));
    Tensor s2 = n.step(0.0);
    CHECK(s2[0] == 1.0);
    CHECK(n.layer.membrane()[0] == doctest::Approx(0.5));
  }

  SUBCASE("non-finite input is rejected") {
    TinyIaf n;
    Tensor bad({1});
    bad[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(n.layer.step(bad, false), NumericError);
  }
}

TEST_CASE("non-leaky conservation: total spikes = floor(total charge / theta)") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    TinyIaf n;
    double total = 0.0;
    int spikes = 0;
    const int T = 3 + int(rng.below(20));
    for (int t = 0; t < T; ++t) {
      // inputs below theta so the single-spike cap never binds twice in a row
      const double cur = rng.uniform(0.0, 0.99);
      total += cur;
      spikes += int(n.step(cur)[0]);
    }
    CHECK(spikes == int(std::floor(total)));
  }
}

TEST_CASE("forward: zero raster gives zero counts; threshold-exact one-hot") {
  Network net = one_hot_linear_net(3, 1.0);  // W = theta * I
  Tensor zero({4, 1, 1, 3});
  std::vector<double> counts = net.forward(zero);
  for (double c : counts) CHECK(c == 0.0);

  Tensor onehot({1, 1, 1, 3});
  onehot[1] = 1.0;  // class 1 at t=0
  counts = net.forward(onehot);
  CHECK(counts[0] == 0.0);
  CHECK(counts[1] == 1.0);  // pre-activation reaches theta exactly
  CHECK(counts[2] == 0.0);
}

TEST_CASE("forward matches the scalar per-neuron oracle bit-exactly") {
  int tested = 0;
  for (uint64_t seed = 0; tested < 120; ++seed) {
    sftest::RandomNetInstance inst = sftest::random_spiking_instance(seed);
    std::vector<double> got = inst.net.forward(inst.input);
    std::vector<double> want = sftest::oracle_forward(inst.net, inst.input);
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == want[i]);
    ++tested;
  }
  CHECK(tested == 120);
}

TEST_CASE("forward determinism: identical runs give identical counts") {
  sftest::RandomNetInstance inst = sftest::random_spiking_instance(99);
  std::vector<double> a = inst.net.forward(inst.input);
  std::vector<double> b = inst.net.forward(inst.input);
  CHECK(a == b);
}

TEST_CASE("analog forward equals dense frame computation and requires T=1") {
  sftest::RandomNetInstance inst = sftest::random_analog_instance(5, false);
  std::vector<double> z = inst.net.forward(inst.input);
  CHECK(z.size() == size_t(inst.net.n_classes()));

  Tensor t2({2, inst.input.dim(1), inst.input.dim(2), inst.input.dim(3)});
  CHECK_THROWS_AS(inst.net.forward(t2), ValidationError);

  std::vector<double> want = sftest::oracle_forward(inst.net, inst.input);
  for (size_t i = 0; i < z.size(); ++i)
    CHECK(z[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("backward: zero upstream gives zero gradients everywhere") {
  sftest::RandomNetInstance inst = sftest::random_spiking_instance(7);
  inst.net.forward(inst.input, true);
  Tensor g = inst.net.backward(
      std::vector<double>(size_t(inst.net.n_classes()), 0.0), true);
  for (int64_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
  for (Tensor* gp : inst.net.gradients())
    for (int64_t i = 0; i < gp->size(); ++i) CHECK((*gp)[i] == 0.0);
}

TEST_CASE("backward: flat surrogate region gives zero input gradient") {
  // Strongly negative drive keeps v_pre outside the triangular surrogate's
  // support (0, 2*theta), so input gradients vanish identically.
  NetworkSpec spec;
  spec.mode = NetMode::spiking;
  spec.in_polarities = 1;
  spec.in_height = 1;
  spec.in_width = 2;
  spec.n_classes = 2;
  spec.layers.push_back(LayerSpec::flatten_spec());
  spec.layers.push_back(LayerSpec::linear(2, 2));
  spec.layers.push_back(LayerSpec::spiking_iaf(1.0));
  Network net(spec, 0);
  auto* lin = dynamic_cast<LinearLayer*>(&net.layer(1));
  lin->weight.fill(-0.5);

  Tensor x({3, 1, 1, 2});
  x.fill(1.0);
  net.forward(x, true);
  Tensor g = net.backward({1.0, -1.0});
  for (int64_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("gradcheck: analog networks match central finite differences") {
  Rng rng(13);
  int tested = 0;
  for (uint64_t seed = 0; tested < 25 && seed < 400; ++seed) {
    sftest::RandomNetInstance inst = sftest::random_analog_instance(seed);
    std::vector<double> up = sftest::random_upstream(inst.net.n_classes(), rng);
    sftest::GradCheckResult res = sftest::gradcheck(inst.net, inst.input, up);
    if (!res.margins_ok) continue;
    CHECK(res.max_rel_err < 1e-4);
    ++tested;
  }
  CHECK(tested == 25);
}

TEST_CASE("gradcheck: relaxed spiking networks match finite differences") {
  Rng rng(29);
  int tested = 0;
  for (uint64_t seed = 0; tested < 25 && seed < 600; ++seed) {
    sftest::RandomNetInstance inst = sftest::random_spiking_instance(seed);
    inst.net.set_relaxed_spikes(true);
    // continuous inputs exercise the smooth primitive away from its kinks
    Rng drng(mix_seed(seed, 0x72656c78));
    for (int64_t i = 0; i < inst.input.size(); ++i)
      inst.input[i] = drng.uniform(0.0, 1.0);
    std::vector<double> up = sftest::random_upstream(inst.net.n_classes(), rng);
    sftest::GradCheckResult res = sftest::gradcheck(inst.net, inst.input, up);
    if (!res.margins_ok) continue;
    CHECK(res.max_rel_err < 1e-4);
    ++tested;
  }
  CHECK(tested == 25);
}

TEST_CASE("logits_and_label tie-breaks to the lowest index") {
  CHECK(argmax_label({3, 5, 5}) == 1);
  CHECK(argmax_label({0, 0, 0}) == 0);
  CHECK(argmax_label({0, 7, 2}) == 1);
}

TEST_CASE("softmax losses: stabilized values") {
  CHECK(log_softmax({0.0, 0.0})[0] == doctest::Approx(-std::log(2.0)));
  CHECK(log_softmax({10.0, 0.0})[0] ==
        doctest::Approx(-std::log(1.0 + std::exp(-10.0))));
  // uniform counts over 11 classes: CE = ln 11 for any label
  std::vector<double> uniform(11, 3.0);
  for (int y = 0; y < 11; ++y)
    CHECK(cross_entropy(uniform, y) == doctest::Approx(std::log(11.0)));
  // huge logits do not overflow
  CHECK(std::isfinite(log_softmax({1e4, -1e4})[1]));
}

TEST_CASE("model file round trip preserves topology and weights") {
  TempDir dir("model_io");
  sftest::RandomNetInstance inst = sftest::random_spiking_instance(3);
  const std::string p = dir.str() + "/m.snn";
  save_model(inst.net, p);
  Network back = load_model(p);
  CHECK(back.spec().layers.size() == inst.net.spec().layers.size());
  CHECK(back.mode() == NetMode::spiking);

  // f32 storage: forward counts must agree after one save/load cycle
  save_model(back, p + "2");
  Network back2 = load_model(p + "2");
  std::vector<double> a = back.forward(inst.input);
  std::vector<double> b = back2.forward(inst.input);
  CHECK(a == b);
}

TEST_CASE("analog nets reject spiking layers and vice versa") {
  NetworkSpec spec;
  spec.mode = NetMode::analog;
  spec.in_polarities = 1;
  spec.in_height = 2;
  spec.in_width = 2;
  spec.n_classes = 2;
  spec.layers.push_back(LayerSpec::flatten_spec());
  spec.layers.push_back(LayerSpec::linear(4, 2));
  spec.layers.push_back(LayerSpec::spiking_iaf());
  CHECK_THROWS_AS(Network(spec, 0), ValidationError);

  spec.mode = NetMode::spiking;
  spec.layers.pop_back();  // no spiking layer at all
  CHECK_THROWS_AS(Network(spec, 0), ValidationError);
}

TEST_CASE("fold_batchnorm reproduces eval-mode outputs") {
  NetworkSpec spec;
  spec.mode = NetMode::analog;
  spec.in_polarities = 2;
  spec.in_height = 6;
  spec.in_width = 6;
  spec.n_classes = 3;
  spec.layers.push_back(LayerSpec::conv2d(2, 4, 3, 1, 1));
  spec.layers.push_back(LayerSpec::batchnorm(4));
  spec.layers.push_back(LayerSpec::relu_spec());
  spec.layers.push_back(LayerSpec::flatten_spec());
  spec.layers.push_back(LayerSpec::linear(4 * 6 * 6, 3, true));
  Network net(spec, 17);

  // give the running stats non-trivial values via a few training forwards
  Rng rng(4);
  net.set_training(true);
  for (int i = 0; i < 5; ++i) {
    Tensor x({1, 2, 6, 6});
    for (int64_t k = 0; k < x.size(); ++k) x[k] = rng.normal();
    net.forward(x);
  }
  net.set_training(false);

  Network folded = fold_batchnorm(net);
  CHECK(folded.spec().layers.size() == spec.layers.size() - 1);
  for (int i = 0; i < 10; ++i) {
    Tensor x({1, 2, 6, 6});
    for (int64_t k = 0; k < x.size(); ++k) x[k] = rng.normal();
    std::vector<double> a = net.forward(x);
    std::vector<double> b = folded.forward(x);
    for (size_t k = 0; k < a.size(); ++k)
      CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-10));
  }
}
