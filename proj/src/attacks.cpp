#include "spikefool/attacks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace spikefool {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<double> onehot(int k, int n) {
  std::vector<double> v(size_t(n), 0.0);
  v[size_t(k)] = 1.0;
  return v;
}

Tensor round_clip(const Tensor& x, double lo, double hi) {
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.size(); ++i)
    out[i] = std::min(hi, std::max(lo, std::round(x[i])));
  return out;
}

}  // namespace

void SpikeFoolConfig::validate() const {
  if (eta < 0.0) throw ConfigError("spikefool: eta must be >= 0");
  if (lambda < 1.0) throw ConfigError("spikefool: lambda must be >= 1");
  if (lower >= upper) throw ConfigError("spikefool: need lower < upper");
  if (max_outer_iters < 1 || max_deepfool_iters < 1)
    throw ConfigError("spikefool: iteration caps must be >= 1");
}

void CdPgdConfig::validate() const {
  if (n_steps < 0) throw ConfigError("cd_pgd: n_steps must be >= 0");
  if (step_size <= 0.0) throw ConfigError("cd_pgd: step_size must be > 0");
  if (max_flips < 1) throw ConfigError("cd_pgd: max_flips must be >= 1");
}

void ProbPgdConfig::validate() const {
  if (temperature <= 0.0) throw ConfigError("prob_pgd: temperature must be > 0");
  if (n_mc < 1) throw ConfigError("prob_pgd: n_mc must be >= 1");
  if (n_steps < 0) throw ConfigError("prob_pgd: n_steps must be >= 0");
  if (step_size <= 0.0) throw ConfigError("prob_pgd: step_size must be > 0");
  if (p_clip <= 0.0 || p_clip >= 0.5)
    throw ConfigError("prob_pgd: p_clip must be in (0, 0.5)");
}

void PatchTrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("patch: epochs must be >= 0");
  if (max_steps_per_sample < 1)
    throw ConfigError("patch: max_steps_per_sample must be >= 1");
  if (step_size <= 0.0) throw ConfigError("patch: step_size must be > 0");
  if (confidence_threshold <= 0.0 || confidence_threshold >= 1.0)
    throw ConfigError("patch: confidence_threshold must be in (0,1)");
}

// ---------------------------------------------------------------------------
// DeepFool

DeepFoolResult deepfool(AttackTarget& target, const Tensor& x, double eta,
                        int max_iters, double overshoot, int ref_label) {
  const int n_classes = target.num_classes();
  DeepFoolResult res;
  res.x_boundary = x;

  std::vector<double> z = target.forward(res.x_boundary, true);
  const int k0 = ref_label >= 0 ? ref_label : argmax_label(z);
  if (argmax_label(z) != k0) {
    // Already past the boundary: zero perturbation, no normal yet.
    res.success = true;
    res.normal = zeros_like(x);
    return res;
  }

  for (int it = 0; it < max_iters; ++it) {
    // Linearize every competitor boundary f_k - f_{k0} around the iterate.
    Tensor grad_k0 = target.input_gradient(onehot(k0, n_classes));
    double best_ratio = 0.0;
    double best_fp = 0.0, best_wnorm2 = 0.0;
    Tensor best_w;
    bool found = false;
    for (int k = 0; k < n_classes; ++k) {
      if (k == k0) continue;
      Tensor w = target.input_gradient(onehot(k, n_classes));
      for (int64_t i = 0; i < w.size(); ++i) w[i] -= grad_k0[i];
      const double wnorm2 = dot(w, w);
      if (wnorm2 == 0.0) continue;
      const double fp = z[size_t(k)] - z[size_t(k0)];
      const double ratio = std::abs(fp) / std::sqrt(wnorm2);
      if (!found || ratio < best_ratio) {
        found = true;
        best_ratio = ratio;
        best_fp = fp;
        best_wnorm2 = wnorm2;
        best_w = std::move(w);
      }
    }
    if (!found)
      throw DegenerateGradientError(
          "deepfool: all class gradients vanished (flat surrogate region)");

    res.normal = best_w;
    // r = overshoot * |f'| / ||w||^2 * w, then eta-clamped.
    double scale = overshoot * std::abs(best_fp) / best_wnorm2;
    double rnorm = scale * std::sqrt(best_wnorm2);
    if (rnorm < eta)
      scale = eta / std::sqrt(best_wnorm2);  // rescale r to norm eta
    for (int64_t i = 0; i < best_w.size(); ++i)
      res.x_boundary[i] += scale * best_w[i];

    ++res.iterations;
    z = target.forward(res.x_boundary, true);
    if (argmax_label(z) != k0) {
      res.success = true;
      return res;
    }
  }
  return res;  // not converged; caller still gets the last iterate + normal
}

// ---------------------------------------------------------------------------
// Sparse linear solver

LinearSolverResult linear_solver(const Tensor& x, const Tensor& x_target,
                                 const Tensor& w, double lower, double upper) {
  if (!x.same_shape(x_target) || !x.same_shape(w))
    throw ValidationError("linear_solver: shape mismatch");
  double wnorm = l2_norm(w);
  if (wnorm == 0.0) throw ValidationError("linear_solver: w must be nonzero");

  LinearSolverResult res;
  res.x = x;
  double residual = 0.0;
  for (int64_t i = 0; i < x.size(); ++i)
    residual += w[i] * (x[i] - x_target[i]);
  const double tol = 1e-10 * (1.0 + std::abs(residual));
  if (std::abs(residual) <= tol) return res;  // already on the hyperplane
  const double sign0 = residual > 0.0 ? 1.0 : -1.0;

  std::vector<int64_t> order(size_t(x.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return std::abs(w[a]) > std::abs(w[b]);
  });

  for (int64_t d : order) {
    if (w[d] == 0.0) break;  // sorted, so the rest are zero too
    double cand = res.x[d] - residual / w[d];
    cand = std::min(upper, std::max(lower, cand));
    residual += w[d] * (cand - res.x[d]);
    res.x[d] = cand;
    if (std::abs(residual) <= tol || residual * sign0 < 0.0) return res;
  }
  res.saturated = true;  // box exhausted; best effort
  return res;
}

// ---------------------------------------------------------------------------
// SpikeFool

AttackResult spikefool(AttackTarget& target, const Tensor& x, int label,
                       const SpikeFoolConfig& cfg) {
  cfg.validate();
  if (!x.integer_valued())
    throw ValidationError("spikefool: input raster must be integer-valued");

  CountingTarget counting(target);
  const auto t0 = Clock::now();
  AttackResult res;
  res.original_label = label;
  res.x_adv = x;

  int pred = argmax_label(counting.forward(x, false));
  if (pred != label) {
    res.success = true;
    res.adversarial_label = pred;
    res.queries = counting.queries();
    res.elapsed_s = seconds_since(t0);
    return res;
  }
  res.adversarial_label = label;

  Tensor x_i = x;
  for (int outer = 0; outer < cfg.max_outer_iters; ++outer) {
    DeepFoolResult df;
    try {
      df = deepfool(counting, x_i, cfg.eta, cfg.max_deepfool_iters,
                    cfg.deepfool_overshoot, label);
    } catch (const DegenerateGradientError& e) {
      res.diagnostic = e.what();
      break;
    }
    if (l2_norm(df.normal) == 0.0) {
      // deepfool returned without ever computing a boundary (the iterate was
      // already misclassified); round it and let the query below decide.
      x_i = round_clip(x_i, cfg.lower, cfg.upper);
    } else {
      // Overshoot the boundary point by lambda, project sparsely, and
      // re-discretize. Rounding only once per outer iteration keeps the
      // continuous progress made inside deepfool.
      Tensor x_overshoot(x_i.shape());
      for (int64_t i = 0; i < x_i.size(); ++i)
        x_overshoot[i] = x_i[i] + cfg.lambda * (df.x_boundary[i] - x_i[i]);
      LinearSolverResult ls =
          linear_solver(x_i, x_overshoot, df.normal, cfg.lower, cfg.upper);
      x_i = round_clip(ls.x, cfg.lower, cfg.upper);
    }

    pred = argmax_label(counting.forward(x_i, false));
    if (pred != label) {
      res.success = true;
      break;
    }
  }

  res.x_adv = x_i;
  res.adversarial_label = pred;
  res.l0 = l0_distance(res.x_adv, x);
  res.queries = counting.queries();
  res.elapsed_s = seconds_since(t0);
  return res;
}

// ---------------------------------------------------------------------------
// Continuous-discrete PGD

namespace {

// Greedy finalization shared by cd_pgd and prob_pgd: flip bits of x in
// descending |score| order until the prediction leaves `label`.
void greedy_flip_finalize(CountingTarget& counting, const Tensor& x, int label,
                          const std::vector<double>& score, int max_flips,
                          AttackResult& res) {
  std::vector<int64_t> order;
  order.reserve(size_t(x.size()));
  for (int64_t i = 0; i < x.size(); ++i)
    if (score[size_t(i)] != 0.0) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return score[size_t(a)] > score[size_t(b)];
  });
  if (int64_t(order.size()) > max_flips) order.resize(size_t(max_flips));

  Tensor cur = x;
  int64_t flips = 0;
  for (int64_t d : order) {
    cur[d] = 1.0 - cur[d];
    ++flips;
    int pred = argmax_label(counting.forward(cur, false));
    if (pred != label) {
      res.success = true;
      res.adversarial_label = pred;
      break;
    }
  }
  res.x_adv = res.success ? cur : x;
  res.l0 = res.success ? flips : 0;
}

}  // namespace

AttackResult cd_pgd(AttackTarget& target, const Tensor& x, int label,
                    const CdPgdConfig& cfg) {
  cfg.validate();
  if (!x.integer_valued())
    throw ValidationError("cd_pgd: input raster must be binary");

  CountingTarget counting(target);
  const auto t0 = Clock::now();
  AttackResult res;
  res.original_label = label;
  res.x_adv = x;

  int pred = argmax_label(counting.forward(x, false));
  if (pred != label) {
    res.success = true;
    res.adversarial_label = pred;
    res.queries = counting.queries();
    res.elapsed_s = seconds_since(t0);
    return res;
  }
  res.adversarial_label = label;

  // Phase 1: straight-through ascent. Gradients are taken on the rounded
  // image but applied to the continuous copy.
  Tensor x_cont = x;
  for (int step = 0; step < cfg.n_steps; ++step) {
    Tensor rounded = round_clip(x_cont, 0.0, 1.0);
    std::vector<double> z = counting.forward(rounded, true);
    Tensor g = counting.input_gradient(cross_entropy_grad(z, label));
    for (int64_t i = 0; i < x_cont.size(); ++i) {
      const double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
      x_cont[i] = std::min(1.0, std::max(0.0, x_cont[i] + cfg.step_size * s));
    }
  }

  // Phase 2: greedy flips ordered by |x_cont - x|.
  std::vector<double> score(size_t(x.size()));
  for (int64_t i = 0; i < x.size(); ++i)
    score[size_t(i)] = std::abs(x_cont[i] - x[i]);
  greedy_flip_finalize(counting, x, label, score, cfg.max_flips, res);

  res.queries = counting.queries();
  res.elapsed_s = seconds_since(t0);
  return res;
}

// ---------------------------------------------------------------------------
// Probabilistic PGD

double binary_concrete_sample(double p, double r, double temperature) {
  const double noise = std::log(r) - std::log1p(-r);
  const double logit_p = std::log(p) - std::log1p(-p);
  const double pre = (noise + logit_p) / temperature;
  return 1.0 / (1.0 + std::exp(-pre));
}

Tensor prob_pgd_step_gradient(AttackTarget& target, const Tensor& p_adv,
                              int label, const ProbPgdConfig& cfg, Rng& rng) {
  Tensor avg = zeros_like(p_adv);
  for (int mc = 0; mc < cfg.n_mc; ++mc) {
    Tensor x_sample(p_adv.shape());
    for (int64_t i = 0; i < p_adv.size(); ++i) {
      double r = rng.uniform();
      while (r <= 0.0) r = rng.uniform();  // log(0) guard
      x_sample[i] = binary_concrete_sample(p_adv[i], r, cfg.temperature);
    }
    std::vector<double> z = target.forward(x_sample, true);
    Tensor g = target.input_gradient(cross_entropy_grad(z, label));
    // Chain rule through the reparameterization:
    // d x / d p = x(1-x) / (T p (1-p)).
    for (int64_t i = 0; i < g.size(); ++i) {
      const double dxdp = x_sample[i] * (1.0 - x_sample[i]) /
                          (cfg.temperature * p_adv[i] * (1.0 - p_adv[i]));
      avg[i] += g[i] * dxdp;
    }
  }
  for (int64_t i = 0; i < avg.size(); ++i) avg[i] /= double(cfg.n_mc);
  return avg;
}

AttackResult prob_pgd(AttackTarget& target, const Tensor& x, int label,
                      const ProbPgdConfig& cfg, uint64_t seed) {
  cfg.validate();
  if (!x.integer_valued())
    throw ValidationError("prob_pgd: input raster must be binary");

  CountingTarget counting(target);
  const auto t0 = Clock::now();
  AttackResult res;
  res.original_label = label;
  res.x_adv = x;

  int pred = argmax_label(counting.forward(x, false));
  if (pred != label) {
    res.success = true;
    res.adversarial_label = pred;
    res.queries = counting.queries();
    res.elapsed_s = seconds_since(t0);
    return res;
  }
  res.adversarial_label = label;

  Rng rng(mix_seed(seed, 0x70726f62 /* "prob" */));
  Tensor p_adv(x.shape());
  for (int64_t i = 0; i < x.size(); ++i)
    p_adv[i] = std::min(0.95, std::max(0.05, x[i]));

  for (int step = 0; step < cfg.n_steps; ++step) {
    Tensor g = prob_pgd_step_gradient(counting, p_adv, label, cfg, rng);
    for (int64_t i = 0; i < p_adv.size(); ++i) {
      const double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
      p_adv[i] = std::min(1.0 - cfg.p_clip,
                          std::max(cfg.p_clip, p_adv[i] + cfg.step_size * s));
    }
  }

  // Thresholding p_adv at 0.5 corresponds to flipping every coordinate whose
  // probability moved past even odds; the greedy pass sorts all coordinates
  // by |p_adv - x| so those flips happen first.
  std::vector<double> score(size_t(x.size()));
  for (int64_t i = 0; i < x.size(); ++i)
    score[size_t(i)] = std::abs(p_adv[i] - x[i]);
  greedy_flip_finalize(counting, x, label, score, cfg.max_flips, res);

  res.queries = counting.queries();
  res.elapsed_s = seconds_since(t0);
  return res;
}

// ---------------------------------------------------------------------------
// Adversarial patches

void active_region(const Tensor& raster, int& y0, int& x0, int& h, int& w) {
  if (raster.rank() != 4) throw ValidationError("active_region expects [T,P,H,W]");
  const int T = raster.dim(0), P = raster.dim(1), H = raster.dim(2),
            W = raster.dim(3);
  int ymin = H, ymax = -1, xmin = W, xmax = -1;
  for (int t = 0; t < T; ++t)
    for (int p = 0; p < P; ++p)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          if (raster.at4(t, p, y, x) > 0.0) {
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
          }
  if (ymax < 0) {  // empty sample: fall back to the full frame
    y0 = 0;
    x0 = 0;
    h = H;
    w = W;
    return;
  }
  y0 = ymin;
  x0 = xmin;
  h = ymax - ymin + 1;
  w = xmax - xmin + 1;
}

Tensor apply_patch(const Tensor& x, const Patch& patch, int pos_y, int pos_x) {
  if (x.rank() != 4 || patch.data.rank() != 4)
    throw ValidationError("apply_patch expects [T,P,H,W] tensors");
  const int T = x.dim(0), P = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int ph = patch.data.dim(2), pw = patch.data.dim(3);
  if (patch.data.dim(0) != T || patch.data.dim(1) != P)
    throw ValidationError("apply_patch: time/polarity shape mismatch");
  if (pos_y < 0 || pos_x < 0 || pos_y + ph > H || pos_x + pw > W)
    throw ValidationError("apply_patch: patch does not fit at this position");
  Tensor out = x;
  for (int t = 0; t < T; ++t)
    for (int p = 0; p < P; ++p)
      for (int dy = 0; dy < ph; ++dy)
        for (int dx = 0; dx < pw; ++dx) {
          double& cell = out.at4(t, p, pos_y + dy, pos_x + dx);
          cell = std::max(cell, patch.data.at4(t, p, dy, dx));
        }
  return out;
}

Patch random_patch(int T, int n_polarities, int patch_h, int patch_w,
                   int target_label, uint64_t seed) {
  Patch patch;
  patch.data = Tensor({T, n_polarities, patch_h, patch_w});
  Rng rng(mix_seed(seed, 0x72706174 /* "rpat" */));
  for (int64_t i = 0; i < patch.data.size(); ++i)
    patch.data[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  patch.target_label = target_label;
  return patch;
}

void draw_patch_position(Rng& rng, int region_y0, int region_x0, int region_h,
                         int region_w, int patch_h, int patch_w, int frame_h,
                         int frame_w, int& pos_y, int& pos_x) {
  const int span_y = std::max(0, region_h - patch_h);
  const int span_x = std::max(0, region_w - patch_w);
  pos_y = region_y0 + int(rng.below(uint64_t(span_y) + 1));
  pos_x = region_x0 + int(rng.below(uint64_t(span_x) + 1));
  pos_y = std::max(0, std::min(pos_y, frame_h - patch_h));
  pos_x = std::max(0, std::min(pos_x, frame_w - patch_w));
}

Patch train_patch(AttackTarget& target, const Dataset& train_set,
                  int target_label, int patch_h, int patch_w,
                  const PatchTrainConfig& cfg, uint64_t seed) {
  cfg.validate();
  if (train_set.size() == 0) throw ConfigError("train_patch: empty train set");
  size_t eligible = 0;
  for (int label : train_set.labels)
    if (label != target_label) ++eligible;
  if (eligible == 0)
    throw ConfigError("train_patch: no training samples outside target class");

  const Tensor& first = train_set.rasters[0];
  const int T = first.dim(0), P = first.dim(1), H = first.dim(2),
            W = first.dim(3);
  if (patch_h > H || patch_w > W)
    throw ConfigError("train_patch: patch larger than the frame");

  Patch patch = random_patch(T, P, patch_h, patch_w, target_label, seed);
  patch.region_y0 = cfg.region_y0;
  patch.region_x0 = cfg.region_x0;
  patch.region_h = cfg.region_h > 0 ? cfg.region_h : H;
  patch.region_w = cfg.region_w > 0 ? cfg.region_w : W;

  Tensor shadow = patch.data;  // continuous copy driving the updates
  Rng rng(mix_seed(seed, 0x74706174 /* "tpat" */));
  const double log_threshold = std::log(cfg.confidence_threshold);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t si = 0; si < train_set.size(); ++si) {
      if (train_set.labels[si] == target_label) continue;
      const Tensor& x = train_set.rasters[si];

      int ry0 = patch.region_y0, rx0 = patch.region_x0;
      int rh = patch.region_h, rw = patch.region_w;
      if (cfg.placement == PatchPlacement::sample_active_region)
        active_region(x, ry0, rx0, rh, rw);
      int pos_y, pos_x;
      draw_patch_position(rng, ry0, rx0, rh, rw, patch_h, patch_w, H, W,
                          pos_y, pos_x);

      for (int step = 0; step < cfg.max_steps_per_sample; ++step) {
        Tensor patched = apply_patch(x, patch, pos_y, pos_x);
        std::vector<double> z = target.forward(patched, true);
        std::vector<double> ls = log_softmax(z);
        if (ls[size_t(target_label)] >= log_threshold) break;

        // Ascend the target log-softmax: d/dz = onehot(target) - softmax(z).
        std::vector<double> up = softmax(z);
        for (double& v : up) v = -v;
        up[size_t(target_label)] += 1.0;
        Tensor g = target.input_gradient(up);

        // The union with x blocks the patch wherever x already spikes, so
        // those entries get no gradient.
        for (int t = 0; t < T; ++t)
          for (int p = 0; p < P; ++p)
            for (int dy = 0; dy < patch_h; ++dy)
              for (int dx = 0; dx < patch_w; ++dx) {
                if (x.at4(t, p, pos_y + dy, pos_x + dx) > 0.0) continue;
                const double gv = g.at4(t, p, pos_y + dy, pos_x + dx);
                const double s = gv > 0.0 ? 1.0 : (gv < 0.0 ? -1.0 : 0.0);
                double& cell = shadow.at4(t, p, dy, dx);
                cell = std::min(1.0, std::max(0.0, cell + cfg.step_size * s));
              }
        for (int64_t i = 0; i < patch.data.size(); ++i)
          patch.data[i] = std::round(shadow[i]);
      }
    }
  }
  for (int64_t i = 0; i < patch.data.size(); ++i)
    patch.data[i] = std::round(shadow[i]);
  return patch;
}

// ---------------------------------------------------------------------------
// Patch file IO (magic "PAT0")

namespace {

constexpr char kPatchMagic[4] = {'P', 'A', 'T', '0'};

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
    throw ParseError("patch file truncated");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

}  // namespace

void save_patch(const Patch& patch, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os.write(kPatchMagic, 4);
  write_u32(os, uint32_t(patch.target_label));
  write_u32(os, uint32_t(patch.region_y0));
  write_u32(os, uint32_t(patch.region_x0));
  write_u32(os, uint32_t(patch.region_h));
  write_u32(os, uint32_t(patch.region_w));
  for (int i = 0; i < 4; ++i) write_u32(os, uint32_t(patch.data.dim(i)));
  for (int64_t i = 0; i < patch.data.size(); ++i) {
    unsigned char b = patch.data[i] != 0.0 ? 1 : 0;
    os.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!os) throw IoError("write failed: " + path);
}

Patch load_patch(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kPatchMagic, 4) != 0)
    throw ParseError(path + ": bad magic (expected PAT0)");
  Patch patch;
  patch.target_label = int(read_u32(is));
  patch.region_y0 = int(read_u32(is));
  patch.region_x0 = int(read_u32(is));
  patch.region_h = int(read_u32(is));
  patch.region_w = int(read_u32(is));
  int dims[4];
  for (int& d : dims) d = int(read_u32(is));
  patch.data = Tensor({dims[0], dims[1], dims[2], dims[3]});
  for (int64_t i = 0; i < patch.data.size(); ++i) {
    unsigned char b;
    if (!is.read(reinterpret_cast<char*>(&b), 1))
      throw ParseError(path + ": truncated patch payload");
    patch.data[i] = b ? 1.0 : 0.0;
  }
  return patch;
}

}  // namespace spikefool
