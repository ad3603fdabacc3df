#include "spikefool/synth.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "spikefool/common.hpp"
#include "spikefool/events.hpp"
#include "spikefool/rng.hpp"

namespace spikefool {

namespace fs = std::filesystem;
using nlohmann::json;

void SynthSpec::validate() const {
  if (height < 4 || width < 4 || n_bins < 4)
    throw ConfigError("synth: height, width and n_bins must all be >= 4");
  if (n_classes < 2) throw ConfigError("synth: n_classes must be >= 2");
  if (n_classes > 8) throw ConfigError("synth: at most 8 bar classes defined");
  if (n_train < 1 || n_test < 1)
    throw ConfigError("synth: n_train and n_test must be >= 1");
  if (noise_rate < 0.0 || noise_rate > 1.0)
    throw ConfigError("synth: noise_rate must lie in [0,1]");
}

namespace {

// Stream labels for per-sample RNGs. Geometry is shared across classes at the
// same within-class index, which is what makes classes 0/1 (and 2/3) exact
// time-reversals of each other sample for sample.
enum : uint64_t {
  kGeomTrain = 11,
  kGeomTest = 12,
  kNoiseTrain = 1000,
  kNoiseTest = 2000,
};

struct BarGeometry {
  int sweep_start = 0;  // first column (or row) of the sweep
  int span_start = 0;   // where the bar segment begins along its length
  int span_len = 0;
};

BarGeometry draw_geometry(Rng& rng, int extent_sweep, int extent_span) {
  BarGeometry g;
  g.sweep_start = int(rng.below(uint64_t(extent_sweep)));
  g.span_len = extent_span / 2 + int(rng.below(uint64_t(extent_span / 2) + 1));
  g.span_len = std::min(g.span_len, extent_span);
  g.span_start = int(rng.below(uint64_t(extent_span - g.span_len + 1)));
  return g;
}

// Classes: 0/1 vertical bar sweeping right/left, 2/3 horizontal bar sweeping
// down/up, 4..7 diagonal bars sweeping right/left in both orientations. Bars
// are two pixels thick and fire both polarity channels, so per-voxel input
// weights stay small after training (one flipped voxel moves membranes by
// well under one threshold, like the dense full-scale benchmarks).
Tensor render_sample(const SynthSpec& spec, int cls, const BarGeometry& g,
                     Rng& noise_rng, double noise_rate) {
  const int T = spec.n_bins, H = spec.height, W = spec.width;
  Tensor raster({T, 2, H, W});
  const bool reversed = (cls % 2) == 1;
  const int family = cls / 2;  // 0 vertical, 1 horizontal, 2/3 diagonal

  auto mark = [&](int t, int y, int x) {
    raster.at4(t, 0, y, x) = 1.0;
    raster.at4(t, 1, y, x) = 1.0;
  };

  for (int t = 0; t < T; ++t) {
    const int step = reversed ? T - 1 - t : t;
    switch (family) {
      case 0: {
        int x = (g.sweep_start + step) % W;
        for (int y = g.span_start; y < g.span_start + g.span_len && y < H; ++y) {
          mark(t, y, x);
          mark(t, y, (x + 1) % W);
        }
        break;
      }
      case 1: {
        int y = (g.sweep_start + step) % H;
        for (int x = g.span_start; x < g.span_start + g.span_len && x < W; ++x) {
          mark(t, y, x);
          mark(t, (y + 1) % H, x);
        }
        break;
      }
      default: {
        // Diagonal stroke anchored at the sweep column.
        int x0 = (g.sweep_start + step) % W;
        for (int k = 0; k < g.span_len; ++k) {
          int y = (g.span_start + k) % H;
          int x = family == 2 ? (x0 + k) % W : (x0 + W - (k % W)) % W;
          mark(t, y, x);
          mark(t, y, (x + 1) % W);
        }
        break;
      }
    }
  }

  if (noise_rate > 0.0) {
    for (int64_t i = 0; i < raster.size(); ++i)
      if (noise_rng.bernoulli(noise_rate)) raster[i] = 1.0 - raster[i];
  }
  return raster;
}

Dataset make_split(const SynthSpec& spec, uint64_t seed, int n_samples,
                   uint64_t geom_stream, uint64_t noise_stream) {
  Dataset out;
  out.n_classes = spec.n_classes;
  for (int i = 0; i < n_samples; ++i) {
    const int cls = i % spec.n_classes;
    const uint64_t within = uint64_t(i / spec.n_classes);
    const int family = cls / 2;
    const int extent_sweep = family == 1 ? spec.height : spec.width;
    const int extent_span = family == 1 ? spec.width : spec.height;
    Rng geom_rng(mix_seed(seed, geom_stream, within));
    Rng noise_rng(mix_seed(seed, noise_stream + uint64_t(cls), within));
    BarGeometry g = draw_geometry(geom_rng, extent_sweep, extent_span);
    out.rasters.push_back(
        render_sample(spec, cls, g, noise_rng, spec.noise_rate));
    out.labels.push_back(cls);
  }
  return out;
}

}  // namespace

SynthDataset synth_dataset(const SynthSpec& spec, uint64_t seed) {
  spec.validate();
  SynthDataset ds;
  ds.spec = spec;
  ds.seed = seed;
  ds.train = make_split(spec, seed, spec.n_train, kGeomTrain, kNoiseTrain);
  ds.test = make_split(spec, seed, spec.n_test, kGeomTest, kNoiseTest);
  return ds;
}

namespace {

void save_split(const Dataset& split, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream labels(dir / "labels.csv");
  if (!labels) throw IoError("cannot write " + (dir / "labels.csv").string());
  labels << "filename,label\n";
  char name[32];
  for (size_t i = 0; i < split.size(); ++i) {
    std::snprintf(name, sizeof name, "raster_%06zu.ras", i);
    save_raster(split.rasters[i], (dir / name).string());
    labels << name << ',' << split.labels[i] << '\n';
  }
}

Dataset load_split(const fs::path& dir, int n_classes) {
  Dataset out;
  out.n_classes = n_classes;
  std::ifstream labels(dir / "labels.csv");
  if (!labels) throw IoError("cannot open " + (dir / "labels.csv").string());
  std::string line;
  if (!std::getline(labels, line) || line != "filename,label")
    throw ParseError((dir / "labels.csv").string() +
                     ": expected header 'filename,label'");
  while (std::getline(labels, line)) {
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ParseError((dir / "labels.csv").string() + ": malformed row '" +
                       line + "'");
    std::string fname = line.substr(0, comma);
    int label = std::stoi(line.substr(comma + 1));
    if (label < 0 || label >= n_classes)
      throw ValidationError("label out of range in " + (dir / "labels.csv").string());
    out.rasters.push_back(load_raster((dir / fname).string()));
    out.labels.push_back(label);
  }
  return out;
}

}  // namespace

void save_dataset(const SynthDataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  json meta;
  meta["schema_version"] = 1;
  meta["kind"] = "raster_dataset";
  meta["seed"] = ds.seed;
  meta["n_classes"] = ds.spec.n_classes;
  meta["height"] = ds.spec.height;
  meta["width"] = ds.spec.width;
  meta["n_bins"] = ds.spec.n_bins;
  meta["n_train"] = ds.spec.n_train;
  meta["n_test"] = ds.spec.n_test;
  meta["noise_rate"] = ds.spec.noise_rate;
  std::ofstream mf(fs::path(dir) / "meta.json");
  if (!mf) throw IoError("cannot write meta.json in " + dir);
  mf << meta.dump(2) << '\n';
  save_split(ds.train, fs::path(dir) / "train");
  save_split(ds.test, fs::path(dir) / "test");
}

SynthDataset load_dataset(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "meta.json");
  if (!mf) throw IoError("cannot open " + dir + "/meta.json");
  json meta = json::parse(mf, nullptr, true);
  SynthDataset ds;
  ds.seed = meta.value("seed", uint64_t(0));
  ds.spec.n_classes = meta.at("n_classes").get<int>();
  ds.spec.height = meta.at("height").get<int>();
  ds.spec.width = meta.at("width").get<int>();
  ds.spec.n_bins = meta.at("n_bins").get<int>();
  ds.spec.n_train = meta.value("n_train", 0);
  ds.spec.n_test = meta.value("n_test", 0);
  ds.spec.noise_rate = meta.value("noise_rate", 0.0);
  ds.train = load_split(fs::path(dir) / "train", ds.spec.n_classes);
  ds.test = load_split(fs::path(dir) / "test", ds.spec.n_classes);
  return ds;
}

}  // namespace spikefool
