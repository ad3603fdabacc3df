#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spikefool/tensor.hpp"

namespace spikefool {

// Labeled raster dataset held in memory. Rasters are [T,P,H,W].
struct Dataset {
  std::vector<Tensor> rasters;
  std::vector<int> labels;
  int n_classes = 0;

  size_t size() const { return rasters.size(); }
};

// Desk-scale stand-in for the event-camera benchmarks: moving-bar classes
// whose direction pairs (0/1 and 2/3) produce identical time-summed frames,
// so they can only be told apart through temporal order.
struct SynthSpec {
  int n_classes = 2;
  int height = 16;
  int width = 16;
  int n_bins = 10;  // T
  int n_train = 128;
  int n_test = 64;
  double noise_rate = 0.0;

  void validate() const;
};

struct SynthDataset {
  SynthSpec spec;
  uint64_t seed = 0;
  Dataset train;
  Dataset test;
};

SynthDataset synth_dataset(const SynthSpec& spec, uint64_t seed);

// Directory layout: meta.json plus train/ and test/ with one RAS0 file per
// sample and a labels.csv (filename,label).
void save_dataset(const SynthDataset& ds, const std::string& dir);
SynthDataset load_dataset(const std::string& dir);

}  // namespace spikefool
