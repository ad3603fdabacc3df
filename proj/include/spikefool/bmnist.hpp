#pragma once

#include <string>

#include "spikefool/synth.hpp"

namespace spikefool {

// Binarized MNIST from the raw IDX files (train-images-idx3-ubyte etc. in
// dir, or dir/raw). Pixels 0..127 map to 0, 128..255 to 1; rasters come out
// as [1,1,28,28]. subsample in (0,1] keeps a deterministic stride subset.
bool bmnist_present(const std::string& dir);
Dataset load_bmnist_split(const std::string& dir, bool train,
                          double subsample = 1.0);

}  // namespace spikefool
