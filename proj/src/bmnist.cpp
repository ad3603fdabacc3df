#include "spikefool/bmnist.hpp"

#include <filesystem>
#include <fstream>

#include "spikefool/common.hpp"
#include "spikefool/events.hpp"

namespace spikefool {

namespace fs = std::filesystem;

namespace {

fs::path find_idx_dir(const std::string& dir) {
  for (const fs::path base : {fs::path(dir), fs::path(dir) / "raw"}) {
    if (fs::exists(base / "train-images-idx3-ubyte")) return base;
  }
  return {};
}

uint32_t read_u32_be(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw ParseError("unexpected end of IDX file while reading " + what);
  return uint32_t(b[0]) << 24 | uint32_t(b[1]) << 16 | uint32_t(b[2]) << 8 |
         uint32_t(b[3]);
}

}  // namespace

bool bmnist_present(const std::string& dir) {
  return !find_idx_dir(dir).empty();
}

Dataset load_bmnist_split(const std::string& dir, bool train,
                          double subsample) {
  if (subsample <= 0.0 || subsample > 1.0)
    throw ConfigError("bmnist: subsample must be in (0,1]");
  fs::path base = find_idx_dir(dir);
  if (base.empty()) throw IoError("MNIST IDX files not found under " + dir);
  const std::string stem = train ? "train" : "t10k";
  std::ifstream imgs(base / (stem + "-images-idx3-ubyte"), std::ios::binary);
  std::ifstream labels(base / (stem + "-labels-idx1-ubyte"), std::ios::binary);
  if (!imgs || !labels)
    throw IoError("cannot open MNIST " + stem + " files under " + base.string());

  if (read_u32_be(imgs, "image magic") != 0x803)
    throw ParseError("bad magic in MNIST image file");
  const uint32_t n = read_u32_be(imgs, "count");
  const uint32_t rows = read_u32_be(imgs, "rows");
  const uint32_t cols = read_u32_be(imgs, "cols");
  if (read_u32_be(labels, "label magic") != 0x801)
    throw ParseError("bad magic in MNIST label file");
  if (read_u32_be(labels, "label count") != n)
    throw ParseError("MNIST image/label count mismatch");

  const uint32_t stride = uint32_t(std::max(1.0, 1.0 / subsample));
  Dataset out;
  out.n_classes = 10;
  std::vector<unsigned char> buf(size_t(rows) * cols);
  for (uint32_t i = 0; i < n; ++i) {
    if (!imgs.read(reinterpret_cast<char*>(buf.data()), long(buf.size())))
      throw ParseError("truncated MNIST image file");
    char lab;
    if (!labels.read(&lab, 1)) throw ParseError("truncated MNIST label file");
    if (i % stride != 0) continue;
    Tensor gray({1, int(rows), int(cols)});
    for (size_t k = 0; k < buf.size(); ++k) gray[int64_t(k)] = double(buf[k]);
    Tensor bin = binarize_image(gray);
    Tensor raster({1, 1, int(rows), int(cols)});
    for (int64_t k = 0; k < bin.size(); ++k) raster[k] = bin[k];
    out.rasters.push_back(std::move(raster));
    out.labels.push_back(int(lab));
  }
  return out;
}

}  // namespace spikefool
