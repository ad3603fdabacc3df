#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spikefool/common.hpp"
#include "spikefool/tensor.hpp"

namespace spikefool {

// One DVS event: timestamp in microseconds, pixel coordinates, polarity.
struct Event {
  uint64_t t = 0;
  uint32_t x = 0;
  uint32_t y = 0;
  uint32_t p = 0;  // 0 = OFF, 1 = ON
};

inline bool operator==(const Event& a, const Event& b) {
  return a.t == b.t && a.x == b.x && a.y == b.y && a.p == b.p;
}

// Events sorted non-decreasing in t, with all coordinates inside the sensor.
struct EventList {
  std::vector<Event> events;
  uint32_t width = 0;
  uint32_t height = 0;

  void sort_by_time();
  void validate() const;  // throws ValidationError
};

enum class EventFormat { csv, raw };

EventFormat event_format_from_string(const std::string& s);

// width/height = 0 means "infer from the data" (max coordinate + 1); the raw
// format carries its own dimensions and ignores the hints.
EventList load_events(const std::string& path, EventFormat format,
                      uint32_t width = 0, uint32_t height = 0);
void save_events(const EventList& events, const std::string& path,
                 EventFormat format);

struct RasterConfig {
  uint64_t duration_us = 0;
  uint32_t n_bins = 0;
  uint32_t max_per_cell = 1;
  uint32_t n_polarities = 2;

  void validate() const;
};

// Bins events in [t_start, t_start + duration_us) into a [T,P,H,W] count
// tensor, capping each voxel at max_per_cell.
Tensor rasterize(const EventList& events, const RasterConfig& cfg,
                 uint64_t t_start = 0);

// A timestamp inside bin b, as close to the bin center as integer microsecond
// resolution allows. Guaranteed to rasterize back into bin b.
uint64_t bin_center_timestamp(uint32_t bin, const RasterConfig& cfg,
                              uint64_t t_start);

// Merges the attack's raster diff back into the original event stream. Voxels
// with adv > orig gain (adv - orig) events stamped at the bin center. Voxels
// with adv < orig are ignored unless honor_removals is set, in which case one
// matching original event per decrement is deleted, latest-first.
EventList raster_to_new_events(const EventList& original,
                               const Tensor& original_raster,
                               const Tensor& adv_raster,
                               const RasterConfig& cfg, uint64_t t_start,
                               bool honor_removals = false);

// Raster file IO (magic "RAS0", u32 T,P,H,W, then T*P*H*W u8 counts, LE).
void save_raster(const Tensor& raster, const std::string& path);
Tensor load_raster(const std::string& path);

// Grayscale [1,H,W] with entries in [0,255] -> {0,1}: 0..127 -> 0, else 1.
Tensor binarize_image(const Tensor& gray);

}  // namespace spikefool
