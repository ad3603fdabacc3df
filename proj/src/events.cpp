#include "spikefool/events.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

namespace spikefool {

namespace {

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw ParseError("unexpected end of file while reading " + what);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

}  // namespace

void EventList::sort_by_time() {
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
}

void EventList::validate() const {
  uint64_t prev = 0;
  for (size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (e.x >= width || e.y >= height)
      throw ValidationError("event " + std::to_string(i) +
                            " out of sensor bounds (" + std::to_string(e.x) +
                            "," + std::to_string(e.y) + ") for " +
                            std::to_string(width) + "x" +
                            std::to_string(height));
    if (e.p > 1)
      throw ValidationError("event " + std::to_string(i) +
                            " has polarity outside {0,1}");
    if (e.t < prev) throw ValidationError("events not sorted by time");
    prev = e.t;
  }
}

EventFormat event_format_from_string(const std::string& s) {
  if (s == "csv") return EventFormat::csv;
  if (s == "raw") return EventFormat::raw;
  throw ConfigError("unknown event format '" + s + "' (expected csv or raw)");
}

namespace {

EventList load_events_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  EventList out;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,x,y,p")
    throw ParseError(path + ": expected header 't,x,y,p', got '" + line + "'");
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Event e;
    unsigned long long f[4];
    char* end = nullptr;
    const char* s = line.c_str();
    for (int i = 0; i < 4; ++i) {
      f[i] = std::strtoull(s, &end, 10);
      if (end == s)
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": malformed field " + std::to_string(i + 1));
      s = end;
      if (i < 3) {
        if (*s != ',')
          throw ParseError(path + ":" + std::to_string(lineno) +
                           ": expected ',' after field " +
                           std::to_string(i + 1));
        ++s;
      }
    }
    if (*s != '\0')
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": trailing characters");
    e.t = f[0];
    e.x = uint32_t(f[1]);
    e.y = uint32_t(f[2]);
    e.p = uint32_t(f[3]);
    out.events.push_back(e);
  }
  return out;
}

constexpr char kEventMagic[4] = {'E', 'V', 'T', '0'};

EventList load_events_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kEventMagic, 4) != 0)
    throw ParseError(path + ": bad magic (expected EVT0)");
  EventList out;
  out.width = read_u32(in, "width");
  out.height = read_u32(in, "height");
  uint32_t count = read_u32(in, "count");
  out.events.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    std::string what = "record " + std::to_string(i);
    Event e;
    e.t = read_u32(in, what);
    e.x = read_u32(in, what);
    e.y = read_u32(in, what);
    e.p = read_u32(in, what);
    out.events.push_back(e);
  }
  return out;
}

}  // namespace

EventList load_events(const std::string& path, EventFormat format,
                      uint32_t width, uint32_t height) {
  EventList out = format == EventFormat::csv ? load_events_csv(path)
                                             : load_events_raw(path);
  if (format == EventFormat::csv) {
    out.width = width;
    out.height = height;
  }
  if (out.width == 0 || out.height == 0) {
    uint32_t w = out.width, h = out.height;
    for (const Event& e : out.events) {
      w = std::max(w, e.x + 1);
      h = std::max(h, e.y + 1);
    }
    out.width = std::max(w, 1u);
    out.height = std::max(h, 1u);
  }
  out.sort_by_time();
  out.validate();
  return out;
}

void save_events(const EventList& events, const std::string& path,
                 EventFormat format) {
  if (format == EventFormat::csv) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path);
    os << "t,x,y,p\n";
    for (const Event& e : events.events)
      os << e.t << ',' << e.x << ',' << e.y << ',' << e.p << '\n';
    if (!os) throw IoError("write failed: " + path);
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os.write(kEventMagic, 4);
  write_u32(os, events.width);
  write_u32(os, events.height);
  write_u32(os, uint32_t(events.events.size()));
  for (const Event& e : events.events) {
    if (e.t > 0xffffffffull)
      throw ValidationError("timestamp exceeds raw format's u32 range");
    write_u32(os, uint32_t(e.t));
    write_u32(os, e.x);
    write_u32(os, e.y);
    write_u32(os, e.p);
  }
  if (!os) throw IoError("write failed: " + path);
}

void RasterConfig::validate() const {
  if (duration_us == 0) throw ConfigError("raster duration_us must be > 0");
  if (n_bins == 0) throw ConfigError("raster n_bins must be >= 1");
  if (max_per_cell == 0) throw ConfigError("raster max_per_cell must be >= 1");
  if (n_polarities == 0) throw ConfigError("raster n_polarities must be >= 1");
}

Tensor rasterize(const EventList& events, const RasterConfig& cfg,
                 uint64_t t_start) {
  cfg.validate();
  events.validate();
  Tensor raster({int(cfg.n_bins), int(cfg.n_polarities), int(events.height),
                 int(events.width)});
  const uint64_t t_end = t_start + cfg.duration_us;
  for (const Event& e : events.events) {
    if (e.t < t_start || e.t >= t_end) continue;  // half-open slice
    if (e.p >= cfg.n_polarities)
      throw ValidationError("event polarity exceeds n_polarities");
    uint64_t bin = (e.t - t_start) * cfg.n_bins / cfg.duration_us;
    double& cell = raster.at4(int(bin), int(e.p), int(e.y), int(e.x));
    if (cell < double(cfg.max_per_cell)) cell += 1.0;
  }
  return raster;
}

uint64_t bin_center_timestamp(uint32_t bin, const RasterConfig& cfg,
                              uint64_t t_start) {
  // First/last integer offsets that still fall into this bin.
  const uint64_t d = cfg.duration_us, T = cfg.n_bins;
  uint64_t lo = (uint64_t(bin) * d + T - 1) / T;          // ceil(b*d/T)
  uint64_t hi = ((uint64_t(bin) + 1) * d + T - 1) / T - 1;  // next bin's lo - 1
  uint64_t center = (2 * uint64_t(bin) + 1) * d / (2 * T);
  center = std::max(lo, std::min(center, hi));
  return t_start + center;
}

EventList raster_to_new_events(const EventList& original,
                               const Tensor& original_raster,
                               const Tensor& adv_raster,
                               const RasterConfig& cfg, uint64_t t_start,
                               bool honor_removals) {
  cfg.validate();
  if (!original_raster.same_shape(adv_raster))
    throw ValidationError("raster_to_new_events: raster shape mismatch");
  if (original_raster.rank() != 4)
    throw ValidationError("raster_to_new_events: rasters must be [T,P,H,W]");

  EventList out = original;
  const int T = original_raster.dim(0), P = original_raster.dim(1),
            H = original_raster.dim(2), W = original_raster.dim(3);

  std::vector<size_t> removal_order;  // indices into out.events, latest-first
  for (int b = 0; b < T; ++b) {
    for (int p = 0; p < P; ++p) {
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          double diff = adv_raster.at4(b, p, y, x) -
                        original_raster.at4(b, p, y, x);
          if (diff > 0) {
            Event e;
            e.t = bin_center_timestamp(uint32_t(b), cfg, t_start);
            e.x = uint32_t(x);
            e.y = uint32_t(y);
            e.p = uint32_t(p);
            for (int k = 0; k < int(diff); ++k) out.events.push_back(e);
          } else if (diff < 0 && honor_removals) {
            // Delete (orig - adv) matching original events, latest-first.
            int need = int(-diff);
            for (size_t i = original.events.size(); i-- > 0 && need > 0;) {
              const Event& e = original.events[i];
              if (e.t < t_start || e.t - t_start >= cfg.duration_us) continue;
              uint64_t bin = (e.t - t_start) * cfg.n_bins / cfg.duration_us;
              if (int(bin) == b && int(e.p) == p && int(e.y) == y &&
                  int(e.x) == x) {
                removal_order.push_back(i);
                --need;
              }
            }
          }
        }
      }
    }
  }

  if (!removal_order.empty()) {
    std::sort(removal_order.begin(), removal_order.end());
    for (size_t i = removal_order.size(); i-- > 0;)
      out.events.erase(out.events.begin() + long(removal_order[i]));
  }

  out.sort_by_time();
  return out;
}

constexpr char kRasterMagic[4] = {'R', 'A', 'S', '0'};

void save_raster(const Tensor& raster, const std::string& path) {
  if (raster.rank() != 4) throw ValidationError("raster must be [T,P,H,W]");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os.write(kRasterMagic, 4);
  for (int i = 0; i < 4; ++i) write_u32(os, uint32_t(raster.dim(i)));
  std::vector<unsigned char> bytes(size_t(raster.size()));
  for (int64_t i = 0; i < raster.size(); ++i) {
    double v = raster[i];
    if (v != std::floor(v) || v < 0 || v > 255)
      throw ValidationError("raster voxel not an integer count in [0,255]");
    bytes[size_t(i)] = static_cast<unsigned char>(v);
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), long(bytes.size()));
  if (!os) throw IoError("write failed: " + path);
}

Tensor load_raster(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kRasterMagic, 4) != 0)
    throw ParseError(path + ": bad magic (expected RAS0)");
  int dims[4];
  for (int& d : dims) d = int(read_u32(in, "raster header"));
  Tensor raster({dims[0], dims[1], dims[2], dims[3]});
  std::vector<unsigned char> bytes(size_t(raster.size()));
  if (!in.read(reinterpret_cast<char*>(bytes.data()), long(bytes.size())))
    throw ParseError(path + ": truncated raster payload");
  for (int64_t i = 0; i < raster.size(); ++i) raster[i] = double(bytes[size_t(i)]);
  return raster;
}

Tensor binarize_image(const Tensor& gray) {
  if (gray.rank() != 3 || gray.dim(0) != 1)
    throw ValidationError("binarize_image expects a [1,H,W] tensor");
  Tensor out(gray.shape());
  for (int64_t i = 0; i < gray.size(); ++i) {
    double v = gray[i];
    if (v < 0 || v > 255)
      throw ValidationError("binarize_image: pixel outside [0,255]");
    out[i] = v <= 127.0 ? 0.0 : 1.0;
  }
  return out;
}

}  // namespace spikefool
