#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "error.hpp"

namespace scaleset {

// Row-major, channel-interleaved samples. channels is 1 (gray) or 3 (rgb).
struct RasterImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 1;
  std::vector<double> data;

  double at(std::uint32_t x, std::uint32_t y, std::uint32_t c = 0) const {
    return data[(std::size_t(y) * width + x) * channels + c];
  }
  double& at(std::uint32_t x, std::uint32_t y, std::uint32_t c = 0) {
    return data[(std::size_t(y) * width + x) * channels + c];
  }
  std::size_t pixel_count() const { return std::size_t(width) * height; }
};

// Labels are region ids in [0, region_count); every id occurs and every
// region is 4-connected once the map has passed through load/canonicalize.
struct LabelMap {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t region_count = 0;
  std::vector<std::uint32_t> labels;

  std::uint32_t at(std::uint32_t x, std::uint32_t y) const {
    return labels[std::size_t(y) * width + x];
  }
  std::uint32_t& at(std::uint32_t x, std::uint32_t y) {
    return labels[std::size_t(y) * width + x];
  }
};

namespace detail {

inline int pnm_next_token_char(std::istream& in) {
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (std::isspace(static_cast<unsigned char>(ch))) {
      ch = in.get();
    } else {
      break;
    }
  }
  return ch;
}

inline std::uint64_t pnm_read_uint(std::istream& in, const char* what) {
  int ch = pnm_next_token_char(in);
  if (ch == EOF) fail(errc::malformed_header, std::string("unexpected end of file reading ") + what);
  if (!std::isdigit(static_cast<unsigned char>(ch)))
    fail(errc::malformed_header, std::string("expected unsigned integer for ") + what);
  std::uint64_t v = 0;
  while (ch != EOF && std::isdigit(static_cast<unsigned char>(ch))) {
    v = v * 10 + std::uint64_t(ch - '0');
    if (v > 0xFFFFFFFFull) fail(errc::malformed_header, std::string("value out of range for ") + what);
    ch = in.get();
  }
  if (ch != EOF) in.unget();
  return v;
}

inline void put_u16_be(std::ostream& out, std::uint16_t v) {
  out.put(char(v >> 8));
  out.put(char(v & 0xFF));
}

inline void put_u32_le(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(char((v >> (8 * i)) & 0xFF));
}

inline bool get_u32_le(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
      std::uint32_t(b[3]) << 24;
  return true;
}

}  // namespace detail

// Reads P2/P3 (ascii) and P5/P6 (binary) with maxval up to 65535.
// Binary samples wider than one byte are big-endian per the format.
inline RasterImage load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_failure, "cannot open " + path);

  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (!in || m0 != 'P') fail(errc::unsupported_format, path + ": not a PNM file");
  bool ascii = (m1 == '2' || m1 == '3');
  bool binary = (m1 == '5' || m1 == '6');
  if (!ascii && !binary) fail(errc::unsupported_format, path + ": unsupported PNM variant P" + std::string(1, m1));
  std::uint32_t channels = (m1 == '3' || m1 == '6') ? 3 : 1;

  std::uint64_t w = detail::pnm_read_uint(in, "width");
  std::uint64_t h = detail::pnm_read_uint(in, "height");
  std::uint64_t maxval = detail::pnm_read_uint(in, "maxval");
  if (w == 0 || h == 0) fail(errc::malformed_header, path + ": zero image dimension");
  if (maxval == 0 || maxval > 65535) fail(errc::malformed_header, path + ": maxval out of range");

  RasterImage img;
  img.width = std::uint32_t(w);
  img.height = std::uint32_t(h);
  img.channels = channels;
  std::size_t n = std::size_t(w) * h * channels;
  img.data.resize(n);

  if (ascii) {
    for (std::size_t i = 0; i < n; ++i) {
      int ch = detail::pnm_next_token_char(in);
      if (ch == EOF) fail(errc::truncated_data, path + ": sample data ends early");
      if (!std::isdigit(static_cast<unsigned char>(ch)))
        fail(errc::malformed_header, path + ": non-numeric sample");
      std::uint64_t v = 0;
      while (ch != EOF && std::isdigit(static_cast<unsigned char>(ch))) {
        v = v * 10 + std::uint64_t(ch - '0');
        ch = in.get();
      }
      if (ch != EOF) in.unget();
      if (v > maxval) fail(errc::malformed_header, path + ": sample exceeds maxval");
      img.data[i] = double(v);
    }
  } else {
    // Header ends with exactly one whitespace byte before the raster.
    int sep = in.get();
    if (sep == EOF || !std::isspace(static_cast<unsigned char>(sep)))
      fail(errc::malformed_header, path + ": missing separator before binary data");
    if (maxval < 256) {
      std::vector<unsigned char> buf(n);
      if (!in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(n)))
        fail(errc::truncated_data, path + ": sample data ends early");
      for (std::size_t i = 0; i < n; ++i) img.data[i] = double(buf[i]);
    } else {
      std::vector<unsigned char> buf(n * 2);
      if (!in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(n * 2)))
        fail(errc::truncated_data, path + ": sample data ends early");
      for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t v = std::uint32_t(buf[2 * i]) << 8 | buf[2 * i + 1];
        if (v > maxval) fail(errc::malformed_header, path + ": sample exceeds maxval");
        img.data[i] = double(v);
      }
    }
  }
  return img;
}

// Writes binary P5/P6. Samples are rounded and clamped; maxval is 255
// unless some sample needs the 16-bit range.
inline void save_image(const RasterImage& img, const std::string& path) {
  if (img.width == 0 || img.height == 0) fail(errc::empty_input, "cannot save empty image");
  if (img.channels != 1 && img.channels != 3)
    fail(errc::invalid_config, "image must have 1 or 3 channels");

  std::uint32_t maxval = 255;
  for (double v : img.data)
    if (std::llround(v) > 255) maxval = 65535;

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io_failure, "cannot open " + path + " for writing");
  out << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.width << " " << img.height << "\n"
      << maxval << "\n";
  for (double v : img.data) {
    long long q = std::llround(v);
    if (q < 0) q = 0;
    if (q > maxval) q = maxval;
    if (maxval > 255)
      detail::put_u16_be(out, std::uint16_t(q));
    else
      out.put(char(q));
  }
  if (!out) fail(errc::io_failure, "write failed for " + path);
}

// Every pixel its own region, ids in row-major order.
inline LabelMap pixel_grid_partition(const RasterImage& img) {
  if (img.pixel_count() == 0) fail(errc::empty_input, "empty image");
  LabelMap m;
  m.width = img.width;
  m.height = img.height;
  m.region_count = std::uint32_t(img.pixel_count());
  m.labels.resize(img.pixel_count());
  for (std::size_t i = 0; i < m.labels.size(); ++i) m.labels[i] = std::uint32_t(i);
  return m;
}

// Maximal 4-connected regions of pixels with identical values in every
// channel. Region ids follow first appearance in row-major order.
inline LabelMap flat_zone_partition(const RasterImage& img) {
  if (img.pixel_count() == 0) fail(errc::empty_input, "empty image");
  LabelMap m;
  m.width = img.width;
  m.height = img.height;
  m.labels.assign(img.pixel_count(), 0xFFFFFFFFu);

  auto same = [&](std::size_t a, std::size_t b) {
    for (std::uint32_t c = 0; c < img.channels; ++c)
      if (img.data[a * img.channels + c] != img.data[b * img.channels + c]) return false;
    return true;
  };

  std::uint32_t next = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < img.pixel_count(); ++start) {
    if (m.labels[start] != 0xFFFFFFFFu) continue;
    std::uint32_t id = next++;
    m.labels[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      std::size_t p = stack.back();
      stack.pop_back();
      std::uint32_t x = std::uint32_t(p % img.width);
      std::uint32_t y = std::uint32_t(p / img.width);
      const std::size_t neigh[4] = {
          x > 0 ? p - 1 : p,
          x + 1 < img.width ? p + 1 : p,
          y > 0 ? p - img.width : p,
          y + 1 < img.height ? p + img.width : p,
      };
      for (std::size_t q : neigh) {
        if (q == p || m.labels[q] != 0xFFFFFFFFu || !same(p, q)) continue;
        m.labels[q] = id;
        stack.push_back(q);
      }
    }
  }
  m.region_count = next;
  return m;
}

// True when ids are exactly 0..region_count-1, every id occurs, and every
// region is one 4-connected blob.
inline bool is_valid_partition(const LabelMap& m) {
  if (m.width == 0 || m.height == 0 || m.labels.size() != std::size_t(m.width) * m.height)
    return false;
  if (m.region_count == 0) return false;
  for (std::uint32_t v : m.labels)
    if (v >= m.region_count) return false;

  std::vector<char> seen(m.region_count, 0);
  std::vector<char> visited(m.labels.size(), 0);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < m.labels.size(); ++start) {
    if (visited[start]) continue;
    std::uint32_t id = m.labels[start];
    if (seen[id]) return false;  // second component of the same id
    seen[id] = 1;
    visited[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      std::size_t p = stack.back();
      stack.pop_back();
      std::uint32_t x = std::uint32_t(p % m.width);
      std::uint32_t y = std::uint32_t(p / m.width);
      const std::size_t neigh[4] = {
          x > 0 ? p - 1 : p,
          x + 1 < m.width ? p + 1 : p,
          y > 0 ? p - m.width : p,
          y + 1 < m.height ? p + m.width : p,
      };
      for (std::size_t q : neigh) {
        if (q == p || visited[q] || m.labels[q] != id) continue;
        visited[q] = 1;
        stack.push_back(q);
      }
    }
  }
  for (char s : seen)
    if (!s) return false;
  return true;
}

// Splits disconnected ids into one region per component and renumbers to
// first appearance in row-major order. Valid maps pass through unchanged.
inline LabelMap canonicalize_partition(const LabelMap& in) {
  if (in.width == 0 || in.height == 0 || in.labels.empty())
    fail(errc::empty_label_map, "label map has no pixels");
  if (in.labels.size() != std::size_t(in.width) * in.height)
    fail(errc::invalid_label_map, "label buffer does not match dimensions");
  if (is_valid_partition(in)) return in;

  LabelMap out;
  out.width = in.width;
  out.height = in.height;
  out.labels.assign(in.labels.size(), 0xFFFFFFFFu);
  std::uint32_t next = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < in.labels.size(); ++start) {
    if (out.labels[start] != 0xFFFFFFFFu) continue;
    std::uint32_t orig = in.labels[start];
    std::uint32_t id = next++;
    out.labels[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      std::size_t p = stack.back();
      stack.pop_back();
      std::uint32_t x = std::uint32_t(p % in.width);
      std::uint32_t y = std::uint32_t(p / in.width);
      const std::size_t neigh[4] = {
          x > 0 ? p - 1 : p,
          x + 1 < in.width ? p + 1 : p,
          y > 0 ? p - in.width : p,
          y + 1 < in.height ? p + in.width : p,
      };
      for (std::size_t q : neigh) {
        if (q == p || out.labels[q] != 0xFFFFFFFFu || in.labels[q] != orig) continue;
        out.labels[q] = id;
        stack.push_back(q);
      }
    }
  }
  out.region_count = next;
  return out;
}

enum class label_map_format { automatic, pgm16, raw32 };

// pgm16: binary P5, maxval 65535, one big-endian sample per label.
// raw32: u32 little-endian width, height, then one u32 per pixel.
// automatic picks pgm16 while ids fit in 16 bits.
inline void save_label_map(const LabelMap& m, const std::string& path,
                           label_map_format fmt = label_map_format::automatic) {
  if (m.labels.empty() || m.width == 0 || m.height == 0)
    fail(errc::empty_label_map, "label map has no pixels");
  if (fmt == label_map_format::automatic)
    fmt = m.region_count <= 65536 ? label_map_format::pgm16 : label_map_format::raw32;
  if (fmt == label_map_format::pgm16 && m.region_count > 65536)
    fail(errc::invalid_config, "too many regions for 16-bit map");

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io_failure, "cannot open " + path + " for writing");
  if (fmt == label_map_format::pgm16) {
    out << "P5\n" << m.width << " " << m.height << "\n65535\n";
    for (std::uint32_t v : m.labels) detail::put_u16_be(out, std::uint16_t(v));
  } else {
    detail::put_u32_le(out, m.width);
    detail::put_u32_le(out, m.height);
    for (std::uint32_t v : m.labels) detail::put_u32_le(out, v);
  }
  if (!out) fail(errc::io_failure, "write failed for " + path);
}

// Auto-detects the two save formats ('P' magic vs raw header) and returns a
// canonical partition; already-valid maps keep their labels verbatim.
inline LabelMap load_label_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_failure, "cannot open " + path);

  LabelMap raw;
  int first = in.peek();
  if (first == 'P') {
    in.close();
    RasterImage img = load_image(path);
    if (img.channels != 1) fail(errc::invalid_label_map, path + ": label map must be single channel");
    raw.width = img.width;
    raw.height = img.height;
    raw.labels.resize(img.pixel_count());
    for (std::size_t i = 0; i < raw.labels.size(); ++i)
      raw.labels[i] = std::uint32_t(img.data[i]);
  } else {
    std::uint32_t w = 0, h = 0;
    if (!detail::get_u32_le(in, w) || !detail::get_u32_le(in, h))
      fail(errc::truncated_data, path + ": missing label map header");
    if (w == 0 || h == 0) fail(errc::empty_label_map, path + ": zero dimension");
    raw.width = w;
    raw.height = h;
    raw.labels.resize(std::size_t(w) * h);
    for (auto& v : raw.labels)
      if (!detail::get_u32_le(in, v)) fail(errc::truncated_data, path + ": label data ends early");
  }
  std::uint32_t maxid = 0;
  for (std::uint32_t v : raw.labels) maxid = std::max(maxid, v);
  raw.region_count = maxid + 1;
  return canonicalize_partition(raw);
}

inline void require_same_dims(const RasterImage& img, const LabelMap& m) {
  if (img.width != m.width || img.height != m.height)
    fail(errc::dimension_mismatch, "label map dimensions do not match image");
}

// Replaces every pixel with the mean value of its region.
inline RasterImage render_partition(const RasterImage& img, const LabelMap& m) {
  require_same_dims(img, m);
  std::vector<double> sum(std::size_t(m.region_count) * img.channels, 0.0);
  std::vector<double> area(m.region_count, 0.0);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    std::uint32_t id = m.labels[p];
    area[id] += 1.0;
    for (std::uint32_t c = 0; c < img.channels; ++c)
      sum[std::size_t(id) * img.channels + c] += img.data[p * img.channels + c];
  }
  RasterImage out = img;
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    std::uint32_t id = m.labels[p];
    for (std::uint32_t c = 0; c < img.channels; ++c)
      out.data[p * img.channels + c] = sum[std::size_t(id) * img.channels + c] / area[id];
  }
  return out;
}

}  // namespace scaleset
