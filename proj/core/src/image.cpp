#include "mplab/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace mplab {

namespace {

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Netpbm header reader: magic, then whitespace/comment separated integers.
class HeaderReader {
 public:
  HeaderReader(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes)
      : file_(path.string()), bytes_(bytes) {}

  void expect_magic(const char* magic) {
    if (bytes_.size() < 2 || bytes_[0] != magic[0] || bytes_[1] != magic[1]) {
      throw ParseError(file_, 0, std::string("expected magic ") + magic);
    }
    pos_ = 2;
  }

  int next_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) throw ParseError(file_, pos_, "truncated header");
    if (!std::isdigit(bytes_[pos_])) throw ParseError(file_, pos_, "expected a decimal integer");
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1 << 24) throw ParseError(file_, pos_, "header value too large");
      ++pos_;
    }
    return static_cast<int>(v);
  }

  // Exactly one whitespace byte separates the maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw ParseError(file_, pos_, "expected whitespace before raster");
    }
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::string file_;
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

struct Raster {
  int width;
  int height;
  std::size_t start;
};

Raster parse_header(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes,
                    const char* magic, int channels) {
  HeaderReader hr(path, bytes);
  hr.expect_magic(magic);
  const int w = hr.next_int();
  const int h = hr.next_int();
  const int maxval = hr.next_int();
  if (w <= 0 || h <= 0) throw ParseError(path.string(), 2, "image extents must be positive");
  if (maxval != 255) throw ParseError(path.string(), 2, "only maxval 255 is supported");
  const std::size_t start = hr.raster_start();
  const std::size_t need = static_cast<std::size_t>(w) * h * channels;
  if (bytes.size() < start + need) {
    throw ParseError(path.string(), bytes.size(),
                     "truncated raster: expected " + std::to_string(need) + " bytes, found " +
                         std::to_string(bytes.size() - std::min(bytes.size(), start)));
  }
  return {w, h, start};
}

void write_bytes(const std::filesystem::path& path, const std::string& header,
                 const std::uint8_t* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

RgbImage read_ppm(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  const Raster r = parse_header(path, bytes, "P6", 3);
  RgbImage img(r.width, r.height);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(r.start), img.pixels.size(),
              img.pixels.begin());
  return img;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  write_bytes(path, header, img.pixels.data(), img.pixels.size());
}

maskpool::BinaryMask read_mask_pgm(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  const Raster r = parse_header(path, bytes, "P5", 1);
  std::vector<std::uint8_t> values(static_cast<std::size_t>(r.width) * r.height);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint8_t v = bytes[r.start + i];
    if (v != 0 && v != 255) {
      throw ValidationError("non-binary mask: " + path.string() + " has value " +
                            std::to_string(v) + " at byte " + std::to_string(r.start + i));
    }
    values[i] = v ? 1 : 0;
  }
  return maskpool::BinaryMask(r.height, r.width, std::move(values));
}

void write_mask_pgm(const std::filesystem::path& path, const maskpool::BinaryMask& mask) {
  std::vector<std::uint8_t> raster(mask.size());
  const auto vals = mask.values();
  for (std::size_t i = 0; i < raster.size(); ++i) raster[i] = vals[i] ? 255 : 0;
  const std::string header =
      "P5\n" + std::to_string(mask.width()) + " " + std::to_string(mask.height()) + "\n255\n";
  write_bytes(path, header, raster.data(), raster.size());
}

RgbImage resize_cover(const RgbImage& src, int width, int height) {
  if (width <= 0 || height <= 0) throw ConfigError("resize target must be positive");
  if (src.width <= 0 || src.height <= 0) throw ConfigError("cannot resize an empty image");
  if (src.width == width && src.height == height) return src;
  const double scale = std::max(static_cast<double>(width) / src.width,
                                static_cast<double>(height) / src.height);
  const double off_x = 0.5 * (src.width * scale - width);
  const double off_y = 0.5 * (src.height * scale - height);
  RgbImage out(width, height);
  for (int y = 0; y < height; ++y) {
    const double sy = std::clamp((y + 0.5 + off_y) / scale - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double fy = sy - y0;
    for (int x = 0; x < width; ++x) {
      const double sx = std::clamp((x + 0.5 + off_x) / scale - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double fx = sx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = src.px(y0, x0)[c] * (1 - fx) + src.px(y0, x1)[c] * fx;
        const double bot = src.px(y1, x0)[c] * (1 - fx) + src.px(y1, x1)[c] * fx;
        out.px(y, x)[c] = static_cast<std::uint8_t>(std::lround(top * (1 - fy) + bot * fy));
      }
    }
  }
  return out;
}

}  // namespace mplab
