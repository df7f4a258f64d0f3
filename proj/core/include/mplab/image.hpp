#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mplab/maskpool.hpp"

namespace mplab {

/// Interleaved 8-bit RGB image, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t* px(int y, int x) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* px(int y, int x) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

// Binary PPM (P6, maxval 255) and PGM (P5, maxval 255). Malformed files
// raise ParseError with the byte offset of the problem.
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& img);

/// Masks are stored as PGM with 0 = BG and 255 = FG; any other value is a
/// ValidationError("non-binary mask").
maskpool::BinaryMask read_mask_pgm(const std::filesystem::path& path);
void write_mask_pgm(const std::filesystem::path& path, const maskpool::BinaryMask& mask);

/// Aspect-preserving bilinear scale so the image covers width x height,
/// followed by a center crop. Same-size input is copied verbatim.
RgbImage resize_cover(const RgbImage& src, int width, int height);

}  // namespace mplab
