#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "smokenet/tensor.hpp"

namespace smokenet {

inline constexpr std::uint8_t kFillGray = 114;

// Interleaved 8-bit RGB, row-major (H, W, 3).
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(std::size_t width, std::size_t height, std::uint8_t fill = 0);
  ImageBuffer(std::size_t width, std::size_t height,
              std::vector<std::uint8_t> pixels);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t pixel_count() const { return width_ * height_; }

  const std::vector<std::uint8_t>& pixels() const { return pixels_; }
  std::vector<std::uint8_t>& pixels() { return pixels_; }

  std::uint8_t at(std::size_t x, std::size_t y, std::size_t channel) const {
    return pixels_[(y * width_ + x) * 3 + channel];
  }
  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t channel) {
    return pixels_[(y * width_ + x) * 3 + channel];
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// Binary PPM (P6, maxval 255). Errors carry the byte offset of the problem.
ImageBuffer decode_ppm(const std::vector<std::uint8_t>& bytes,
                       const std::string& origin = "<memory>");
std::vector<std::uint8_t> encode_ppm(const ImageBuffer& img);

ImageBuffer load_image(const std::filesystem::path& path);
void save_image(const ImageBuffer& img, const std::filesystem::path& path);

struct LetterboxInfo {
  double scale = 1.0;
  std::size_t content_width = 0;
  std::size_t content_height = 0;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;
  std::size_t pad_top = 0;
  std::size_t pad_bottom = 0;
};

struct Letterboxed {
  ImageBuffer image;
  LetterboxInfo info;
};

// Aspect-preserving bilinear fit into target x target, padded with gray 114.
Letterboxed letterbox_resize(const ImageBuffer& img, std::size_t target);

// Rotation about the image centre, counter-clockwise for positive degrees.
ImageBuffer rotate(const ImageBuffer& img, double degrees,
                   std::uint8_t fill = kFillGray);

// v -> clamp(floor(v * gain + 0.5), 0, 255) per channel.
ImageBuffer adjust_exposure(const ImageBuffer& img, double gain);

// Each pixel independently, with probability `rate`, becomes pure white or
// pure black (even odds).
ImageBuffer inject_noise(const ImageBuffer& img, double rate,
                         std::uint64_t seed);

// (3, H, W) with values v / 255.
Tensor to_tensor(const ImageBuffer& img);
// Inverse of to_tensor: round(v * 255), clamped.
ImageBuffer from_tensor(const Tensor& t);

}  // namespace smokenet
