#include "smokenet/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <string>

#include "smokenet/errors.hpp"

namespace smokenet {

ImageBuffer::ImageBuffer(std::size_t width, std::size_t height,
                         std::uint8_t fill)
    : width_(width), height_(height), pixels_(width * height * 3, fill) {
  if (width == 0 || height == 0) {
    throw ContractError("image dimensions must be positive");
  }
}

ImageBuffer::ImageBuffer(std::size_t width, std::size_t height,
                         std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width == 0 || height == 0) {
    throw ContractError("image dimensions must be positive");
  }
  if (pixels_.size() != width * height * 3) {
    throw ContractError("image pixel array has " +
                        std::to_string(pixels_.size()) + " bytes, expected " +
                        std::to_string(width * height * 3));
  }
}

namespace {

class PpmHeaderParser {
 public:
  PpmHeaderParser(const std::vector<std::uint8_t>& bytes, std::string origin)
      : bytes_(bytes), origin_(std::move(origin)) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(origin_ + ": " + what + " at byte offset " +
                    std::to_string(pos_));
  }

  void expect_magic() {
    if (bytes_.size() < 2 || bytes_[0] != 'P' || bytes_[1] != '6') {
      fail("not a binary PPM (missing P6 magic)");
    }
    pos_ = 2;
  }

  std::size_t number(const char* field) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) fail(std::string("missing ") + field);
    if (!std::isdigit(bytes_[pos_])) fail(std::string("malformed ") + field);
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (v > (1u << 24)) fail(std::string(field) + " too large");
      ++pos_;
    }
    return v;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      fail("expected whitespace before pixel data");
    }
    ++pos_;
  }

  std::size_t pos() const { return pos_; }

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

  const std::vector<std::uint8_t>& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::uint8_t clamp_round(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

// Bilinear sample with edge clamping; (x, y) must lie inside the image.
double sample(const ImageBuffer& img, double x, double y, std::size_t ch) {
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const auto x0 = static_cast<std::size_t>(std::max(0.0, fx0));
  const auto y0 = static_cast<std::size_t>(std::max(0.0, fy0));
  const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
  const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
  const double ax = x - fx0;
  const double ay = y - fy0;
  const double top = img.at(x0, y0, ch) * (1.0 - ax) + img.at(x1, y0, ch) * ax;
  const double bottom =
      img.at(x0, y1, ch) * (1.0 - ax) + img.at(x1, y1, ch) * ax;
  return top * (1.0 - ay) + bottom * ay;
}

ImageBuffer resize_bilinear(const ImageBuffer& img, std::size_t width,
                            std::size_t height) {
  if (width == img.width() && height == img.height()) return img;
  ImageBuffer out(width, height);
  const double rx = static_cast<double>(img.width()) / static_cast<double>(width);
  const double ry =
      static_cast<double>(img.height()) / static_cast<double>(height);
  const double max_x = static_cast<double>(img.width() - 1);
  const double max_y = static_cast<double>(img.height() - 1);
  for (std::size_t y = 0; y < height; ++y) {
    const double sy = std::clamp((static_cast<double>(y) + 0.5) * ry - 0.5, 0.0, max_y);
    for (std::size_t x = 0; x < width; ++x) {
      const double sx =
          std::clamp((static_cast<double>(x) + 0.5) * rx - 0.5, 0.0, max_x);
      for (std::size_t c = 0; c < 3; ++c) {
        out.at(x, y, c) = clamp_round(sample(img, sx, sy, c));
      }
    }
  }
  return out;
}

}  // namespace

ImageBuffer decode_ppm(const std::vector<std::uint8_t>& bytes,
                       const std::string& origin) {
  PpmHeaderParser p(bytes, origin);
  p.expect_magic();
  const std::size_t width = p.number("width");
  const std::size_t height = p.number("height");
  const std::size_t maxval = p.number("maxval");
  if (width == 0 || height == 0) p.fail("zero image dimension");
  if (maxval != 255) p.fail("unsupported maxval " + std::to_string(maxval));
  p.single_space();
  const std::size_t need = width * height * 3;
  const std::size_t have = bytes.size() - p.pos();
  if (have < need) {
    throw DataError(origin + ": truncated pixel data at byte offset " +
                    std::to_string(bytes.size()) + " (need " +
                    std::to_string(need) + " bytes from offset " +
                    std::to_string(p.pos()) + ", have " +
                    std::to_string(have) + ")");
  }
  auto first = bytes.begin() + static_cast<std::ptrdiff_t>(p.pos());
  return ImageBuffer(width, height,
                     std::vector<std::uint8_t>(first, first + static_cast<std::ptrdiff_t>(need)));
}

std::vector<std::uint8_t> encode_ppm(const ImageBuffer& img) {
  const std::string header = "P6\n" + std::to_string(img.width()) + " " +
                             std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels().begin(), img.pixels().end());
  return out;
}

ImageBuffer load_image(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(path.string() + ": cannot open image");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return decode_ppm(bytes, path.string());
}

void save_image(const ImageBuffer& img, const std::filesystem::path& path) {
  const auto bytes = encode_ppm(img);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError(path.string() + ": cannot open for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError(path.string() + ": write failed");
}

Letterboxed letterbox_resize(const ImageBuffer& img, std::size_t target) {
  if (target == 0) throw ValidationError("letterbox target must be >= 1");
  const double w = static_cast<double>(img.width());
  const double h = static_cast<double>(img.height());
  const double t = static_cast<double>(target);
  LetterboxInfo info;
  info.scale = std::min(t / w, t / h);
  info.content_width = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(w * info.scale)), 1, target);
  info.content_height = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(h * info.scale)), 1, target);
  const std::size_t pad_x = target - info.content_width;
  const std::size_t pad_y = target - info.content_height;
  info.pad_left = pad_x / 2;
  info.pad_right = pad_x - info.pad_left;
  info.pad_top = pad_y / 2;
  info.pad_bottom = pad_y - info.pad_top;

  const ImageBuffer content =
      resize_bilinear(img, info.content_width, info.content_height);
  if (pad_x == 0 && pad_y == 0) return {content, info};

  ImageBuffer out(target, target, kFillGray);
  for (std::size_t y = 0; y < content.height(); ++y) {
    const auto src = content.pixels().begin() +
                     static_cast<std::ptrdiff_t>(y * content.width() * 3);
    const auto dst = out.pixels().begin() +
                     static_cast<std::ptrdiff_t>(
                         ((y + info.pad_top) * target + info.pad_left) * 3);
    std::copy(src, src + static_cast<std::ptrdiff_t>(content.width() * 3), dst);
  }
  return {std::move(out), info};
}

ImageBuffer rotate(const ImageBuffer& img, double degrees, std::uint8_t fill) {
  if (!std::isfinite(degrees)) throw ValidationError("rotation angle must be finite");
  const double turn = std::fmod(degrees, 360.0);
  if (turn == 0.0) return img;
  const double rad = turn * std::numbers::pi / 180.0;
  const double c = std::cos(rad);
  const double s = std::sin(rad);
  const double cx = (static_cast<double>(img.width()) - 1.0) / 2.0;
  const double cy = (static_cast<double>(img.height()) - 1.0) / 2.0;
  const double max_x = static_cast<double>(img.width() - 1);
  const double max_y = static_cast<double>(img.height() - 1);
  constexpr double kEdge = 1e-9;

  ImageBuffer out(img.width(), img.height(), fill);
  for (std::size_t y = 0; y < img.height(); ++y) {
    const double dy = static_cast<double>(y) - cy;
    for (std::size_t x = 0; x < img.width(); ++x) {
      const double dx = static_cast<double>(x) - cx;
      // Inverse map of a counter-clockwise turn in y-down coordinates.
      const double sx = c * dx - s * dy + cx;
      const double sy = s * dx + c * dy + cy;
      if (sx < -kEdge || sy < -kEdge || sx > max_x + kEdge ||
          sy > max_y + kEdge) {
        continue;
      }
      const double qx = std::clamp(sx, 0.0, max_x);
      const double qy = std::clamp(sy, 0.0, max_y);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        out.at(x, y, ch) = clamp_round(sample(img, qx, qy, ch));
      }
    }
  }
  return out;
}

ImageBuffer adjust_exposure(const ImageBuffer& img, double gain) {
  if (!(gain > 0.0) || !std::isfinite(gain)) {
    throw ValidationError("exposure gain must be positive and finite");
  }
  ImageBuffer out = img;
  for (std::uint8_t& v : out.pixels()) v = clamp_round(v * gain);
  return out;
}

ImageBuffer inject_noise(const ImageBuffer& img, double rate,
                         std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw ValidationError("noise rate must lie in [0, 1]");
  }
  ImageBuffer out = img;
  if (rate == 0.0) return out;
  std::mt19937_64 rng(seed);
  auto& px = out.pixels();
  for (std::size_t i = 0; i < out.pixel_count(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    if (u >= rate) continue;
    const std::uint8_t v = (rng() & 1u) ? 255 : 0;
    px[3 * i] = px[3 * i + 1] = px[3 * i + 2] = v;
  }
  return out;
}

Tensor to_tensor(const ImageBuffer& img) {
  const std::size_t w = img.width();
  const std::size_t h = img.height();
  Tensor t(Shape{3, h, w});
  auto out = t.data();
  const auto& px = img.pixels();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        out[(c * h + y) * w + x] = static_cast<float>(px[(y * w + x) * 3 + c]) / 255.0f;
      }
    }
  }
  return t;
}

ImageBuffer from_tensor(const Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 3) {
    throw ContractError("from_tensor expects (3,H,W), got " + t.shape().str());
  }
  const std::size_t h = t.dim(1);
  const std::size_t w = t.dim(2);
  ImageBuffer img(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        img.at(x, y, c) = clamp_round(static_cast<double>(t.at(c, y, x)) * 255.0);
      }
    }
  }
  return img;
}

}  // namespace smokenet
