#ifndef AACPRED_IMAGE_HPP
#define AACPRED_IMAGE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <png.h>
#include <Eigen/Dense>

#include "aacpred/encoder.hpp"
#include "aacpred/error.hpp"
#include "aacpred/rng.hpp"

namespace aacpred {

/// Interleaved 8-bit RGB raster.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

// Decodes any PNG and flattens transparency onto white.
inline RgbImage decode_png_on_white(std::string_view bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw Error(Errc::missing_image, std::string("not a readable PNG: ") + img.message);
  img.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, rgba.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw Error(Errc::missing_image, "PNG decode failed: " + msg);
  }
  RgbImage out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * 3);
  for (std::size_t i = 0, n = static_cast<std::size_t>(out.width) * out.height; i < n; ++i) {
    const unsigned a = rgba[i * 4 + 3];
    for (int c = 0; c < 3; ++c)
      out.pixels[i * 3 + c] = static_cast<std::uint8_t>((rgba[i * 4 + c] * a + 255u * (255u - a) + 127u) / 255u);
  }
  return out;
}

/// Bilinear resize with half-pixel centres.
inline RgbImage resize_bilinear(const RgbImage& src, int w, int h) {
  if (src.width <= 0 || src.height <= 0) throw Error(Errc::missing_image, "empty image");
  RgbImage out;
  out.width = w;
  out.height = h;
  out.pixels.resize(static_cast<std::size_t>(w) * h * 3);
  const double sx = static_cast<double>(src.width) / w, sy = static_cast<double>(src.height) / h;
  for (int y = 0; y < h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, src.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, src.width - 1);
      const double tx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = src.at(x0, y0, c) * (1 - tx) + src.at(x1, y0, c) * tx;
        const double bot = src.at(x0, y1, c) * (1 - tx) + src.at(x1, y1, c) * tx;
        out.pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(top * (1 - ty) + bot * ty));
      }
    }
  }
  return out;
}

// ViT-style front end without the transformer: 224x224 input, 16x16 patches,
// a fixed seeded projection per patch through tanh, mean over the 196 patches.
// Pixels are scaled to [-1, 1].
class PatchImageEncoder final : public ImageEncoderHandle {
 public:
  static constexpr int kSide = 224;
  static constexpr int kPatch = 16;

  PatchImageEncoder(std::size_t dimension, std::uint64_t seed) : proj_(static_cast<Eigen::Index>(dimension), kPatch * kPatch * 3) {
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(proj_.cols()));
    for (Eigen::Index r = 0; r < proj_.rows(); ++r)
      for (Eigen::Index c = 0; c < proj_.cols(); ++c) proj_(r, c) = static_cast<float>(standard_normal(rng) * scale);
  }

  std::size_t dimension() const override { return static_cast<std::size_t>(proj_.rows()); }

  Vec encode_image(std::string_view bytes) const override {
    const auto img = resize_bilinear(decode_png_on_white(bytes), kSide, kSide);
    constexpr int grid = kSide / kPatch;
    Eigen::MatrixXf patches(kPatch * kPatch * 3, grid * grid);
    for (int py = 0; py < grid; ++py)
      for (int px = 0; px < grid; ++px) {
        Eigen::Index k = 0;
        for (int y = 0; y < kPatch; ++y)
          for (int x = 0; x < kPatch; ++x)
            for (int c = 0; c < 3; ++c)
              patches(k++, py * grid + px) = img.at(px * kPatch + x, py * kPatch + y, c) / 127.5f - 1.0f;
      }
    return (proj_ * patches).array().tanh().matrix().rowwise().mean();
  }

 private:
  Eigen::MatrixXf proj_;
};

}  // namespace aacpred

#endif  // AACPRED_IMAGE_HPP
