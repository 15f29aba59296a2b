#pragma once

#include <array>
#include <cstddef>
#include <filesystem>

#include "vfd/numerics/tensor.hpp"

namespace vfd::frontends {

inline constexpr std::size_t kFaceChannels = 3;
inline constexpr std::size_t kFaceSize = 224;

struct ChannelNormalization {
  std::array<double, kFaceChannels> mean{0.5, 0.5, 0.5};
  std::array<double, kFaceChannels> stddev{0.5, 0.5, 0.5};
};

struct FaceImage {
  num::Tensor pixels;  // [3 x 224 x 224], normalized
  ChannelNormalization normalization;
};

// Maps [0,1] pixels to [-1,1] per channel; pixels must be [3 x 224 x 224].
FaceImage normalize_face(const num::Tensor& pixels);
num::Tensor denormalize_face(const FaceImage& face);

// Bilinear resize of a [C x H x W] image.
num::Tensor resize_bilinear(const num::Tensor& image, std::size_t height, std::size_t width);

// Raw planar image: "VFDI", u32 height, u32 width, u32 channels (all
// little-endian), then channels*height*width bytes in channel-major order.
num::Tensor read_vfdi(const std::filesystem::path& path);
void write_vfdi(const std::filesystem::path& path, const num::Tensor& pixels);

// 8-bit PNG decoded to [3 x H x W] in [0,1] (gray, palette and alpha are
// converted to RGB).
num::Tensor read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const num::Tensor& pixels);

// Dispatches on the file signature, then resizes to 224 x 224 if needed.
FaceImage load_face(const std::filesystem::path& path);

}  // namespace vfd::frontends
