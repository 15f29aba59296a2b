#include "vfd/frontends/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "vfd/errors.hpp"

namespace vfd::frontends {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void require_face_shape(const num::Tensor& pixels) {
  if (pixels.shape() != num::Shape{kFaceChannels, kFaceSize, kFaceSize}) {
    throw InputError("face image must be 3x224x224, got " + num::to_string(pixels.shape()));
  }
}

void require_image(const num::Tensor& image) {
  if (image.rank() != 3) {
    throw InputError("image must be [C x H x W], got " + num::to_string(image.shape()));
  }
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

FaceImage normalize_face(const num::Tensor& pixels) {
  require_face_shape(pixels);
  FaceImage face;
  face.pixels = num::Tensor(pixels.shape());
  const std::size_t plane = kFaceSize * kFaceSize;
  for (std::size_t c = 0; c < kFaceChannels; ++c) {
    const double mu = face.normalization.mean[c];
    const double sd = face.normalization.stddev[c];
    for (std::size_t i = 0; i < plane; ++i) {
      const double v = pixels[c * plane + i];
      if (!(v >= 0.0 && v <= 1.0)) {
        throw InputError("pixel value " + std::to_string(v) + " outside [0, 1]");
      }
      face.pixels[c * plane + i] = (v - mu) / sd;
    }
  }
  return face;
}

num::Tensor denormalize_face(const FaceImage& face) {
  require_face_shape(face.pixels);
  num::Tensor out(face.pixels.shape());
  const std::size_t plane = kFaceSize * kFaceSize;
  for (std::size_t c = 0; c < kFaceChannels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      out[c * plane + i] =
          face.pixels[c * plane + i] * face.normalization.stddev[c] + face.normalization.mean[c];
    }
  }
  return out;
}

num::Tensor resize_bilinear(const num::Tensor& image, std::size_t height, std::size_t width) {
  require_image(image);
  const std::size_t channels = image.shape()[0];
  const std::size_t in_h = image.shape()[1];
  const std::size_t in_w = image.shape()[2];
  if (in_h == height && in_w == width) return image.detach();
  num::Tensor out(num::Shape{channels, height, width});
  // Pixel-center alignment.
  const double sy = static_cast<double>(in_h) / static_cast<double>(height);
  const double sx = static_cast<double>(in_w) / static_cast<double>(width);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                   static_cast<double>(in_h - 1));
      const auto y0 = static_cast<std::size_t>(fy);
      const std::size_t y1 = std::min(y0 + 1, in_h - 1);
      const double wy = fy - static_cast<double>(y0);
      for (std::size_t x = 0; x < width; ++x) {
        const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                     static_cast<double>(in_w - 1));
        const auto x0 = static_cast<std::size_t>(fx);
        const std::size_t x1 = std::min(x0 + 1, in_w - 1);
        const double wx = fx - static_cast<double>(x0);
        const double* plane = image.data() + c * in_h * in_w;
        const double top = plane[y0 * in_w + x0] * (1 - wx) + plane[y0 * in_w + x1] * wx;
        const double bottom = plane[y1 * in_w + x0] * (1 - wx) + plane[y1 * in_w + x1] * wx;
        out[(c * height + y) * width + x] = top * (1 - wy) + bottom * wy;
      }
    }
  }
  return out;
}

num::Tensor read_vfdi(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open image file " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16 || std::memcmp(p, "VFDI", 4) != 0) {
    throw FormatError(path.string() + " is not a VFDI image");
  }
  const std::size_t height = read_u32(p + 4);
  const std::size_t width = read_u32(p + 8);
  const std::size_t channels = read_u32(p + 12);
  if (height == 0 || width == 0 || channels == 0) {
    throw FormatError(path.string() + ": zero image dimension");
  }
  const std::size_t count = height * width * channels;
  if (bytes.size() != 16 + count) {
    throw FormatError(path.string() + ": payload holds " + std::to_string(bytes.size() - 16) +
                      " bytes, header implies " + std::to_string(count));
  }
  num::Tensor out(num::Shape{channels, height, width});
  for (std::size_t i = 0; i < count; ++i) out[i] = static_cast<double>(p[16 + i]) / 255.0;
  return out;
}

void write_vfdi(const std::filesystem::path& path, const num::Tensor& pixels) {
  require_image(pixels);
  std::string out = "VFDI";
  put_u32(out, static_cast<std::uint32_t>(pixels.shape()[1]));
  put_u32(out, static_cast<std::uint32_t>(pixels.shape()[2]));
  put_u32(out, static_cast<std::uint32_t>(pixels.shape()[0]));
  for (double v : pixels.values()) out.push_back(static_cast<char>(quantize(v)));
  std::ofstream file(path, std::ios::binary);
  if (!file) throw InputError("cannot write image file " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

num::Tensor read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw InputError("cannot open image file " + path.string());
  unsigned char signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw FormatError(path.string() + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("libpng initialization failed");
  }
  std::vector<unsigned char> buffer;
  std::size_t height = 0;
  std::size_t width = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + ": corrupt PNG data");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  height = png_get_image_height(png, info);
  width = png_get_image_width(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  buffer.resize(row_bytes * height);
  std::vector<png_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y) rows[y] = buffer.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  if (row_bytes != width * 3) throw FormatError(path.string() + ": unexpected PNG layout");
  num::Tensor out(num::Shape{3, height, width});
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        out[(c * height + y) * width + x] = buffer[y * row_bytes + x * 3 + c] / 255.0;
      }
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const num::Tensor& pixels) {
  require_image(pixels);
  if (pixels.shape()[0] != 3) throw InputError("write_png expects 3 channels");
  const std::size_t height = pixels.shape()[1];
  const std::size_t width = pixels.shape()[2];
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw InputError("cannot write image file " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("libpng initialization failed");
  }
  std::vector<unsigned char> buffer(height * width * 3);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        buffer[(y * width + x) * 3 + c] = quantize(pixels[(c * height + y) * width + x]);
      }
    }
  }
  std::vector<png_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y) rows[y] = buffer.data() + y * width * 3;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("failed writing PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

FaceImage load_face(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw InputError("cannot open image file " + path.string());
  char magic[4] = {};
  probe.read(magic, 4);
  probe.close();
  num::Tensor pixels = std::memcmp(magic, "VFDI", 4) == 0 ? read_vfdi(path) : read_png(path);
  if (pixels.shape()[0] != kFaceChannels) {
    throw InputError(path.string() + ": face image needs 3 channels, got " +
                     std::to_string(pixels.shape()[0]));
  }
  return normalize_face(resize_bilinear(pixels, kFaceSize, kFaceSize));
}

}  // namespace vfd::frontends
