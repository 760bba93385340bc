#include "pf/image.hpp"

#include <png.h>
// jpeglib.h expects these to be declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <fstream>
#include <iterator>

#include "pf/error.hpp"

namespace pf {
namespace {

bool is_png(std::span<const std::uint8_t> b) {
  return b.size() >= 8 && png_sig_cmp(const_cast<png_bytep>(b.data()), 0, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> b) { return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF; }

RgbImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw InvalidInput(std::string("cannot decode PNG: ") + img.message);
  img.format = PNG_FORMAT_RGB;
  RgbImage out(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw InvalidInput("cannot decode PNG: " + msg);
  }
  return out;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_fail(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// No C++ objects with destructors may live between setjmp and longjmp here.
bool decode_jpeg_raw(std::span<const std::uint8_t> bytes, RgbImage& out, std::string& error) {
  jpeg_decompress_struct cinfo{};
  JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_fail;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    error = err.message;
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = static_cast<int>(cinfo.output_width);
  out.height = static_cast<int>(cinfo.output_height);
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = reinterpret_cast<JSAMPROW>(out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width);
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

}  // namespace

RgbImage::RgbImage(int w, int h, Rgb8 fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(std::max(w, 0)) * std::max(h, 0), fill) {}

RgbImage decode_image(std::span<const std::uint8_t> bytes) {
  static_assert(sizeof(Rgb8) == 3, "Rgb8 must be tightly packed for codec buffers");
  if (is_png(bytes)) return decode_png(bytes);
  if (is_jpeg(bytes)) {
    RgbImage out;
    std::string error;
    if (!decode_jpeg_raw(bytes, out, error)) throw InvalidInput("cannot decode JPEG: " + error);
    return out;
  }
  throw InvalidInput("unsupported image format (expected PNG or JPEG)");
}

RgbImage load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_image(bytes);
  } catch (const InvalidInput& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

std::string encode_png(const RgbImage& image) {
  if (image.empty()) throw InvalidInput("cannot encode an empty image");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0, nullptr))
    throw IoError(std::string("cannot encode PNG: ") + img.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr))
    throw IoError(std::string("cannot encode PNG: ") + img.message);
  out.resize(size);
  return out;
}

void save_png(const RgbImage& image, const std::filesystem::path& path) {
  const std::string bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<double> resize_plane(std::span<const double> src, int src_w, int src_h, int dst_w, int dst_h) {
  if (src.size() != static_cast<std::size_t>(src_w) * src_h || dst_w <= 0 || dst_h <= 0)
    throw InvalidInput("resize_plane: bad dimensions");
  std::vector<double> out(static_cast<std::size_t>(dst_w) * dst_h);
  const double sx = static_cast<double>(src_w) / dst_w;
  const double sy = static_cast<double>(src_h) / dst_h;
  for (int y = 0; y < dst_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src_h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src_h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < dst_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src_w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src_w - 1);
      const double wx = fx - x0;
      const double top = src[y0 * src_w + x0] * (1 - wx) + src[y0 * src_w + x1] * wx;
      const double bot = src[y1 * src_w + x0] * (1 - wx) + src[y1 * src_w + x1] * wx;
      out[static_cast<std::size_t>(y) * dst_w + x] = top * (1 - wy) + bot * wy;
    }
  }
  return out;
}

RgbImage resize_bilinear(const RgbImage& image, int width, int height) {
  if (image.width == width && image.height == height) return image;
  RgbImage out(width, height);
  std::vector<double> plane(image.pixels.size());
  for (int ch = 0; ch < 3; ++ch) {
    for (std::size_t i = 0; i < plane.size(); ++i) {
      const Rgb8& p = image.pixels[i];
      plane[i] = ch == 0 ? p.r : ch == 1 ? p.g : p.b;
    }
    const auto res = resize_plane(plane, image.width, image.height, width, height);
    for (std::size_t i = 0; i < res.size(); ++i) {
      const auto v = static_cast<std::uint8_t>(std::lround(std::clamp(res[i], 0.0, 255.0)));
      (ch == 0 ? out.pixels[i].r : ch == 1 ? out.pixels[i].g : out.pixels[i].b) = v;
    }
  }
  return out;
}

}  // namespace pf
