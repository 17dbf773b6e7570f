#pragma once

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "sac/common.hpp"

namespace sac {

// 8-bit-range raster held as doubles in [0, 255]; c is 1 (gray) or 3 (RGB).
struct Image {
  int h = 0, w = 0, c = 0;
  std::vector<double> px;

  Image() = default;
  Image(int h_, int w_, int c_, double fill = 0.0)
      : h(h_), w(w_), c(c_), px(static_cast<size_t>(h_) * w_ * c_, fill) {}

  double& at(int y, int x, int ch = 0) { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
  double at(int y, int x, int ch = 0) const { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
  size_t numel() const { return px.size(); }
};

namespace detail {

inline bool has_magic(const std::string& path, const unsigned char* magic, size_t n) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) return false;
  unsigned char buf[8] = {0};
  size_t got = std::fread(buf, 1, n, f);
  std::fclose(f);
  return got == n && std::memcmp(buf, magic, n) == 0;
}

inline bool is_png(const std::string& path) {
  static const unsigned char sig[4] = {0x89, 'P', 'N', 'G'};
  return has_magic(path, sig, 4);
}

inline bool is_jpeg(const std::string& path) {
  static const unsigned char sig[2] = {0xFF, 0xD8};
  return has_magic(path, sig, 2);
}

struct JpegErr {
  jpeg_error_mgr mgr;
  jmp_buf jb;
};

inline void jpeg_err_exit(j_common_ptr cinfo) {
  JpegErr* e = reinterpret_cast<JpegErr*>(cinfo->err);
  longjmp(e->jb, 1);
}

inline Image read_png(const std::string& path, int channels) {
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pi, path.c_str()))
    throw Error(Errc::io, "cannot read PNG " + path + ": " + pi.message);
  pi.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, buf.data(), 0, nullptr))
    throw Error(Errc::io, "cannot decode PNG " + path + ": " + pi.message);
  Image out(static_cast<int>(pi.height), static_cast<int>(pi.width), channels);
  for (size_t i = 0; i < buf.size(); ++i) out.px[i] = buf[i];
  return out;
}

inline Image read_jpeg(const std::string& path, int channels) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw Error(Errc::io, "cannot open " + path);
  jpeg_decompress_struct cinfo;
  JpegErr jerr;
  cinfo.err = jpeg_std_error(&jerr.mgr);
  jerr.mgr.error_exit = jpeg_err_exit;
  if (setjmp(jerr.jb)) {
    jpeg_destroy_decompress(&cinfo);
    std::fclose(f);
    throw Error(Errc::io, "cannot decode JPEG " + path);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  Image out(static_cast<int>(cinfo.output_height), static_cast<int>(cinfo.output_width), channels);
  std::vector<unsigned char> row(static_cast<size_t>(out.w) * channels);
  unsigned char* rowp = row.data();
  for (int y = 0; y < out.h; ++y) {
    jpeg_read_scanlines(&cinfo, &rowp, 1);
    for (size_t i = 0; i < row.size(); ++i) out.px[static_cast<size_t>(y) * row.size() + i] = row[i];
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  std::fclose(f);
  return out;
}

}  // namespace detail

// Decodes PNG or JPEG (sniffed from magic bytes) to the requested channel
// count, values in [0, 255].
inline Image load_image(const std::string& path, int channels = 3) {
  require(channels == 1 || channels == 3, Errc::config, "channels must be 1 or 3");
  if (detail::is_png(path)) return detail::read_png(path, channels);
  if (detail::is_jpeg(path)) return detail::read_jpeg(path, channels);
  throw Error(Errc::io, "unsupported or missing image file: " + path);
}

inline void save_png(const std::string& path, const Image& img) {
  require(img.c == 1 || img.c == 3, Errc::config, "PNG writer expects 1 or 3 channels");
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.w);
  pi.height = static_cast<png_uint_32>(img.h);
  pi.format = img.c == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(img.numel());
  for (size_t i = 0; i < buf.size(); ++i) {
    double v = std::round(img.px[i]);
    buf[i] = static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
  }
  if (!png_image_write_to_file(&pi, path.c_str(), 0, buf.data(), 0, nullptr))
    throw Error(Errc::output, "cannot write PNG " + path + ": " + pi.message);
}

// Bilinear resize, pixel centers at (i + 0.5) * scale - 0.5. Same-size calls
// reproduce the input exactly.
inline Image resize_bilinear(const Image& in, int oh, int ow) {
  require(oh >= 1 && ow >= 1, Errc::config, "target resolution must be positive");
  Image out(oh, ow, in.c);
  double sy = static_cast<double>(in.h) / oh;
  double sx = static_cast<double>(in.w) / ow;
  for (int y = 0; y < oh; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y0c = std::clamp(y0, 0, in.h - 1);
    int y1c = std::clamp(y0 + 1, 0, in.h - 1);
    for (int x = 0; x < ow; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x0c = std::clamp(x0, 0, in.w - 1);
      int x1c = std::clamp(x0 + 1, 0, in.w - 1);
      for (int ch = 0; ch < in.c; ++ch) {
        double v00 = in.at(y0c, x0c, ch), v01 = in.at(y0c, x1c, ch);
        double v10 = in.at(y1c, x0c, ch), v11 = in.at(y1c, x1c, ch);
        out.at(y, x, ch) = (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
      }
    }
  }
  return out;
}

inline Image resize_nearest(const Image& in, int oh, int ow) {
  require(oh >= 1 && ow >= 1, Errc::config, "target resolution must be positive");
  Image out(oh, ow, in.c);
  double sy = static_cast<double>(in.h) / oh;
  double sx = static_cast<double>(in.w) / ow;
  for (int y = 0; y < oh; ++y) {
    int yi = std::min(static_cast<int>(std::floor((y + 0.5) * sy)), in.h - 1);
    for (int x = 0; x < ow; ++x) {
      int xi = std::min(static_cast<int>(std::floor((x + 0.5) * sx)), in.w - 1);
      for (int ch = 0; ch < in.c; ++ch) out.at(y, x, ch) = in.at(yi, xi, ch);
    }
  }
  return out;
}

inline Image to_gray(const Image& in) {
  if (in.c == 1) return in;
  Image out(in.h, in.w, 1);
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x)
      out.at(y, x) = 0.299 * in.at(y, x, 0) + 0.587 * in.at(y, x, 1) + 0.114 * in.at(y, x, 2);
  return out;
}

}  // namespace sac
