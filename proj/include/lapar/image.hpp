#pragma once

// Planar real-valued images in [0,1], 1 or 3 channels, with 8-bit PNG and
// binary PGM/PPM file support. Quantization on save is round-half-away.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

namespace lapar {

enum class ColorSpace { Gray, RGB, YCbCr };

struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  ColorSpace colorspace = ColorSpace::Gray;
  std::vector<double> pixels;  // planar: channels * height * width

  Image() = default;
  Image(int h, int w, int c, ColorSpace cs = ColorSpace::Gray, double fill = 0.0)
      : height(h), width(w), channels(c), colorspace(cs),
        pixels(static_cast<size_t>(c) * h * w, fill) {
    if (h <= 0 || w <= 0 || (c != 1 && c != 3))
      throw std::invalid_argument("Image: invalid dimensions " + std::to_string(h) + "x" +
                                  std::to_string(w) + "x" + std::to_string(c));
  }

  double& at(int c, int y, int x) {
    return pixels[(static_cast<size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return pixels[(static_cast<size_t>(c) * height + y) * width + x];
  }
  double* plane(int c) { return pixels.data() + static_cast<size_t>(c) * height * width; }
  const double* plane(int c) const {
    return pixels.data() + static_cast<size_t>(c) * height * width;
  }
  size_t plane_size() const { return static_cast<size_t>(height) * width; }

  Image channel(int c) const {
    Image out(height, width, 1, ColorSpace::Gray);
    std::copy_n(plane(c), plane_size(), out.pixels.begin());
    return out;
  }

  void clamp01() {
    for (double& v : pixels) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  }
};

inline uint8_t quantize8(double v) {
  double q = std::floor(v * 255.0 + 0.5);  // round half away (values are nonnegative)
  if (q < 0.0) q = 0.0;
  if (q > 255.0) q = 255.0;
  return static_cast<uint8_t>(q);
}

// ---- PNG -------------------------------------------------------------------

inline void save_png(const Image& img, const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("save_png: cannot open " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("save_png: libpng failure writing " + path);
  }
  png_init_io(png, fp);
  int color_type = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, img.width, img.height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<uint8_t> row(static_cast<size_t>(img.width) * img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        row[static_cast<size_t>(x) * img.channels + c] = quantize8(img.at(c, y, x));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline Image load_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("load_png: cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("load_png: libpng failure reading " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  int w = png_get_image_width(png, info);
  int h = png_get_image_height(png, info);
  int ch = png_get_channels(png, info);
  if (ch != 1 && ch != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("load_png: unsupported channel count in " + path);
  }
  Image img(h, w, ch, ch == 1 ? ColorSpace::Gray : ColorSpace::RGB);
  std::vector<uint8_t> row(static_cast<size_t>(w) * ch);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c)
        img.at(c, y, x) = row[static_cast<size_t>(x) * ch + c] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

// ---- PNM (binary PGM/PPM) --------------------------------------------------

inline void save_pnm(const Image& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_pnm: cannot open " + path);
  f << (img.channels == 1 ? "P5\n" : "P6\n") << img.width << " " << img.height << "\n255\n";
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        uint8_t v = quantize8(img.at(c, y, x));
        f.write(reinterpret_cast<const char*>(&v), 1);
      }
  if (!f) throw std::runtime_error("save_pnm: write failed for " + path);
}

inline Image load_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_pnm: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P5" && magic != "P6")
    throw std::runtime_error("load_pnm: unsupported magic '" + magic + "' in " + path);
  auto next_int = [&]() {
    int v;
    f >> std::ws;
    while (f.peek() == '#') f.ignore(1 << 20, '\n'), f >> std::ws;
    f >> v;
    return v;
  };
  int w = next_int(), h = next_int(), maxval = next_int();
  if (maxval != 255) throw std::runtime_error("load_pnm: only 8-bit files supported: " + path);
  f.ignore(1);  // single whitespace after header
  int ch = magic == "P5" ? 1 : 3;
  Image img(h, w, ch, ch == 1 ? ColorSpace::Gray : ColorSpace::RGB);
  std::vector<uint8_t> buf(static_cast<size_t>(w) * h * ch);
  f.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!f) throw std::runtime_error("load_pnm: truncated file " + path);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c)
        img.at(c, y, x) = buf[(static_cast<size_t>(y) * w + x) * ch + c] / 255.0;
  return img;
}

inline bool ends_with(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

inline void save_image(const Image& img, const std::string& path) {
  if (ends_with(path, ".pgm") || ends_with(path, ".ppm") || ends_with(path, ".pnm"))
    save_pnm(img, path);
  else
    save_png(img, path);
}

inline Image load_image(const std::string& path) {
  if (ends_with(path, ".pgm") || ends_with(path, ".ppm") || ends_with(path, ".pnm"))
    return load_pnm(path);
  return load_png(path);
}

}  // namespace lapar
