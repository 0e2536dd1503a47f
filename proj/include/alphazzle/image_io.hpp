#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "alphazzle/error.hpp"
#include "alphazzle/image.hpp"
#include "alphazzle/puzzle_env.hpp"

namespace alphazzle {

namespace detail {

inline std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace detail

inline RasterImage load_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw Error(ErrorKind::Io, "cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  RasterImage out(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, out.rgb.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorKind::Io, "cannot decode PNG " + path.string() + ": " + image.message);
  }
  return out;
}

inline void save_png(const RasterImage& img, const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.rgb.data(), 0, nullptr)) {
    throw Error(ErrorKind::Io, "cannot write PNG " + path.string() + ": " + image.message);
  }
}

// Binary (P6) and ASCII (P3) maxval-255 PPM.
inline RasterImage load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(ch);
    }
    return t;
  };
  const std::string magic = token();
  if (magic != "P6" && magic != "P3") throw Error(ErrorKind::Io, "not a PPM: " + path.string());
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw Error(ErrorKind::Io, "bad PPM header: " + path.string());
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw Error(ErrorKind::Io, "unsupported PPM: " + path.string());
  RasterImage out(w, h);
  if (magic == "P6") {
    in.read(reinterpret_cast<char*>(out.rgb.data()), static_cast<std::streamsize>(out.rgb.size()));
    if (in.gcount() != static_cast<std::streamsize>(out.rgb.size()))
      throw Error(ErrorKind::Io, "truncated PPM: " + path.string());
  } else {
    for (auto& v : out.rgb) {
      const std::string t = token();
      if (t.empty()) throw Error(ErrorKind::Io, "truncated PPM: " + path.string());
      v = static_cast<std::uint8_t>(std::stoi(t));
    }
  }
  return out;
}

inline void save_ppm(const RasterImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
}

inline bool is_supported_image(const std::filesystem::path& path) {
  const std::string ext = detail::lower_extension(path);
  return ext == ".png" || ext == ".ppm";
}

inline RasterImage load_image(const std::filesystem::path& path) {
  const std::string ext = detail::lower_extension(path);
  if (ext == ".png") return load_png(path);
  if (ext == ".ppm") return load_ppm(path);
  throw Error(ErrorKind::Io, "unsupported image format: " + path.string());
}

/// Sorted list of PNG/PPM files in a directory.
inline std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw Error(ErrorKind::DatasetEmpty, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_supported_image(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// First three channels of a [-1, 1] tensor as 8-bit RGB.
inline RasterImage to_raster(const Tensor& t) {
  RasterImage img(t.width, t.height);
  for (int y = 0; y < t.height; ++y)
    for (int x = 0; x < t.width; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = denormalize_pixel(t.at(y, x, c));
  return img;
}

/// De-normalized canvas as RGB. Pixels outside placed cells (empty cells and
/// gap bands) are black; placed pixels map [-1, 1] onto [0, 255].
inline RasterImage canvas_to_raster(const GameState& state) {
  const PuzzleSpec& s = state.spec();
  const Tensor canvas = state.canvas();
  RasterImage img(canvas.width, canvas.height);
  const int n = s.patches_per_side;
  for (int pos = 0; pos < s.positions(); ++pos) {
    if (state.is_empty_at(pos)) continue;
    const int oy = (pos / n) * s.cell_stride();
    const int ox = (pos % n) * s.cell_stride();
    for (int y = oy; y < oy + s.patch_size; ++y)
      for (int x = ox; x < ox + s.patch_size; ++x)
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = denormalize_pixel(canvas.at(y, x, c));
  }
  return img;
}

inline void render_canvas(const GameState& state, const std::filesystem::path& path) {
  save_png(canvas_to_raster(state), path);
}

}  // namespace alphazzle
