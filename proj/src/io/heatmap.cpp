// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "crafted/io/heatmap.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <vector>

#if CRAFTED_HAVE_PNG
#include <png.h>
#endif

namespace crafted::io {
namespace {

constexpr int kCell = 32;

// Piecewise-linear dark-blue -> teal -> yellow ramp.
std::array<unsigned char, 3> colour(double u) {
  static constexpr double kStops[3][3] = {{20, 30, 90}, {30, 150, 140}, {250, 230, 60}};
  u = std::clamp(u, 0.0, 1.0);
  const int seg = u < 0.5 ? 0 : 1;
  const double f = u < 0.5 ? u / 0.5 : (u - 0.5) / 0.5;
  std::array<unsigned char, 3> rgb{};
  for (int c = 0; c < 3; ++c) {
    rgb[c] = static_cast<unsigned char>(
        std::lround(kStops[seg][c] + f * (kStops[seg + 1][c] - kStops[seg][c])));
  }
  return rgb;
}

}  // namespace

bool heatmap_supported() { return CRAFTED_HAVE_PNG != 0; }

bool write_heatmap_png(const std::filesystem::path& path, const MetricMatrix& matrix,
                       std::string* why) {
  auto fail = [&](std::string reason) {
    if (why) *why = std::move(reason);
    return false;
  };
  if (matrix.rows.empty() || matrix.cols.empty()) return fail("matrix is empty");
#if CRAFTED_HAVE_PNG
  const auto [lo_it, hi_it] = std::minmax_element(matrix.values.begin(), matrix.values.end());
  const double lo = *lo_it, span = *hi_it - *lo_it;
  const auto width = static_cast<png_uint_32>(matrix.cols.size() * kCell);
  const auto height = static_cast<png_uint_32>(matrix.rows.size() * kCell);
  std::vector<unsigned char> pixels(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t r = y / kCell, c = x / kCell;
      const bool border = y % kCell == 0 || x % kCell == 0;
      const double u = span > 0.0 ? (matrix.at(r, c) - lo) / span : 0.5;
      const auto rgb = border ? std::array<unsigned char, 3>{255, 255, 255} : colour(u);
      std::copy(rgb.begin(), rgb.end(), pixels.begin() + static_cast<long>((y * width + x) * 3));
    }
  }

  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) return fail("cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    return fail("libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (png_uint_32 y = 0; y < height; ++y) {
    png_write_row(png, pixels.data() + static_cast<std::size_t>(y) * width * 3);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return std::fclose(fp) == 0 ? true : fail("failed to close " + path.string());
#else
  (void)path;
  return fail("built without PNG support; CSV output only");
#endif
}

}  // namespace crafted::io
