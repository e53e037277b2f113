// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0
//
// Binary PPM for color images and the "O2VD" float raster for depth.

#pragma once

#include <filesystem>

#include "o2v/camera.hpp"

namespace o2v {

struct RgbImage {
  int width = 0;
  int height = 0;
  RgbBuffer pixels;  ///< row-major, values in [0,1]
};

struct DepthImage {
  int width = 0;
  int height = 0;
  DepthBuffer values;  ///< row-major plane depth, 0 = invalid
};

/// 8-bit binary PPM; values are clamped to [0,1] and rounded.
void write_ppm(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_ppm(const std::filesystem::path& path);

/// 16-byte header ("O2VD", u32 version, u32 W, u32 H) then W*H little-endian f32.
void write_depth(const std::filesystem::path& path, const DepthImage& image);
DepthImage read_depth(const std::filesystem::path& path);

/// Gray image from a [0,1] scalar field.
RgbImage gray_image(const Eigen::VectorXd& values, int width, int height);

}  // namespace o2v
