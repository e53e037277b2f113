// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include "o2v/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "o2v/binary_io.hpp"

namespace o2v {
namespace {

constexpr std::uint32_t kDepthVersion = 1;

void check_dims(int w, int h, Eigen::Index n, const char* what) {
  if (w <= 0 || h <= 0 || static_cast<Eigen::Index>(w) * h != n) {
    throw InputError(std::string(what) + ": buffer size does not match width x height");
  }
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  check_dims(image.width, image.height, image.pixels.rows(), "write_ppm");
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  ByteWriter w;
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(header.data()), header.size()});
  for (Eigen::Index i = 0; i < image.pixels.rows(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(image.pixels(i, c), 0.0f, 1.0f);
      w.put<std::uint8_t>(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
    }
  }
  write_file(path, w.bytes());
}

RgbImage read_ppm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  if (token() != "P6") throw FormatError("PPM: expected P6");
  RgbImage img;
  try {
    img.width = std::stoi(token());
    img.height = std::stoi(token());
    if (std::stoi(token()) != 255) throw FormatError("PPM: only maxval 255 supported");
  } catch (const std::logic_error&) {
    throw FormatError("PPM: malformed header");
  }
  ++pos;
  if (img.width <= 0 || img.height <= 0) throw FormatError("PPM: bad dimensions");
  const std::size_t n = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  if (bytes.size() < pos + 3 * n) throw FormatError("PPM: truncated pixel data");
  img.pixels.resize(static_cast<Eigen::Index>(n), 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) img.pixels(static_cast<Eigen::Index>(i), c) = bytes[pos + 3 * i + c] / 255.0f;
  }
  return img;
}

void write_depth(const std::filesystem::path& path, const DepthImage& image) {
  check_dims(image.width, image.height, image.values.size(), "write_depth");
  ByteWriter w;
  w.put_magic("O2VD");
  w.put<std::uint32_t>(kDepthVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(image.width));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(image.height));
  w.put_array(std::span<const float>(image.values.data(), static_cast<std::size_t>(image.values.size())));
  write_file(path, w.bytes());
}

DepthImage read_depth(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  r.expect_magic("O2VD");
  const auto version = r.get<std::uint32_t>();
  if (version != kDepthVersion) throw VersionError("O2VD version " + std::to_string(version) + " unsupported");
  DepthImage img;
  img.width = static_cast<int>(r.get<std::uint32_t>());
  img.height = static_cast<int>(r.get<std::uint32_t>());
  const std::size_t n = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  if (n == 0 || r.remaining() != 4 * n) throw FormatError("O2VD: payload size does not match header");
  img.values.resize(static_cast<Eigen::Index>(n));
  r.get_array(std::span<float>(img.values.data(), n));
  return img;
}

RgbImage gray_image(const Eigen::VectorXd& values, int width, int height) {
  check_dims(width, height, values.size(), "gray_image");
  RgbImage img{width, height, RgbBuffer(values.size(), 3)};
  for (Eigen::Index i = 0; i < values.size(); ++i) img.pixels.row(i).setConstant(static_cast<float>(values[i]));
  return img;
}

}  // namespace o2v
