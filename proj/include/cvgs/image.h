// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cvgs/check.h"

namespace cvgs {

// Dense row-major, channel-interleaved raster. Channel count is 3 for color
// images and 1 for scalar maps (depth, uncertainty, weights). Scalar maps use
// NaN to mark invalid pixels.
template <typename T>
struct ImageT {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<T> data;

  ImageT() = default;
  ImageT(int w, int h, int c, T fill = T(0))
      : width(w), height(h), channels(c),
        data(static_cast<size_t>(w) * h * c, fill) {}

  T& at(int x, int y, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  const T& at(int x, int y, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }

  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  bool same_shape(const ImageT& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }

  template <typename U>
  ImageT<U> cast() const {
    ImageT<U> out(width, height, channels);
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using ImageF = ImageT<float>;
using ImageD = ImageT<double>;

inline bool pixel_valid(float v) { return !std::isnan(v); }

// Quantizes [0,1] floats to 8-bit with rounding; values outside the range
// are clamped first.
std::vector<uint8_t> to_bytes(const ImageF& img);

// Inverse of to_bytes (values land on the 8-bit lattice k/255).
ImageF from_bytes(const std::vector<uint8_t>& bytes, int width, int height,
                  int channels);

}  // namespace cvgs
