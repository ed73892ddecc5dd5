// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#include "cvgs/image.h"

#include <algorithm>
#include <cmath>

namespace cvgs {

std::vector<uint8_t> to_bytes(const ImageF& img) {
  std::vector<uint8_t> out(img.data.size());
  for (size_t i = 0; i < img.data.size(); ++i) {
    const float v = std::clamp(img.data[i], 0.0f, 1.0f);
    out[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
  }
  return out;
}

ImageF from_bytes(const std::vector<uint8_t>& bytes, int width, int height,
                  int channels) {
  CVGS_CHECK(bytes.size() == static_cast<size_t>(width) * height * channels);
  ImageF out(width, height, channels);
  for (size_t i = 0; i < bytes.size(); ++i) {
    out.data[i] = static_cast<float>(bytes[i]) / 255.0f;
  }
  return out;
}

}  // namespace cvgs
