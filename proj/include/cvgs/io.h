// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>

#include "cvgs/image.h"

namespace cvgs {

// 8-bit PNG round trip. Color images are RGB; single-channel images are
// written as grayscale. Values are clamped to [0,1] and quantized.
void write_png(const std::string& path, const ImageF& img);
ImageF read_png(const std::string& path);

// Scalar-map container: "UCMAP001" magic, u32 width, u32 height, then
// width*height little-endian f32 row-major. NaN marks invalid pixels.
void write_ucmap(const std::string& path, const ImageF& map);
ImageF read_ucmap(const std::string& path);

// Flat key=value configuration text. '#' starts a comment; blank lines are
// ignored; later assignments win, so CLI overrides can be layered on top.
class Config {
 public:
  static Config load(const std::string& path);
  static Config parse(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace cvgs
