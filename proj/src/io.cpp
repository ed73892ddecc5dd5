// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#include "cvgs/io.h"

#include <png.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cvgs/check.h"

static_assert(std::endian::native == std::endian::little,
              "map container I/O assumes a little-endian host");

namespace cvgs {
namespace {

constexpr char kMapMagic[8] = {'U', 'C', 'M', 'A', 'P', '0', '0', '1'};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void write_png(const std::string& path, const ImageF& img) {
  CVGS_CHECK_MSG(img.channels == 1 || img.channels == 3,
                 "PNG writer expects 1 or 3 channels, got " << img.channels);
  const std::vector<uint8_t> bytes = to_bytes(img);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = img.width;
  image.height = img.height;
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int ok =
      png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr);
  CVGS_CHECK_MSG(ok != 0 && (image.warning_or_error & PNG_IMAGE_ERROR) == 0,
                 "PNG write failed for " << path << ": " << image.message);
}

ImageF read_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  CVGS_CHECK_MSG(png_image_begin_read_from_file(&image, path.c_str()) != 0,
                 "cannot open PNG " << path << ": " << image.message);
  const int channels = PNG_IMAGE_PIXEL_CHANNELS(image.format) == 1 ? 1 : 3;
  image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<uint8_t> bytes(PNG_IMAGE_SIZE(image));
  const int ok = png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr);
  CVGS_CHECK_MSG(ok != 0 && (image.warning_or_error & PNG_IMAGE_ERROR) == 0,
                 "PNG read failed for " << path << ": " << image.message);
  return from_bytes(bytes, int(image.width), int(image.height), channels);
}

void write_ucmap(const std::string& path, const ImageF& map) {
  CVGS_CHECK_MSG(map.channels == 1, "scalar map must have one channel");
  std::ofstream out(path, std::ios::binary);
  CVGS_CHECK_MSG(out.good(), "cannot open " << path << " for writing");
  out.write(kMapMagic, sizeof(kMapMagic));
  const uint32_t w = uint32_t(map.width), h = uint32_t(map.height);
  out.write(reinterpret_cast<const char*>(&w), sizeof(w));
  out.write(reinterpret_cast<const char*>(&h), sizeof(h));
  out.write(reinterpret_cast<const char*>(map.data.data()),
            std::streamsize(map.data.size() * sizeof(float)));
  CVGS_CHECK_MSG(out.good(), "short write to " << path);
}

ImageF read_ucmap(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  CVGS_CHECK_MSG(in.good(), "cannot open map " << path);
  char magic[sizeof(kMapMagic)];
  in.read(magic, sizeof(magic));
  CVGS_CHECK_MSG(in.good() && std::memcmp(magic, kMapMagic, sizeof(magic)) == 0,
                 path << " is not a scalar-map file");
  uint32_t w = 0, h = 0;
  in.read(reinterpret_cast<char*>(&w), sizeof(w));
  in.read(reinterpret_cast<char*>(&h), sizeof(h));
  CVGS_CHECK_MSG(in.good() && w > 0 && h > 0 && w < (1u << 20) && h < (1u << 20),
                 "bad map header in " << path);
  ImageF map(int(w), int(h), 1);
  in.read(reinterpret_cast<char*>(map.data.data()),
          std::streamsize(map.data.size() * sizeof(float)));
  CVGS_CHECK_MSG(in.good(), "truncated map " << path);
  return map;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  CVGS_CHECK_MSG(in.good(), "cannot open config " << path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    CVGS_CHECK_MSG(eq != std::string::npos,
                   "config line " << lineno << " is not key=value: " << line);
    const std::string key = trim(line.substr(0, eq));
    CVGS_CHECK_MSG(!key.empty(), "config line " << lineno << " has empty key");
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

bool Config::has(const std::string& key) const {
  return values_.count(key) != 0;
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(it->second, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  CVGS_CHECK_MSG(pos == it->second.size(),
                 "config value " << key << "=" << it->second << " is not a number");
  return v;
}

int Config::get_int(const std::string& key, int fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(it->second, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  CVGS_CHECK_MSG(pos == it->second.size(),
                 "config value " << key << "=" << it->second << " is not an integer");
  return v;
}

}  // namespace cvgs
