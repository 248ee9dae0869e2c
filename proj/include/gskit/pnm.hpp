// Binary PNM (P5/P6) encoding for scene containers and exported maps.

#pragma once

#include "gskit/tensor.hpp"

#include <filesystem>
#include <string>

namespace gskit::pnm {

struct Raster {
  Index width = 0;
  Index height = 0;
  int channels = 1;       // 1 (P5) or 3 (P6)
  int maxval = 255;       // 255 -> 8-bit samples, 65535 -> 16-bit big-endian
  std::vector<std::uint16_t> samples;  // row-major, interleaved channels
};

std::string encode(const Raster& raster);
/// Parses a P5/P6 stream; `name` is used in error messages.
Raster decode(const std::string& bytes, const std::string& name);

Raster read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, const Raster& raster);

}  // namespace gskit::pnm
