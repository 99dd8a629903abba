// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "duet/errors.hpp"
#include "duet/image.hpp"

namespace duet {
namespace {

std::size_t read_header_int(std::istream& in, const std::filesystem::path& path) {
  int ch = in.peek();
  while (ch != EOF) {
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
    ch = in.peek();
  }
  std::size_t v = 0;
  if (!(in >> v)) throw ContractError("ppm: malformed header in " + path.string());
  return v;
}

}  // namespace

ImageBuffer read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("ppm: cannot open " + path.string());
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P6") throw ContractError("ppm: not a binary P6 file: " + path.string());
  const std::size_t w = read_header_int(in, path);
  const std::size_t h = read_header_int(in, path);
  const std::size_t maxval = read_header_int(in, path);
  if (maxval != 255 || w == 0 || h == 0) throw ContractError("ppm: only 8-bit images are supported: " + path.string());
  in.get();  // single whitespace before the raster
  std::vector<unsigned char> raw(w * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw ContractError("ppm: truncated raster in " + path.string());
  ImageBuffer img(h, w, 3);
  for (std::size_t i = 0; i < raw.size(); ++i) img.pixels[i] = raw[i] / 255.0;
  return img;
}

void write_ppm(const std::filesystem::path& path, const ImageBuffer& img) {
  if (img.channels != 3) throw DimensionError("ppm: writer expects 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("ppm: cannot write " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> raw(img.pixels.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<unsigned char>(std::lround(std::clamp(img.pixels[i], 0.0, 1.0) * 255.0));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

}  // namespace duet
