#include "loftr/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "loftr/errors.hpp"

namespace loftr {

Image Image::filled(std::size_t height, std::size_t width, float value) {
  return Image{height, width, std::vector<float>(height * width, value)};
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string token;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) return token;
      continue;
    }
    token.push_back(static_cast<char>(c));
  }
  return token;
}

std::size_t parse_extent(const std::string& token, const std::filesystem::path& path) {
  try {
    std::size_t used = 0;
    const long value = std::stol(token, &used);
    if (used != token.size() || value <= 0) throw std::invalid_argument(token);
    return static_cast<std::size_t>(value);
  } catch (const std::exception&) {
    throw InputError("read_pgm: malformed header in " + path.string());
  }
}

}  // namespace

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("read_pgm: cannot open " + path.string());
  if (next_token(in) != "P5") throw InputError("read_pgm: " + path.string() + " is not a binary PGM");
  Image image;
  image.width = parse_extent(next_token(in), path);
  image.height = parse_extent(next_token(in), path);
  const std::size_t maxval = parse_extent(next_token(in), path);
  if (maxval > 255) throw InputError("read_pgm: only 8-bit PGM is supported");
  std::vector<unsigned char> raw(image.width * image.height);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw InputError("read_pgm: truncated pixel data in " + path.string());
  image.pixels.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    image.pixels[i] = std::min(1.0f, static_cast<float>(raw[i]) / static_cast<float>(maxval));
  return image;
}

void write_pgm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("write_pgm: cannot open " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  for (float v : image.pixels) {
    const float clamped = std::clamp(v, 0.0f, 1.0f);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(clamped * 255.0f))));
  }
  if (!out) throw InputError("write_pgm: write failure for " + path.string());
}

float sample_bilinear(const Image& image, double x, double y) {
  const double cx = std::clamp(x, 0.0, static_cast<double>(image.width - 1));
  const double cy = std::clamp(y, 0.0, static_cast<double>(image.height - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(cx));
  const auto y0 = static_cast<std::size_t>(std::floor(cy));
  const std::size_t x1 = std::min(x0 + 1, image.width - 1);
  const std::size_t y1 = std::min(y0 + 1, image.height - 1);
  const double fx = cx - static_cast<double>(x0);
  const double fy = cy - static_cast<double>(y0);
  const double top = (1 - fx) * image.at(y0, x0) + fx * image.at(y0, x1);
  const double bottom = (1 - fx) * image.at(y1, x0) + fx * image.at(y1, x1);
  return static_cast<float>((1 - fy) * top + fy * bottom);
}

}  // namespace loftr
