#include "loftr/features.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace loftr::LOFTR_PRECISION {

void validate_image(const Image& image) {
  if (image.height == 0 || image.width == 0 || image.height % 8 != 0 || image.width % 8 != 0)
    throw DimensionError("image extents " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                         " must be positive multiples of 8");
  if (image.pixels.size() != image.height * image.width) throw DimensionError("image: pixel count mismatch");
  for (float v : image.pixels)
    if (!(v >= 0.0f && v <= 1.0f)) throw InputError("image: intensity outside [0,1]");
}

Image standardize_image(const Image& image) {
  double mean = 0, sq = 0;
  for (float v : image.pixels) mean += v;
  mean /= double(std::max<std::size_t>(image.pixels.size(), 1));
  for (float v : image.pixels) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / double(std::max<std::size_t>(image.pixels.size(), 1)));
  Image out = image;
  for (float& v : out.pixels) v = sd > 1e-6 ? static_cast<float>((v - mean) / sd) : 0.0f;
  return out;
}

Tensor patch_matrix(const Image& image, std::size_t patch) {
  const std::size_t rows = image.height / patch, cols = image.width / patch;
  std::vector<real> data(rows * cols * patch * patch);
  std::size_t k = 0;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      for (std::size_t py = 0; py < patch; ++py)
        for (std::size_t px = 0; px < patch; ++px) data[k++] = image.at(i * patch + py, j * patch + px);
  return Tensor::from_data({rows * cols, patch * patch}, std::move(data));
}

FeatureMaps extract_batch(const std::vector<const Image*>& images, const BackboneParams& params) {
  if (images.empty()) throw DimensionError("extract: no images");
  for (const Image* image : images) {
    if (image->height == 0 || image->width == 0 || image->height % 8 != 0 || image->width % 8 != 0)
      throw DimensionError("extract: image extents " + std::to_string(image->height) + "x" +
                           std::to_string(image->width) + " must be positive multiples of 8");
    if (image->height != images[0]->height || image->width != images[0]->width)
      throw DimensionError("extract: images in a batch must share extents");
  }
  const std::size_t h = images[0]->height, w = images[0]->width, n = images.size();
  FeatureMaps maps;
  maps.coarse_height = h / 8;
  maps.coarse_width = w / 8;
  maps.fine_height = h / 2;
  maps.fine_width = w / 2;
  std::vector<Tensor> coarse_patches, fine_patches;
  for (const Image* image : images) {
    coarse_patches.push_back(patch_matrix(*image, 8));
    fine_patches.push_back(patch_matrix(*image, 2));
  }
  const Tensor cp = n == 1 ? coarse_patches[0] : concat(coarse_patches, 0);
  const Tensor fp = n == 1 ? fine_patches[0] : concat(fine_patches, 0);
  const Tensor coarse = add(matmul(cp, params.coarse_weight), params.coarse_bias);
  const Tensor fine = add(matmul(fp, params.fine_weight), params.fine_bias);
  const std::size_t dc = params.coarse_weight.dim(1), df = params.fine_weight.dim(1);
  maps.coarse = reshape(coarse, {n, maps.coarse_height * maps.coarse_width, dc});
  maps.fine = reshape(fine, {n, maps.fine_height * maps.fine_width, df});
  return maps;
}

FeatureMaps extract(const Image& image, const BackboneParams& params) {
  FeatureMaps maps = extract_batch({&image}, params);
  maps.coarse = reshape(maps.coarse, {maps.coarse.dim(1), maps.coarse.dim(2)});
  maps.fine = reshape(maps.fine, {maps.fine.dim(1), maps.fine.dim(2)});
  return maps;
}

Tensor positional_encoding(std::size_t height, std::size_t width, std::size_t channels) {
  if (channels == 0 || channels % 4 != 0)
    throw ConfigError("positional_encoding: channel count must be a positive multiple of 4, got " +
                      std::to_string(channels));
  const std::size_t half = channels / 2;
  std::vector<real> data(height * width * channels);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      real* row = data.data() + (y * width + x) * channels;
      for (std::size_t k = 0; k < channels / 4; ++k) {
        const double freq = std::pow(10000.0, -4.0 * double(k) / double(channels));
        row[2 * k] = static_cast<real>(std::sin(double(y) * freq));
        row[2 * k + 1] = static_cast<real>(std::cos(double(y) * freq));
        row[half + 2 * k] = static_cast<real>(std::sin(double(x) * freq));
        row[half + 2 * k + 1] = static_cast<real>(std::cos(double(x) * freq));
      }
    }
  return Tensor::from_data({height * width, channels}, std::move(data));
}

Tensor add_positional(const Tensor& coarse, const Tensor& encoding) {
  const Shape& s = coarse.shape();
  if (s.size() < 2 || encoding.ndim() != 2 || s[s.size() - 2] != encoding.dim(0) || s.back() != encoding.dim(1))
    throw DimensionError("add_positional: extents " + shape_to_string(s) + " vs " + shape_to_string(encoding.shape()));
  return add(coarse, encoding);
}

}  // namespace loftr::LOFTR_PRECISION
