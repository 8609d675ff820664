#include "loftr/tensor_io.hpp"

#include <fstream>
#include <limits>

#include "loftr/binary_io.hpp"

namespace loftr::LOFTR_PRECISION {

void write_tensor(std::ostream& out, const Tensor& tensor) {
  const Shape& shape = tensor.shape();
  if (shape.size() > std::numeric_limits<std::uint8_t>::max()) throw DimensionError("write_tensor: rank too large");
  out.write("LFTB", 4);
  binary::write_le<std::uint32_t>(out, kTensorFormatVersion);
  binary::write_le<std::uint8_t>(out, 0);
  binary::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(shape.size()));
  for (std::size_t extent : shape) binary::write_le<std::uint64_t>(out, extent);
  for (real v : tensor.values()) binary::write_le<float>(out, static_cast<float>(v));
  if (!out) throw InputError("write_tensor: stream failure");
}

Tensor read_tensor(std::istream& in) {
  binary::expect_magic(in, "LFTB", "read_tensor");
  const auto version = binary::read_le<std::uint32_t>(in);
  if (version != kTensorFormatVersion) throw InputError("read_tensor: unsupported version " + std::to_string(version));
  const auto dtype = binary::read_le<std::uint8_t>(in);
  if (dtype != 0) throw InputError("read_tensor: unsupported dtype " + std::to_string(dtype));
  const auto ndim = binary::read_le<std::uint8_t>(in);
  Shape shape(ndim);
  for (auto& extent : shape) extent = static_cast<std::size_t>(binary::read_le<std::uint64_t>(in));
  const std::size_t n = shape_numel(shape);
  std::vector<real> values(n);
  for (auto& v : values) v = static_cast<real>(binary::read_le<float>(in));
  return Tensor::from_data(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("save_tensor: cannot open " + path.string());
  write_tensor(out, tensor);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("load_tensor: cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace loftr::LOFTR_PRECISION
