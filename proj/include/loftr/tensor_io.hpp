#pragma once

#include <filesystem>
#include <iosfwd>

#include "loftr/tensor.hpp"

namespace loftr::LOFTR_PRECISION {

// "LFTB" blob: magic, u32 version (1), u8 dtype (0 = real32), u8 ndim,
// ndim x u64 extents, then the little-endian float32 payload.

inline constexpr std::uint32_t kTensorFormatVersion = 1;

void write_tensor(std::ostream& out, const Tensor& tensor);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace loftr::LOFTR_PRECISION
