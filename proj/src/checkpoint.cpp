#include "loftr/checkpoint.hpp"

#include <fstream>
#include <map>
#include <set>

#include "loftr/binary_io.hpp"
#include "loftr/tensor_io.hpp"

namespace loftr::LOFTR_PRECISION {

void write_checkpoint(std::ostream& out, const Config& config, const ModelParams& params) {
  out.write("LFTC", 4);
  binary::write_le<std::uint32_t>(out, kCheckpointVersion);
  const std::string text = format_config(config);
  binary::write_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  std::vector<std::pair<std::string, Tensor>> table;
  visit_parameters(params, [&](const std::string& name, const Tensor& t) { table.emplace_back(name, t); });
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.size()));
  for (const auto& [name, tensor] : table) {
    binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(out, tensor);
  }
  if (!out) throw InputError("write_checkpoint: stream failure");
}

Checkpoint read_checkpoint(std::istream& in) {
  binary::expect_magic(in, "LFTC", "read_checkpoint");
  const auto version = binary::read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw InputError("read_checkpoint: unsupported version " + std::to_string(version));
  const auto text_size = binary::read_le<std::uint64_t>(in);
  if (text_size > (1u << 20)) throw InputError("read_checkpoint: implausible config block size");
  std::string text(text_size, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(text_size))) throw InputError("read_checkpoint: truncated config");
  Checkpoint ck;
  ck.config = parse_config(text);
  ck.params = init_model(ck.config, 0);

  std::map<std::string, Tensor> slots;
  visit_parameters(ck.params, [&](const std::string& name, const Tensor& t) { slots.emplace(name, t); });
  const auto count = binary::read_le<std::uint32_t>(in);
  std::set<std::string> seen;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = binary::read_le<std::uint32_t>(in);
    if (len > 4096) throw InputError("read_checkpoint: implausible parameter name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw InputError("read_checkpoint: truncated parameter name");
    const Tensor stored = read_tensor(in);
    const auto slot = slots.find(name);
    if (slot == slots.end()) throw InputError("read_checkpoint: unexpected parameter '" + name + "'");
    if (!seen.insert(name).second) throw InputError("read_checkpoint: duplicate parameter '" + name + "'");
    if (stored.shape() != slot->second.shape())
      throw InputError("read_checkpoint: parameter '" + name + "' has shape " + shape_to_string(stored.shape()) +
                       ", expected " + shape_to_string(slot->second.shape()));
    Tensor target = slot->second;
    std::copy(stored.values().begin(), stored.values().end(), target.mutable_values().begin());
  }
  for (const auto& [name, tensor] : slots)
    if (!seen.count(name)) throw InputError("read_checkpoint: missing parameter '" + name + "'");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Config& config, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  write_checkpoint(out, config, params);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace loftr::LOFTR_PRECISION
