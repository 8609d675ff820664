#include "loftr/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "loftr/errors.hpp"

namespace loftr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config key '" + key + "': invalid value '" + value + "' (expected " + expected + ")");
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return static_cast<std::size_t>(out);
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a real number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

std::string real_text(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Field {
  std::function<void(Config&, const std::string&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

template <class T>
Field count_field(T Config::*member) {
  return {[member](Config& c, const std::string& k, const std::string& v) { c.*member = static_cast<T>(parse_count(k, v)); },
          [member](const Config& c) { return std::to_string(c.*member); }};
}

Field real_field(double Config::*member) {
  return {[member](Config& c, const std::string& k, const std::string& v) { c.*member = parse_real(k, v); },
          [member](const Config& c) { return real_text(c.*member); }};
}

Field bool_field(bool Config::*member) {
  return {[member](Config& c, const std::string& k, const std::string& v) { c.*member = parse_bool(k, v); },
          [member](const Config& c) { return std::string(c.*member ? "true" : "false"); }};
}

Field geometry_real(double GeometryRanges::*member) {
  return {[member](Config& c, const std::string& k, const std::string& v) { c.geometry.*member = parse_real(k, v); },
          [member](const Config& c) { return real_text(c.geometry.*member); }};
}

template <class E>
Field enum_field(E Config::*member, std::vector<std::pair<std::string, E>> names) {
  return {[member, names](Config& c, const std::string& k, const std::string& v) {
            for (const auto& [name, value] : names)
              if (name == v) {
                c.*member = value;
                return;
              }
            std::string options;
            for (const auto& [name, value] : names) options += (options.empty() ? "" : "|") + name;
            bad_value(k, v, options.c_str());
          },
          [member, names](const Config& c) {
            for (const auto& [name, value] : names)
              if (value == c.*member) return name;
            return std::string("?");
          }};
}

const std::vector<std::pair<std::string, AttentionKind>> kAttentionNames = {
    {"linear", AttentionKind::Linear}, {"vanilla", AttentionKind::Vanilla}, {"conv", AttentionKind::Conv}};

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"d_coarse", count_field(&Config::d_coarse)},
      {"d_fine", count_field(&Config::d_fine)},
      {"heads", count_field(&Config::heads)},
      {"n_coarse", count_field(&Config::n_coarse)},
      {"n_fine", count_field(&Config::n_fine)},
      {"window", count_field(&Config::window)},
      {"temperature", real_field(&Config::temperature)},
      {"matcher", enum_field(&Config::matcher, std::vector<std::pair<std::string, MatcherKind>>{
                                                   {"dual_softmax", MatcherKind::DualSoftmax},
                                                   {"optimal_transport", MatcherKind::OptimalTransport}})},
      {"sinkhorn_iters", count_field(&Config::sinkhorn_iters)},
      {"theta_c", real_field(&Config::theta_c)},
      {"coarse_attention", enum_field(&Config::coarse_attention, kAttentionNames)},
      {"fine_attention", enum_field(&Config::fine_attention, kAttentionNames)},
      {"pe_per_layer", bool_field(&Config::pe_per_layer)},
      {"normalize_features", bool_field(&Config::normalize_features)},
      {"learning_rate", real_field(&Config::learning_rate)},
      {"batch_size", count_field(&Config::batch_size)},
      {"steps", count_field(&Config::steps)},
      {"seed", count_field(&Config::seed)},
      {"image_height", count_field(&Config::image_height)},
      {"image_width", count_field(&Config::image_width)},
      {"fine_supervision", enum_field(&Config::fine_supervision, std::vector<std::pair<std::string, FineSupervision>>{
                                                                     {"predicted_and_truth", FineSupervision::PredictedAndTruth},
                                                                     {"truth", FineSupervision::Truth}})},
      {"teacher_forcing", bool_field(&Config::teacher_forcing)},
      {"geometry",
       {[](Config& c, const std::string& k, const std::string& v) {
          if (v == "homography") c.geometry.kind = GeometryKind::Homography;
          else if (v == "planar_scene") c.geometry.kind = GeometryKind::PlanarScene;
          else bad_value(k, v, "homography|planar_scene");
        },
        [](const Config& c) {
          return std::string(c.geometry.kind == GeometryKind::Homography ? "homography" : "planar_scene");
        }}},
      {"max_rotation_deg", geometry_real(&GeometryRanges::max_rotation_deg)},
      {"max_scale_delta", geometry_real(&GeometryRanges::max_scale_delta)},
      {"max_translation", geometry_real(&GeometryRanges::max_translation)},
      {"max_corner_jitter", geometry_real(&GeometryRanges::max_corner_jitter)},
      {"validation_pairs", count_field(&Config::validation_pairs)},
      {"validation_seed", count_field(&Config::validation_seed)},
      {"eval_pairs", count_field(&Config::eval_pairs)},
      {"eval_seed", count_field(&Config::eval_seed)},
      {"ransac_threshold", real_field(&Config::ransac_threshold)},
      {"ransac_iterations", count_field(&Config::ransac_iterations)},
      {"checkpoint",
       {[](Config& c, const std::string&, const std::string& v) { c.checkpoint = v; },
        [](const Config& c) { return c.checkpoint; }}},
      {"metrics",
       {[](Config& c, const std::string&, const std::string& v) { c.metrics = v; },
        [](const Config& c) { return c.metrics; }}},
  };
  return table;
}

const Field& find_field(const std::string& key) {
  for (const auto& [name, field] : fields())
    if (name == key) return field;
  throw ConfigError("unknown config key '" + key + "'");
}

void require(bool ok, const std::string& key, const std::string& message) {
  if (!ok) throw ConfigError("config key '" + key + "': " + message);
}

}  // namespace

void Config::validate() const {
  require(d_coarse > 0 && d_coarse % 4 == 0, "d_coarse", "must be a positive multiple of 4");
  require(d_fine > 0, "d_fine", "must be positive");
  require(heads > 0, "heads", "must be positive");
  require(d_coarse % heads == 0, "heads", "must divide d_coarse");
  require(d_fine % heads == 0, "heads", "must divide d_fine");
  require(window % 2 == 1, "window", "must be odd");
  require(temperature > 0, "temperature", "must be positive");
  require(sinkhorn_iters >= 1, "sinkhorn_iters", "must be at least 1");
  require(theta_c > 0 && theta_c < 1, "theta_c", "must lie in (0,1)");
  require(learning_rate > 0, "learning_rate", "must be positive");
  require(batch_size > 0, "batch_size", "must be positive");
  require(image_height > 0 && image_height % 8 == 0, "image_height", "must be a positive multiple of 8");
  require(image_width > 0 && image_width % 8 == 0, "image_width", "must be a positive multiple of 8");
  require(geometry.max_rotation_deg >= 0, "max_rotation_deg", "must be non-negative");
  require(geometry.max_scale_delta >= 0 && geometry.max_scale_delta < 1, "max_scale_delta", "must lie in [0,1)");
  require(geometry.max_translation >= 0, "max_translation", "must be non-negative");
  require(geometry.max_corner_jitter >= 0, "max_corner_jitter", "must be non-negative");
  require(ransac_threshold > 0, "ransac_threshold", "must be positive");
  require(ransac_iterations > 0, "ransac_iterations", "must be positive");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [name, field] : fields()) keys.push_back(name);
  return keys;
}

void set_config_value(Config& config, const std::string& key, const std::string& value) {
  find_field(key).set(config, key, trim(value));
}

std::string get_config_value(const Config& config, const std::string& key) { return find_field(key).get(config); }

std::vector<std::pair<std::string, std::string>> parse_config_entries(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value, got '" + line + "'");
    entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return entries;
}

Config parse_config(const std::string& text, Config base) {
  for (const auto& [key, value] : parse_config_entries(text)) set_config_value(base, key, value);
  return base;
}

std::string read_config_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Config load_config(const std::filesystem::path& path, Config base) {
  return parse_config(read_config_text(path), std::move(base));
}

std::string format_config(const Config& config) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + "=" + field.get(config) + "\n";
  return out;
}

}  // namespace loftr
