#include "toposeg/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "toposeg/error.hpp"

namespace toposeg {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ValueError("'" + s + "' is not a number");
  return v;
}

std::uint64_t to_uint(const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValueError("'" + s + "' is not a non-negative integer");
  }
  return v;
}

std::vector<std::uint64_t> to_uint_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_uint(trim(item)));
  if (out.empty()) throw ValueError("empty list");
  return out;
}

std::string list_text(const std::vector<std::uint64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  const char* key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field real(const char* key, T member) {
  return {key, [member](TrainConfig& c, const std::string& v) { std::invoke(member, c) = to_double(v); },
          [member](const TrainConfig& c) {
            // Accessors take a mutable config; reading through them does not modify it.
            return format_double(std::invoke(member, const_cast<TrainConfig&>(c)));
          }};
}

template <typename T>
Field integer(const char* key, T member) {
  return {key,
          [member](TrainConfig& c, const std::string& v) {
            auto& slot = std::invoke(member, c);
            slot = static_cast<std::remove_reference_t<decltype(slot)>>(to_uint(v));
          },
          [member](const TrainConfig& c) {
            return std::to_string(std::invoke(member, const_cast<TrainConfig&>(c)));
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      real("lr", &TrainConfig::lr),
      real("lr_min", &TrainConfig::lr_min),
      real("weight_decay", &TrainConfig::weight_decay),
      real("beta1", &TrainConfig::beta1),
      real("beta2", &TrainConfig::beta2),
      real("adam_eps", &TrainConfig::adam_eps),
      real("grad_clip", &TrainConfig::grad_clip),
      integer("steps", &TrainConfig::steps),
      integer("batch", &TrainConfig::batch),
      {"seeds", [](TrainConfig& c, const std::string& v) { c.seeds = to_uint_list(v); },
       [](const TrainConfig& c) { return list_text(c.seeds); }},
      real("lambda_bce", [](TrainConfig& c) -> double& { return c.loss_weights.bce; }),
      real("lambda_dice", [](TrainConfig& c) -> double& { return c.loss_weights.dice; }),
      real("lambda_cl", [](TrainConfig& c) -> double& { return c.loss_weights.cl; }),
      real("lambda_bd", [](TrainConfig& c) -> double& { return c.loss_weights.boundary; }),
      integer("skeleton_iterations", [](TrainConfig& c) -> int& { return c.skeleton.iterations; }),
      integer("lora_rank", [](TrainConfig& c) -> std::size_t& { return c.model.lora_rank; }),
      real("lora_alpha", [](TrainConfig& c) -> double& { return c.model.lora_alpha; }),
      integer("channels", [](TrainConfig& c) -> std::size_t& { return c.model.channels; }),
      integer("lora_blocks", [](TrainConfig& c) -> std::size_t& { return c.model.lora_blocks; }),
      integer("data.height", [](TrainConfig& c) -> std::size_t& { return c.data.height; }),
      integer("data.width", [](TrainConfig& c) -> std::size_t& { return c.data.width; }),
      integer("data.n_curves", [](TrainConfig& c) -> std::size_t& { return c.data.n_curves; }),
      real("data.width_min", [](TrainConfig& c) -> double& { return c.data.width_min; }),
      real("data.width_max", [](TrainConfig& c) -> double& { return c.data.width_max; }),
      real("data.gap_probability", [](TrainConfig& c) -> double& { return c.data.gap_probability; }),
      real("data.noise_sigma", [](TrainConfig& c) -> double& { return c.data.noise_sigma; }),
      real("data.branch_probability", [](TrainConfig& c) -> double& { return c.data.branch_probability; }),
      integer("data.seed", [](TrainConfig& c) -> std::uint64_t& { return c.data.seed; }),
      integer("data.n_train", &TrainConfig::n_train),
      integer("data.n_val", &TrainConfig::n_val),
      real("eval.threshold", [](TrainConfig& c) -> double& { return c.eval.threshold; }),
      real("eval.tolerance", [](TrainConfig& c) -> double& { return c.eval.tolerance; }),
      integer("eval.bins", [](TrainConfig& c) -> std::size_t& { return c.eval.bins; }),
      integer("eval.skeleton_iterations", [](TrainConfig& c) -> int& { return c.eval.skeleton.iterations; }),
  };
  return table;
}

}  // namespace

TrainConfig parse_train_config(std::string_view text) {
  TrainConfig cfg;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no);
    const auto eq = content.find('=');
    if (eq == std::string::npos) throw ValueError(where + ": expected 'key = value'");
    const std::string key = trim(content.substr(0, eq));
    const std::string value = trim(content.substr(eq + 1));
    const Field* field = nullptr;
    for (const auto& f : fields()) {
      if (key == f.key) field = &f;
    }
    if (!field) throw ValueError(where + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ValueError(where + ": duplicate key '" + key + "'");
    try {
      field->set(cfg, value);
    } catch (const ValueError& e) {
      throw ValueError(where + " (" + key + "): " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

ConfigEcho echo_config(const TrainConfig& cfg) {
  ConfigEcho echo;
  for (const auto& f : fields()) echo.emplace_back(f.key, f.get(cfg));
  return echo;
}

std::string config_text(const TrainConfig& cfg) {
  std::string text;
  for (const auto& [k, v] : echo_config(cfg)) text += k + " = " + v + "\n";
  return text;
}

std::uint64_t config_hash(const TrainConfig& cfg) { return fnv1a64(config_text(cfg)); }

}  // namespace toposeg
