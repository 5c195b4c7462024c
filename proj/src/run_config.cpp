#include "mbmfn/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace mbmfn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": '" + v + "' is not a valid number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean");
}

std::string format(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}
std::string format(bool v) { return v ? "true" : "false"; }
template <typename T>
std::string format(T v) requires std::is_integral_v<T> { return std::to_string(v); }

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream s(v);
  std::string item;
  while (std::getline(s, item, ','))
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

std::string join_list(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Table of every key in serialization order.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    auto number = [&](const std::string& key, auto accessor) {
      t.push_back({key,
                   {[accessor](RunConfig& c, const std::string& k, const std::string& v) {
                      auto& ref = accessor(c);
                      ref = parse_number<std::remove_reference_t<decltype(ref)>>(k, v);
                    },
                    [accessor](const RunConfig& c) { return format(accessor(c)); }}});
    };
    auto boolean = [&](const std::string& key, auto accessor) {
      t.push_back({key,
                   {[accessor](RunConfig& c, const std::string& k, const std::string& v) { accessor(c) = parse_bool(k, v); },
                    [accessor](const RunConfig& c) { return format(accessor(c)); }}});
    };
    auto text = [&](const std::string& key, auto accessor) {
      t.push_back({key,
                   {[accessor](RunConfig& c, const std::string&, const std::string& v) { accessor(c) = v; },
                    [accessor](const RunConfig& c) { return accessor(c); }}});
    };
    auto choice = [&](const std::string& key, auto accessor, auto parser) {
      t.push_back({key,
                   {[accessor, parser](RunConfig& c, const std::string& k, const std::string& v) {
                      try {
                        accessor(c) = parser(v);
                      } catch (const std::invalid_argument& e) {
                        throw ConfigError(k + ": " + e.what());
                      }
                    },
                    [accessor](const RunConfig& c) { return to_string(accessor(c)); }}});
    };

    number("model.scale", [](auto& c) -> auto& { return c.model.scale; });
    number("model.num_blocks", [](auto& c) -> auto& { return c.model.num_blocks; });
    number("model.trunk_channels", [](auto& c) -> auto& { return c.model.trunk_channels; });
    number("model.distill_channels", [](auto& c) -> auto& { return c.model.distill_channels; });
    number("model.leaky_slope", [](auto& c) -> auto& { return c.model.leaky_slope; });
    choice("model.branch_input", [](auto& c) -> auto& { return c.model.branch_input; },
           parse_branch_input);
    boolean("model.basic_branch", [](auto& c) -> auto& { return c.model.basic_branch; });
    choice("model.attention", [](auto& c) -> auto& { return c.model.attention; }, parse_attention_kind);
    choice("model.upsampler", [](auto& c) -> auto& { return c.model.upsampler; }, parse_upsampler);
    boolean("model.recon_attention", [](auto& c) -> auto& { return c.model.recon_attention; });
    boolean("model.recon_weight_sharing", [](auto& c) -> auto& { return c.model.recon_weight_sharing; });
    number("model.in_channels", [](auto& c) -> auto& { return c.model.in_channels; });

    number("train.batch", [](auto& c) -> auto& { return c.train.batch; });
    number("train.hr_patch", [](auto& c) -> auto& { return c.train.hr_patch; });
    number("train.lr0", [](auto& c) -> auto& { return c.train.lr0; });
    number("train.decay_period", [](auto& c) -> auto& { return c.train.decay_period; });
    number("train.iters_per_epoch", [](auto& c) -> auto& { return c.train.iters_per_epoch; });
    number("train.total_epochs", [](auto& c) -> auto& { return c.train.total_epochs; });
    number("train.seed", [](auto& c) -> auto& { return c.train.seed; });
    number("train.adam_beta1", [](auto& c) -> auto& { return c.train.adam.beta1; });
    number("train.adam_beta2", [](auto& c) -> auto& { return c.train.adam.beta2; });
    number("train.adam_eps", [](auto& c) -> auto& { return c.train.adam.eps; });
    number("train.checkpoint_every", [](auto& c) -> auto& { return c.train.checkpoint_every; });
    number("train.log_every", [](auto& c) -> auto& { return c.train.log_every; });
    number("train.memory_budget_mb", [](auto& c) -> auto& { return c.train.memory_budget_mb; });
    boolean("train.augment", [](auto& c) -> auto& { return c.train.augment; });
    boolean("train.precomputed_lr", [](auto& c) -> auto& { return c.train.precomputed_lr; });

    text("data.train_manifest", [](auto& c) -> auto& { return c.data.train_manifest; });
    t.push_back({"data.eval_manifests",
                 {[](RunConfig& c, const std::string&, const std::string& v) { c.data.eval_manifests = split_list(v); },
                  [](const RunConfig& c) { return join_list(c.data.eval_manifests); }}});
    text("data.checkpoint_dir", [](auto& c) -> auto& { return c.data.checkpoint_dir; });
    text("data.report_dir", [](auto& c) -> auto& { return c.data.report_dir; });
    return t;
  }();
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& [name, f] : fields())
    if (name == key) return &f;
  return nullptr;
}

}  // namespace

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError(key + ": unknown key");
  f->set(cfg, key, value);
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  apply_setting(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig parse_run_config(std::istream& in, const std::string& source) {
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    try {
      apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config");
  return parse_run_config(in, path.string());
}

std::string serialize(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& [key, f] : fields()) {
    const auto s = key.substr(0, key.find('.'));
    if (s != section && !section.empty()) out += '\n';
    section = s;
    out += key + " = " + f.get(cfg) + '\n';
  }
  return out;
}

std::string serialize(const ModelConfig& model) {
  RunConfig cfg;
  cfg.model = model;
  std::string out;
  for (const auto& [key, f] : fields())
    if (key.rfind("model.", 0) == 0) out += key + " = " + f.get(cfg) + '\n';
  return out;
}

ModelConfig parse_model_config(const std::string& text) {
  std::istringstream in(text);
  RunConfig cfg = parse_run_config(in, "<model config>");
  if (!(cfg.train == TrainConfig{}) || !(cfg.data == DataConfig{}))
    throw ConfigError("model config text contains non-model keys");
  return cfg.model;
}

}  // namespace mbmfn
