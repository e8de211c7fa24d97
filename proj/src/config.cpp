#include "varcon/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace varcon {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<std::size_t> to_dims(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (trim(v).empty() || v == "none") return out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto width = to_uint(key, trim(part));
    if (width == 0) throw ConfigError(key + ": widths must be positive");
    out.push_back(width);
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
Field number_field(T RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            if constexpr (std::is_floating_point_v<T>)
              c.*member = to_double(k, v);
            else
              c.*member = static_cast<T>(to_uint(k, v));
          },
          [member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>)
              return fmt_double(c.*member);
            else
              return std::to_string(c.*member);
          }};
}

Field bool_field(bool RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            c.*member = to_bool(k, v);
          },
          [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"dataset", {[](RunConfig& c, const std::string&, const std::string& v) { c.dataset = v; },
                   [](const RunConfig& c) { return c.dataset; }}},
      {"data_path", {[](RunConfig& c, const std::string&, const std::string& v) { c.data_path = v; },
                     [](const RunConfig& c) { return c.data_path; }}},
      {"classes", {[](RunConfig& c, const std::string& k, const std::string& v) {
                     c.classes = static_cast<int>(to_uint(k, v));
                   },
                   [](const RunConfig& c) { return std::to_string(c.classes); }}},
      {"per_class", number_field(&RunConfig::per_class)},
      {"input_dim", number_field(&RunConfig::input_dim)},
      {"separation", number_field(&RunConfig::separation)},
      {"data_seed", number_field(&RunConfig::data_seed)},
      {"val_fraction", number_field(&RunConfig::val_fraction)},
      {"train_limit", number_field(&RunConfig::train_limit)},
      {"val_limit", number_field(&RunConfig::val_limit)},
      {"loss", {[](RunConfig& c, const std::string& k, const std::string& v) {
                  if (v == "varcon") c.loss = LossKind::varcon;
                  else if (v == "supcon") c.loss = LossKind::supcon;
                  else if (v == "infonce") c.loss = LossKind::infonce;
                  else throw ConfigError(k + ": expected varcon, supcon or infonce");
                },
                [](const RunConfig& c) { return std::string(loss_name(c.loss)); }}},
      {"tau1", number_field(&RunConfig::tau1)},
      {"epsilon_init", number_field(&RunConfig::epsilon_init)},
      {"epsilon_min", number_field(&RunConfig::epsilon_min)},
      {"epsilon_max", number_field(&RunConfig::epsilon_max)},
      {"epsilon_lr_factor", number_field(&RunConfig::epsilon_lr_factor)},
      {"leave_one_out", bool_field(&RunConfig::leave_one_out)},
      {"batch_size", number_field(&RunConfig::batch_size)},
      {"epochs", number_field(&RunConfig::epochs)},
      {"warmup_epochs", number_field(&RunConfig::warmup_epochs)},
      {"base_lr", number_field(&RunConfig::base_lr)},
      {"momentum", number_field(&RunConfig::momentum)},
      {"weight_decay", number_field(&RunConfig::weight_decay)},
      {"balanced_batches", bool_field(&RunConfig::balanced_batches)},
      {"hidden_dims", {[](RunConfig& c, const std::string& k, const std::string& v) {
                         c.hidden_dims = to_dims(k, v);
                       },
                       [](const RunConfig& c) {
                         std::string out;
                         for (std::size_t w : c.hidden_dims)
                           out += (out.empty() ? "" : ",") + std::to_string(w);
                         return out.empty() ? std::string("none") : out;
                       }}},
      {"embed_dim", number_field(&RunConfig::embed_dim)},
      {"init_seed", number_field(&RunConfig::init_seed)},
      {"shuffle_seed", number_field(&RunConfig::shuffle_seed)},
      {"aug_seed", number_field(&RunConfig::aug_seed)},
      {"flip_prob", number_field(&RunConfig::flip_prob)},
      {"crop_padding", number_field(&RunConfig::crop_padding)},
      {"jitter", number_field(&RunConfig::jitter)},
      {"output_dir", {[](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; },
                      [](const RunConfig& c) { return c.output_dir.string(); }}},
      {"log_timing", bool_field(&RunConfig::log_timing)},
  };
  return table;
}

}  // namespace

Settings parse_settings(const std::string& text) {
  Settings out;
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + " is not key=value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + " has no key");
    out[key] = trim(std::string_view(body).substr(eq + 1));
  }
  return out;
}

Settings read_settings_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_settings(ss.str());
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [name, _] : fields()) out.push_back(name);
    return out;
  }();
  return keys;
}

RunConfig config_from_settings(const Settings& settings) {
  RunConfig config;
  for (const auto& [key, value] : settings) {
    bool known = false;
    for (const auto& [name, field] : fields()) {
      if (name != key) continue;
      field.set(config, key, value);
      known = true;
      break;
    }
    if (!known) throw ConfigError("unknown config key '" + key + "'");
  }
  return config;
}

const char* loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::varcon: return "varcon";
    case LossKind::supcon: return "supcon";
    case LossKind::infonce: return "infonce";
  }
  return "?";
}

TemperatureState RunConfig::temperatures() const {
  return {tau1, epsilon_init, epsilon_min, epsilon_max};
}

AugmentationPolicy RunConfig::augmentation() const {
  return {flip_prob, crop_padding, jitter, aug_seed};
}

std::vector<std::size_t> RunConfig::layer_dims(std::size_t in_dim) const {
  std::vector<std::size_t> dims{in_dim};
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(embed_dim);
  return dims;
}

std::vector<std::string> RunConfig::validate() const {
  if (dataset != "synthetic" && dataset != "csv" && dataset != "cifar10")
    throw ConfigError("dataset must be synthetic, csv or cifar10");
  if (dataset != "synthetic" && data_path.empty())
    throw ConfigError("data_path is required for dataset " + dataset);
  if (dataset == "synthetic" && (classes < 2 || per_class == 0 || input_dim == 0))
    throw ConfigError("synthetic data needs classes >= 2 and positive sizes");
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ConfigError("val_fraction must lie in (0, 1)");
  temperatures().validate();
  if (!(epsilon_lr_factor >= 0.0)) throw ConfigError("epsilon_lr_factor must be non-negative");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (!(base_lr >= 0.0)) throw ConfigError("base_lr must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (embed_dim == 0) throw ConfigError("embed_dim must be positive");
  augmentation().validate();

  std::vector<std::string> warnings;
  const int class_count = dataset == "cifar10" ? 10 : classes;
  if (batch_size < 2 * static_cast<std::size_t>(class_count))
    warnings.push_back("batch_size below 2x the class count; some classes may be absent from batches");
  if (warmup_epochs > epochs && epochs > 0)
    warnings.push_back("warmup_epochs exceeds epochs; the learning rate never reaches base_lr");
  return warnings;
}

std::string RunConfig::to_settings_text() const {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + "=" + field.get(*this) + "\n";
  return out;
}

}  // namespace varcon
