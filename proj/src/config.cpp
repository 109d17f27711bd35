// SPDX-License-Identifier: Apache-2.0

#include "cimste/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "cimste/errors.hpp"

namespace cimste::config {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& value, const std::string& key) {
  std::string v = trim(value);
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
    throw UsageError("value for '" + key + "' must be a [a, b, ...] list, got '" + value +
                     "'");
  }
  std::vector<std::string> items;
  std::string body = v.substr(1, v.size() - 2);
  std::string item;
  std::stringstream ss(body);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

double parse_double(const std::string& value, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return d;
  } catch (const std::exception&) {
    throw UsageError("cannot parse '" + value + "' as a number for '" + key + "'");
  }
}

std::uint64_t parse_u64(const std::string& value, const std::string& key) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw UsageError("cannot parse '" + value + "' as an unsigned integer for '" + key +
                     "'");
  }
  return out;
}

int parse_int(const std::string& value, const std::string& key) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw UsageError("cannot parse '" + value + "' as an integer for '" + key + "'");
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Field {
  std::string key;  // "section.name"
  std::function<void(train::TrainConfig&, const std::string&)> set;
  std::function<std::string(const train::TrainConfig&)> get;
};

const std::vector<Field>& fields() {
  using TC = train::TrainConfig;
  static const std::vector<Field> table = {
      {"train.dataset", [](TC& c, const std::string& v) { c.dataset = v; },
       [](const TC& c) { return c.dataset; }},
      {"train.corpus", [](TC& c, const std::string& v) { c.corpus_path = v; },
       [](const TC& c) { return c.corpus_path; }},
      {"train.grad_mode",
       [](TC& c, const std::string& v) { c.grad_mode = layer::parse_grad_mode(v); },
       [](const TC& c) { return layer::to_string(c.grad_mode); }},
      {"train.levels",
       [](TC& c, const std::string& v) {
         c.levels.clear();
         for (const std::string& item : split_list(v, "train.levels")) {
           c.levels.push_back(parse_double(item, "train.levels"));
         }
       },
       [](const TC& c) {
         std::string out = "[";
         for (std::size_t i = 0; i < c.levels.size(); ++i) {
           if (i) out += ", ";
           out += fmt_double(c.levels[i]);
         }
         return out + "]";
       }},
      {"train.steps",
       [](TC& c, const std::string& v) { c.steps = parse_u64(v, "train.steps"); },
       [](const TC& c) { return std::to_string(c.steps); }},
      {"train.batch_size",
       [](TC& c, const std::string& v) { c.batch_size = parse_u64(v, "train.batch_size"); },
       [](const TC& c) { return std::to_string(c.batch_size); }},
      {"train.seed",
       [](TC& c, const std::string& v) { c.seed = parse_u64(v, "train.seed"); },
       [](const TC& c) { return std::to_string(c.seed); }},
      {"train.eval_interval",
       [](TC& c, const std::string& v) {
         c.eval_interval = parse_u64(v, "train.eval_interval");
       },
       [](const TC& c) { return std::to_string(c.eval_interval); }},
      {"train.eval_redraws",
       [](TC& c, const std::string& v) {
         c.eval_redraws = parse_u64(v, "train.eval_redraws");
       },
       [](const TC& c) { return std::to_string(c.eval_redraws); }},
      {"train.alpha",
       [](TC& c, const std::string& v) { c.adam.alpha = parse_double(v, "train.alpha"); },
       [](const TC& c) { return fmt_double(c.adam.alpha); }},
      {"train.beta1",
       [](TC& c, const std::string& v) { c.adam.beta1 = parse_double(v, "train.beta1"); },
       [](const TC& c) { return fmt_double(c.adam.beta1); }},
      {"train.beta2",
       [](TC& c, const std::string& v) { c.adam.beta2 = parse_double(v, "train.beta2"); },
       [](const TC& c) { return fmt_double(c.adam.beta2); }},
      {"train.epsilon",
       [](TC& c, const std::string& v) {
         c.adam.epsilon = parse_double(v, "train.epsilon");
       },
       [](const TC& c) { return fmt_double(c.adam.epsilon); }},
      {"model.hidden",
       [](TC& c, const std::string& v) {
         c.hidden.clear();
         for (const std::string& item : split_list(v, "model.hidden")) {
           c.hidden.push_back(parse_u64(item, "model.hidden"));
         }
       },
       [](const TC& c) {
         std::string out = "[";
         for (std::size_t i = 0; i < c.hidden.size(); ++i) {
           if (i) out += ", ";
           out += std::to_string(c.hidden[i]);
         }
         return out + "]";
       }},
      {"noise.level",
       [](TC& c, const std::string& v) { c.noise.level = parse_double(v, "noise.level"); },
       [](const TC& c) { return fmt_double(c.noise.level); }},
      {"noise.sigma_prog_base",
       [](TC& c, const std::string& v) {
         c.noise.sigma_prog_base = parse_double(v, "noise.sigma_prog_base");
       },
       [](const TC& c) { return fmt_double(c.noise.sigma_prog_base); }},
      {"noise.sigma_read",
       [](TC& c, const std::string& v) {
         c.noise.sigma_read = parse_double(v, "noise.sigma_read");
       },
       [](const TC& c) { return fmt_double(c.noise.sigma_read); }},
      {"noise.thermal_kappa",
       [](TC& c, const std::string& v) {
         c.noise.thermal_kappa = parse_double(v, "noise.thermal_kappa");
       },
       [](const TC& c) { return fmt_double(c.noise.thermal_kappa); }},
      {"noise.delta_T",
       [](TC& c, const std::string& v) {
         c.noise.delta_T = parse_double(v, "noise.delta_T");
       },
       [](const TC& c) { return fmt_double(c.noise.delta_T); }},
      {"noise.retention_tau",
       [](TC& c, const std::string& v) {
         c.noise.retention_tau = parse_double(v, "noise.retention_tau");
       },
       [](const TC& c) { return fmt_double(c.noise.retention_tau); }},
      {"noise.retention_t",
       [](TC& c, const std::string& v) {
         c.noise.retention_t = parse_double(v, "noise.retention_t");
       },
       [](const TC& c) { return fmt_double(c.noise.retention_t); }},
      {"noise.ir_gamma",
       [](TC& c, const std::string& v) {
         c.noise.ir_gamma = parse_double(v, "noise.ir_gamma");
       },
       [](const TC& c) { return fmt_double(c.noise.ir_gamma); }},
      {"noise.nonlin_beta",
       [](TC& c, const std::string& v) {
         c.noise.nonlin_beta = parse_double(v, "noise.nonlin_beta");
       },
       [](const TC& c) { return fmt_double(c.noise.nonlin_beta); }},
      {"noise.adc_bits",
       [](TC& c, const std::string& v) { c.noise.adc_bits = parse_int(v, "noise.adc_bits"); },
       [](const TC& c) { return std::to_string(c.noise.adc_bits); }},
      {"noise.dac_bits",
       [](TC& c, const std::string& v) { c.noise.dac_bits = parse_int(v, "noise.dac_bits"); },
       [](const TC& c) { return std::to_string(c.noise.dac_bits); }},
      {"noise.seed",
       [](TC& c, const std::string& v) { c.noise.seed = parse_u64(v, "noise.seed"); },
       [](const TC& c) { return std::to_string(c.noise.seed); }},
      {"noise.enabled_sources",
       [](TC& c, const std::string& v) {
         c.noise.enabled_sources =
             noise::parse_sources(split_list(v, "noise.enabled_sources"));
       },
       [](const TC& c) {
         std::string out = "[";
         const std::vector<std::string> names =
             noise::source_names(c.noise.enabled_sources);
         for (std::size_t i = 0; i < names.size(); ++i) {
           if (i) out += ", ";
           out += names[i];
         }
         return out + "]";
       }},
  };
  return table;
}

const Field* find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

std::string valid_keys_message() {
  std::string msg = "valid keys:";
  for (const Field& f : fields()) msg += " " + f.key;
  return msg;
}

}  // namespace

const std::string* RawConfig::find(const std::string& qualified_key) const {
  for (const auto& [k, v] : entries) {
    if (k == qualified_key) return &v;
  }
  return nullptr;
}

RawConfig parse_ini(const std::string& text) {
  RawConfig raw;
  std::string section;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw UsageError("malformed section header at line " + std::to_string(lineno));
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("expected key = value at line " + std::to_string(lineno));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      throw UsageError("key '" + key + "' appears before any [section]");
    }
    raw.entries.emplace_back(section + "." + key, value);
  }
  return raw;
}

train::TrainConfig train_config_from_ini(const std::string& text) {
  train::TrainConfig cfg;
  const RawConfig raw = parse_ini(text);
  for (const auto& [key, value] : raw.entries) {
    apply_override(cfg, key, value);
  }
  return cfg;
}

train::TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return train_config_from_ini(ss.str());
}

void apply_override(train::TrainConfig& cfg, const std::string& key,
                    const std::string& value) {
  const Field* f = find_field(key);
  if (!f) {
    throw UsageError("unknown config key '" + key + "'; " + valid_keys_message());
  }
  f->set(cfg, value);
}

std::string to_ini(const train::TrainConfig& cfg) {
  std::string out;
  std::string section;
  for (const Field& f : fields()) {
    const std::size_t dot = f.key.find('.');
    const std::string sec = f.key.substr(0, dot);
    const std::string name = f.key.substr(dot + 1);
    if (sec != section) {
      if (!out.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += name + " = " + f.get(cfg) + "\n";
  }
  return out;
}

std::vector<std::string> valid_keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.push_back(f.key);
  return out;
}

}  // namespace cimste::config
