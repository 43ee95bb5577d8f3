#include "batchens/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "batchens/checkpoint.hpp"
#include "batchens/error.hpp"

namespace batchens {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// section → keys. A key listed here is the only way a config line is legal;
// every command shares the one schema so a file can drive several commands.
const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"data",
       {"kind", "classes", "train_per_class", "test_per_class", "dim", "spread",
        "seed", "train_images", "train_labels", "test_images", "test_labels"}},
      {"model", {"hidden", "members", "dropout"}},
      {"train",
       {"batch_size", "epochs", "lr", "lr_milestones", "lr_factor",
        "weight_decay", "decay_mode", "momentum", "extra_iteration_factor"}},
      {"run", {"seeds", "out"}},
      {"compare", {"variants", "mc_samples"}},
      {"lifelong", {"tasks", "methods"}},
      {"diversity", {"fractions", "methods", "mc_samples"}},
      {"corrupt", {"levels", "variants", "checkpoints"}},
      {"gradcheck", {"instances"}},
  };
  return s;
}

[[noreturn]] void missing(const std::string& section, const std::string& key) {
  throw ConfigError("missing required key '" + section + "." + key + "'");
}

const std::string* find_value(const ConfigFile& config, const std::string& section,
                              const std::string& key) {
  auto sec = config.sections.find(section);
  if (sec == config.sections.end()) return nullptr;
  auto it = sec->second.find(key);
  return it == sec->second.end() ? nullptr : &it->second;
}

std::uint64_t to_u64(const std::string& section, const std::string& key,
                     const std::string& value) {
  std::uint64_t out = 0;
  const char* begin = value.data();
  const char* end = begin + value.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("'" + section + "." + key + "': cannot parse '" + value +
                      "' as a non-negative integer");
  }
  return out;
}

double to_double(const std::string& section, const std::string& key,
                 const std::string& value) {
  if (value.empty()) {
    throw ConfigError("'" + section + "." + key + "': empty value");
  }
  char* end = nullptr;
  const double out = std::strtod(value.c_str(), &end);
  if (end != value.c_str() + value.size()) {
    throw ConfigError("'" + section + "." + key + "': cannot parse '" + value +
                      "' as a number");
  }
  return out;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

ConfigFile parse_config(const std::string& text) {
  ConfigFile config;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::size_t hash = raw.find_first_of("#;");
    std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw FormatError("config line " + std::to_string(lineno) +
                          ": malformed section header '" + line + "'");
      }
      section = trim(line.substr(1, line.size() - 2));
      config.sections[section];  // a section may legitimately stay empty
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(lineno) +
                        ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw FormatError("config line " + std::to_string(lineno) + ": empty key");
    }
    if (section.empty()) {
      throw FormatError("config line " + std::to_string(lineno) + ": key '" + key +
                        "' appears before any [section]");
    }
    auto [it, inserted] = config.sections[section].emplace(key, value);
    (void)it;
    if (!inserted) {
      throw ConfigError("duplicate key '" + section + "." + key + "'");
    }
  }
  return config;
}

ConfigFile load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream all;
  all << in.rdbuf();
  if (in.bad()) throw IoError("read from config file '" + path + "' failed");
  ConfigFile config = parse_config(all.str());
  validate_known_keys(config);
  return config;
}

void validate_known_keys(const ConfigFile& config) {
  for (const auto& [section, keys] : config.sections) {
    auto known = schema().find(section);
    if (known == schema().end()) {
      throw ConfigError("unknown config section '" + section + "'");
    }
    for (const auto& [key, value] : keys) {
      (void)value;
      if (known->second.count(key) == 0) {
        throw ConfigError("unknown config key '" + section + "." + key + "'");
      }
    }
  }
}

std::string canonical_config_text(const ConfigFile& config) {
  std::ostringstream out;
  for (const auto& [section, keys] : config.sections)
    for (const auto& [key, value] : keys)
      out << section << '.' << key << '=' << value << '\n';
  return out.str();
}

std::uint64_t config_fingerprint(const ConfigFile& config) {
  return fnv1a64(canonical_config_text(config));
}

bool cfg_has(const ConfigFile& config, const std::string& section,
             const std::string& key) {
  return find_value(config, section, key) != nullptr;
}

std::string cfg_string(const ConfigFile& config, const std::string& section,
                       const std::string& key) {
  const std::string* v = find_value(config, section, key);
  if (v == nullptr) missing(section, key);
  return *v;
}

std::string cfg_string(const ConfigFile& config, const std::string& section,
                       const std::string& key, const std::string& fallback) {
  const std::string* v = find_value(config, section, key);
  return v == nullptr ? fallback : *v;
}

std::uint64_t cfg_u64(const ConfigFile& config, const std::string& section,
                      const std::string& key) {
  return to_u64(section, key, cfg_string(config, section, key));
}

std::uint64_t cfg_u64(const ConfigFile& config, const std::string& section,
                      const std::string& key, std::uint64_t fallback) {
  const std::string* v = find_value(config, section, key);
  return v == nullptr ? fallback : to_u64(section, key, *v);
}

double cfg_double(const ConfigFile& config, const std::string& section,
                  const std::string& key) {
  return to_double(section, key, cfg_string(config, section, key));
}

double cfg_double(const ConfigFile& config, const std::string& section,
                  const std::string& key, double fallback) {
  const std::string* v = find_value(config, section, key);
  return v == nullptr ? fallback : to_double(section, key, *v);
}

std::vector<std::string> cfg_string_list(const ConfigFile& config,
                                         const std::string& section,
                                         const std::string& key,
                                         const std::vector<std::string>& fallback) {
  const std::string* v = find_value(config, section, key);
  return v == nullptr ? fallback : split_list(*v);
}

std::vector<std::uint64_t> cfg_u64_list(const ConfigFile& config,
                                        const std::string& section,
                                        const std::string& key,
                                        const std::vector<std::uint64_t>& fallback) {
  const std::string* v = find_value(config, section, key);
  if (v == nullptr) return fallback;
  std::vector<std::uint64_t> out;
  for (const std::string& item : split_list(*v)) out.push_back(to_u64(section, key, item));
  return out;
}

std::vector<double> cfg_double_list(const ConfigFile& config,
                                    const std::string& section,
                                    const std::string& key,
                                    const std::vector<double>& fallback) {
  const std::string* v = find_value(config, section, key);
  if (v == nullptr) return fallback;
  std::vector<double> out;
  for (const std::string& item : split_list(*v)) out.push_back(to_double(section, key, item));
  return out;
}

}  // namespace batchens
