#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace batchens {

// Parsed INI-style experiment configuration: [section] headers, key = value
// lines, #/; comments. Values stay strings until a typed getter converts them.
struct ConfigFile {
  std::map<std::string, std::map<std::string, std::string>> sections;
};

// Syntax only (FormatError on malformed lines, ConfigError on duplicate keys).
ConfigFile parse_config(const std::string& text);

// Read + parse + reject unknown sections/keys. IoError if unreadable.
ConfigFile load_config_file(const std::string& path);

// Every section.key checked against the schema of known keys; violations
// raise ConfigError naming the full key path.
void validate_known_keys(const ConfigFile& config);

// Sorted "section.key=value" lines: comment- and order-insensitive identity
// for a config, hashed into checkpoints and used for rerun detection.
std::string canonical_config_text(const ConfigFile& config);
std::uint64_t config_fingerprint(const ConfigFile& config);

// Typed getters. The required forms throw ConfigError naming the missing
// key; all conversion failures name the key path and the offending value.
bool cfg_has(const ConfigFile& config, const std::string& section,
             const std::string& key);
std::string cfg_string(const ConfigFile& config, const std::string& section,
                       const std::string& key);
std::string cfg_string(const ConfigFile& config, const std::string& section,
                       const std::string& key, const std::string& fallback);
std::uint64_t cfg_u64(const ConfigFile& config, const std::string& section,
                      const std::string& key);
std::uint64_t cfg_u64(const ConfigFile& config, const std::string& section,
                      const std::string& key, std::uint64_t fallback);
double cfg_double(const ConfigFile& config, const std::string& section,
                  const std::string& key);
double cfg_double(const ConfigFile& config, const std::string& section,
                  const std::string& key, double fallback);
std::vector<std::string> cfg_string_list(const ConfigFile& config,
                                         const std::string& section,
                                         const std::string& key,
                                         const std::vector<std::string>& fallback);
std::vector<std::uint64_t> cfg_u64_list(const ConfigFile& config,
                                        const std::string& section,
                                        const std::string& key,
                                        const std::vector<std::uint64_t>& fallback);
std::vector<double> cfg_double_list(const ConfigFile& config,
                                    const std::string& section,
                                    const std::string& key,
                                    const std::vector<double>& fallback);

}  // namespace batchens
