#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace xfwi {

/// key=value text configuration. Keys may repeat (e.g. one `source=` line per
/// shot); '#' starts a comment. Later `set()` calls override file values.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  /// Last value for key; throws ConfigError when absent.
  std::string get(const std::string& key) const;
  std::vector<std::string> get_all(const std::string& key) const;

  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int_or(const std::string& key, long long fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<double> get_doubles_or(const std::string& key, std::vector<double> fallback) const;

  /// Replace every value of key with a single value.
  void set(const std::string& key, const std::string& value);
  void add(const std::string& key, const std::string& value);
  /// Apply "key=value" override strings.
  void apply_overrides(const std::vector<std::string>& overrides);

  const std::string& origin() const { return origin_; }

 private:
  std::string origin_ = "<empty>";
  std::map<std::string, std::vector<std::string>> entries_;
};

/// Numbers separated by commas and/or whitespace.
std::vector<double> parse_number_list(const std::string& text);

std::string trim(const std::string& s);

}  // namespace xfwi
