#include "xfwi/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "xfwi/error.hpp"

namespace xfwi {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

namespace {

double to_double(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE) {
    throw ConfigError("cannot parse number for '" + what + "': '" + text + "'");
  }
  return v;
}

}  // namespace

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::string token;
  std::istringstream in(text);
  std::string chunk;
  while (in >> chunk) {
    std::stringstream parts(chunk);
    while (std::getline(parts, token, ',')) {
      if (!trim(token).empty()) out.push_back(to_double(token, "list"));
    }
  }
  return out;
}

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    cfg.entries_[key].push_back(trim(line.substr(eq + 1)));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

bool KeyValueConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string KeyValueConfig::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end() || it->second.empty()) {
    throw ConfigError(origin_ + ": missing key '" + key + "'");
  }
  return it->second.back();
}

std::vector<std::string> KeyValueConfig::get_all(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? std::vector<std::string>{} : it->second;
}

std::string KeyValueConfig::get_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key) const { return to_double(get(key), key); }

double KeyValueConfig::get_double_or(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long long KeyValueConfig::get_int(const std::string& key) const {
  const double v = get_double(key);
  const auto i = static_cast<long long>(v);
  if (static_cast<double>(i) != v) throw ConfigError("key '" + key + "' must be an integer");
  return i;
}

long long KeyValueConfig::get_int_or(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key) const {
  return parse_number_list(get(key));
}

std::vector<double> KeyValueConfig::get_doubles_or(const std::string& key,
                                                   std::vector<double> fallback) const {
  return has(key) ? get_doubles(key) : fallback;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = {value};
}

void KeyValueConfig::add(const std::string& key, const std::string& value) {
  entries_[key].push_back(value);
}

void KeyValueConfig::apply_overrides(const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value: " + o);
    set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
}

}  // namespace xfwi
