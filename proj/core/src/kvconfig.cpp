#include "causalpose/kvconfig.hpp"

#include <fstream>
#include <sstream>

#include "causalpose/errors.hpp"

namespace causalpose {

namespace {
std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}
}  // namespace

KvConfig KvConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str(), path);
}

KvConfig KvConfig::parse_text(const std::string& text, const std::string& origin) {
  KvConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected `key = value`, got: " + line);
    }
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    cfg.entries_.emplace_back(key, val);
  }
  return cfg;
}

bool KvConfig::has(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return true;
  }
  return false;
}

int KvConfig::count(const std::string& key) const {
  int c = 0;
  for (const auto& [k, v] : entries_) {
    if (k == key) ++c;
  }
  return c;
}

const std::string& KvConfig::require(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  throw ConfigError(origin_ + ": missing required key `" + key + "`");
}

std::string KvConfig::get_str(const std::string& key) const { return require(key); }

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) const {
  return has(key) ? require(key) : fallback;
}

double KvConfig::get_double(const std::string& key) const {
  const std::string& v = require(key);
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key `" + key + "`: not a number: " + v);
  }
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

int64_t KvConfig::get_int(const std::string& key) const {
  const std::string& v = require(key);
  try {
    size_t pos = 0;
    long long d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key `" + key + "`: not an integer: " + v);
  }
}

int64_t KvConfig::get_int(const std::string& key, int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  std::string v = require(key);
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(origin_ + ": key `" + key + "`: not a boolean: " + v);
}

std::vector<std::string> KvConfig::get_tokens(const std::string& key) const {
  std::istringstream in(require(key));
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) {
    if (tok == ":") continue;
    out.push_back(tok);
  }
  return out;
}

std::vector<double> KvConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& tok : get_tokens(key)) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError(origin_ + ": key `" + key + "`: not a number: " + tok);
    }
  }
  return out;
}

std::vector<int> KvConfig::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (const auto& tok : get_tokens(key)) {
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw ConfigError(origin_ + ": key `" + key + "`: not an integer: " + tok);
    }
  }
  return out;
}

std::vector<std::string> KvConfig::get_all(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (k == key) out.push_back(v);
  }
  return out;
}

std::vector<std::string> KvConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    bool seen = false;
    for (const auto& o : out) {
      if (o == k) {
        seen = true;
        break;
      }
    }
    if (!seen) out.push_back(k);
  }
  return out;
}

void KvConfig::set(const std::string& key, const std::string& value) {
  bool replaced = false;
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (it->first == key) {
      if (!replaced) {
        it->second = value;
        replaced = true;
        ++it;
      } else {
        it = entries_.erase(it);
      }
    } else {
      ++it;
    }
  }
  if (!replaced) entries_.emplace_back(key, value);
}

std::string KvConfig::serialize() const {
  std::ostringstream os;
  for (const auto& [k, v] : entries_) os << k << " = " << v << "\n";
  return os.str();
}

}  // namespace causalpose
