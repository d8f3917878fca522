#include "corrfield/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include "corrfield/version.hpp"

namespace corrfield::cli {

namespace {
[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool looks_like_number(const std::string& v) {
  if (v.empty()) return false;
  char* end = nullptr;
  std::strtod(v.c_str(), &end);
  return end == v.c_str() + v.size();
}
}  // namespace

KeyValues KeyValues::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file: " + path.string());
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      fail(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      fail(path.string() + ":" + std::to_string(lineno) + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    kv.entries_[key] = value;
  }
  return kv;
}

std::string KeyValues::str(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) fail("missing config key '" + key + "'");
  return it->second;
}

long KeyValues::integer(const std::string& key) const {
  const std::string v = str(key);
  std::size_t used = 0;
  long out = 0;
  try {
    out = std::stol(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size())
    fail("config key '" + key + "' is not an integer: '" + v + "'");
  return out;
}

std::uint64_t KeyValues::uinteger(const std::string& key) const {
  const std::string v = str(key);
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size())
    fail("config key '" + key + "' is not an unsigned integer: '" + v + "'");
  return out;
}

double KeyValues::number(const std::string& key) const {
  const std::string v = str(key);
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size())
    fail("config key '" + key + "' is not a number: '" + v + "'");
  return out;
}

bool KeyValues::boolean(const std::string& key) const {
  const std::string v = str(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail("config key '" + key + "' is not a boolean: '" + v + "'");
}

void KeyValues::restrict_keys(const std::vector<std::string>& allowed) const {
  for (const auto& [key, value] : entries_) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      fail("unknown config key '" + key + "'");
  }
}

void KeyValues::merge(const KeyValues& other) {
  for (const auto& [key, value] : other.entries_) entries_[key] = value;
}

void KeyValues::write(const std::filesystem::path& path, const std::string& command) const {
  std::ofstream out(path);
  if (!out) fail("cannot write config file: " + path.string());
  out << "# " << version_string() << "\n# command = " << command << '\n';
  for (const auto& [key, value] : entries_) {
    if (looks_like_number(value) || value == "true" || value == "false")
      out << key << " = " << value << '\n';
    else
      out << key << " = \"" << value << "\"\n";
  }
  if (!out) fail("failed writing config file: " + path.string());
}

}  // namespace corrfield::cli
