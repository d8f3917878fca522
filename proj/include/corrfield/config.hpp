#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace corrfield::cli {

// Flat key/value run configuration: TOML-style "key = value" lines with '#'
// comments and optional double quotes around values. Values are kept as
// strings and converted on access.
class KeyValues {
 public:
  static KeyValues from_file(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }

  std::string str(const std::string& key) const;
  long integer(const std::string& key) const;
  std::uint64_t uinteger(const std::string& key) const;
  double number(const std::string& key) const;
  bool boolean(const std::string& key) const;

  // Throws if any key is not in `allowed` (catches typos early).
  void restrict_keys(const std::vector<std::string>& allowed) const;

  // Overlay other's entries on top of this one.
  void merge(const KeyValues& other);

  // Deterministic dump: version/command header comments + sorted keys.
  void write(const std::filesystem::path& path, const std::string& command) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace corrfield::cli
