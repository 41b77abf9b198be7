#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace snrge {

/// Flat key/value settings. File syntax: one `key = value` per line, `#`
/// starts a comment, blank lines ignored. Later assignments win.
class Config {
 public:
  static Config load(const std::filesystem::path& path);
  static Config parse(const std::string& text);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  /// Copies every key of `other` over this one.
  void merge(const Config& other);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated list, or `start:stop:step` (inclusive of stop).
  std::vector<double> get_list(const std::string& key,
                               const std::vector<double>& fallback) const;

  std::string to_string() const;
  void save(const std::filesystem::path& path) const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::string format_list(const std::vector<double>& values);

}  // namespace snrge
