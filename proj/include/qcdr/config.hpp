#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace qcdr {

/// Flat `key = value` text config. Lines starting with '#' are comments.
/// Unknown keys are kept so several components can share one file.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return values_.contains(key); }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void merge(const KeyValueConfig& other);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

  /// Keys in sorted order, one `key = value` per line.
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

std::string join_ints(const std::vector<int>& values, char sep = ',');
std::vector<int> parse_int_list(const std::string& text);

}  // namespace qcdr
