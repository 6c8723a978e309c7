#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace flatdiv {

/// Configuration problem (bad key, bad value, unknown key). Maps to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat key-value store with dotted keys. Files use INI-style sections:
///
///   # comment
///   [verify]
///   n_tr = 3000
///   eta_grid = 0.01, 0.05, 0.1
///
/// Typed getters consume keys and record the resolved value (explicit or
/// default); reject_unknown() then refuses any key the command never read,
/// and resolved_snapshot() reproduces the complete effective configuration.
class ConfigTree {
 public:
  void load_file(const std::filesystem::path& path);
  /// "section.key=value" as passed to --set.
  void set_assignment(const std::string& assignment);
  void set(const std::string& key, std::string value);
  bool contains(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& def) const;
  double get_double(const std::string& key, double def) const;
  std::int64_t get_int(const std::string& key, std::int64_t def) const;
  std::uint64_t get_uint64(const std::string& key, std::uint64_t def) const;
  bool get_bool(const std::string& key, bool def) const;
  std::vector<double> get_double_list(const std::string& key, const std::vector<double>& def) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& def) const;

  /// Throws ConfigError naming every key that was set but never consumed.
  void reject_unknown() const;
  /// Sorted "key = value" lines of every consumed key with its final value.
  std::string resolved_snapshot() const;

 private:
  const std::string* lookup(const std::string& key) const;
  void record(const std::string& key, const std::string& value) const;

  std::map<std::string, std::string> values_;
  mutable std::map<std::string, std::string> resolved_;
  mutable std::set<std::string> consumed_;
};

std::uint64_t fnv1a_hash(const std::string& text);

}  // namespace flatdiv
