#pragma once

#include <map>
#include <string>
#include <vector>

namespace cryoforge {

/**
 * Flat key=value configuration. Files hold one `key = value` pair per line;
 * blank lines and lines whose first non-space character is '#' are skipped.
 * Values are kept verbatim (trimmed); typed accessors parse strictly and name
 * the offending key on failure. Command-line overrides are applied on top of
 * the file, and the fully resolved set can be rendered back out (sorted) so a
 * run's inputs are reproducible from its output directory alone.
 */
class ConfigMap {
 public:
  static ConfigMap from_file(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  /** Typed lookups; return the fallback when the key is absent. */
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_long(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /** Sorted `key=value` lines, one per entry. */
  std::string render() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace cryoforge
