#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace gstz {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key=value text configuration ('#' comments, blank lines ignored) with
// programmatic overrides. The canonical form (sorted lines) feeds the config
// hash embedded in every text artifact.
class Config {
 public:
  Config() = default;
  static Config from_file(const std::string& path);

  void set(const std::string& key, const std::string& value);
  // Parses a single "key=value" override (CLI flag form).
  void set_line(const std::string& line);

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  std::string canonical() const;
  uint64_t hash() const;  // FNV-1a over the canonical form
  std::string hash_hex() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace gstz
