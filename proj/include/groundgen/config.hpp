#ifndef GROUNDGEN_CONFIG_HPP
#define GROUNDGEN_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "groundgen/common.hpp"

namespace groundgen::config {

// Flat structured text: `key = value` lines grouped under `[section]`
// headers, '#' comments. Sections and keys keep insertion order so
// serialization is deterministic and parse(serialize(c)) == c.
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::string& path);
  std::string serialize() const;
  void save(const std::string& path) const;

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const;
  int get_int(const std::string& section, const std::string& key) const;
  long get_long(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key) const;
  bool get_bool(const std::string& section, const std::string& key) const;
  std::uint64_t get_u64(const std::string& section, const std::string& key) const;

  void set(const std::string& section, const std::string& key,
           const std::string& value);
  void set_int(const std::string& section, const std::string& key, long value);
  void set_double(const std::string& section, const std::string& key,
                  double value);
  void set_bool(const std::string& section, const std::string& key, bool value);
  void set_u64(const std::string& section, const std::string& key,
               std::uint64_t value);

  bool operator==(const Config&) const = default;

 private:
  struct Section {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;
    bool operator==(const Section&) const = default;
  };
  const std::string* find(const std::string& section,
                          const std::string& key) const;
  std::vector<Section> sections_;
};

}  // namespace groundgen::config

#endif
