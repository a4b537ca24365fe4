#include "groundgen/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace groundgen::config {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ParseError("unterminated section header", lineno);
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) throw ParseError("empty section name", lineno);
      c.sections_.push_back({section, {}});
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError("expected key = value", lineno);
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ParseError("empty key", lineno);
    if (c.sections_.empty() || c.sections_.back().name != section)
      c.sections_.push_back({section, {}});
    c.sections_.back().entries.emplace_back(key, value);
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::string Config::serialize() const {
  std::string out;
  for (const auto& s : sections_) {
    if (!out.empty()) out += "\n";
    out += "[" + s.name + "]\n";
    for (const auto& [k, v] : s.entries) out += k + " = " + v + "\n";
  }
  return out;
}

void Config::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << serialize();
}

const std::string* Config::find(const std::string& section,
                                const std::string& key) const {
  for (const auto& s : sections_) {
    if (s.name != section) continue;
    for (const auto& [k, v] : s.entries)
      if (k == key) return &v;
  }
  return nullptr;
}

bool Config::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

std::string Config::get(const std::string& section,
                        const std::string& key) const {
  const std::string* v = find(section, key);
  if (!v) throw ConfigError("missing config key [" + section + "] " + key);
  return *v;
}

std::string Config::get_or(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
  const std::string* v = find(section, key);
  return v ? *v : fallback;
}

int Config::get_int(const std::string& section, const std::string& key) const {
  return static_cast<int>(get_long(section, key));
}

long Config::get_long(const std::string& section, const std::string& key) const {
  try {
    return std::stol(get(section, key));
  } catch (const std::exception&) {
    throw ConfigError("config key [" + section + "] " + key + " is not an integer");
  }
}

double Config::get_double(const std::string& section,
                          const std::string& key) const {
  try {
    return std::stod(get(section, key));
  } catch (const std::exception&) {
    throw ConfigError("config key [" + section + "] " + key + " is not a number");
  }
}

bool Config::get_bool(const std::string& section, const std::string& key) const {
  const std::string v = get(section, key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key [" + section + "] " + key + " is not a boolean");
}

std::uint64_t Config::get_u64(const std::string& section,
                              const std::string& key) const {
  try {
    return std::stoull(get(section, key));
  } catch (const std::exception&) {
    throw ConfigError("config key [" + section + "] " + key + " is not an integer");
  }
}

void Config::set(const std::string& section, const std::string& key,
                 const std::string& value) {
  for (auto& s : sections_) {
    if (s.name != section) continue;
    for (auto& [k, v] : s.entries)
      if (k == key) {
        v = value;
        return;
      }
    s.entries.emplace_back(key, value);
    return;
  }
  sections_.push_back({section, {{key, value}}});
}

void Config::set_int(const std::string& section, const std::string& key,
                     long value) {
  set(section, key, std::to_string(value));
}

void Config::set_double(const std::string& section, const std::string& key,
                        double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  set(section, key, buf);
}

void Config::set_bool(const std::string& section, const std::string& key,
                      bool value) {
  set(section, key, value ? "true" : "false");
}

void Config::set_u64(const std::string& section, const std::string& key,
                     std::uint64_t value) {
  set(section, key, std::to_string(value));
}

}  // namespace groundgen::config
