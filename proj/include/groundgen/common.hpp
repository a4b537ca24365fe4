#ifndef GROUNDGEN_COMMON_HPP
#define GROUNDGEN_COMMON_HPP

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace groundgen {

// Base of every error the library throws on its own behalf.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class OutOfBoundsError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& msg, int line = -1)
      : Error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class CoverageError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class DependencyError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss; carries the offending step.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& msg, long step)
      : Error(msg + " at step " + std::to_string(step)), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

// Tile fetch failure; retryable distinguishes network trouble from bad requests.
class TileError : public Error {
 public:
  TileError(const std::string& msg, bool retryable)
      : Error(msg), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

void log_info(const std::string& msg);
void log_warn(const std::string& msg);

// FNV-1a over a byte string; used for cache keys and architecture hashes.
std::uint64_t fnv1a64(std::string_view s);
std::uint64_t fnv1a64(const void* data, std::size_t n,
                      std::uint64_t seed = 14695981039346656037ull);
std::string hex64(std::uint64_t v);

}  // namespace groundgen

#endif
