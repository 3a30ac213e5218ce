#pragma once

// Error taxonomy, deterministic RNG, and small string/file helpers shared
// across the library. The RNG draws are hand-rolled on top of mt19937_64 so
// that cohorts, splits and bootstrap resamples are byte-stable across
// standard-library implementations.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

namespace emerge {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input data (schema violations, invariant breaches). CLI exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed file content; messages carry the offending line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Bad or incomplete configuration. CLI exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Gateway transport failure after retries. CLI exit code 2.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Typed refusal from a chat model's content filter. Never retried; the
// caller decides the fallback.
class ContentRiskError : public Error {
 public:
  using Error::Error;
};

// Metric undefined for the given inputs (e.g. single-class labels).
class MetricError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// string helpers

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Collapse every whitespace run to a single space and trim the ends.
inline std::string squeeze_spaces(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_ws = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_ws = true;
    } else {
      if (in_ws && !out.empty()) out.push_back(' ');
      in_ws = false;
      out.push_back(c);
    }
  }
  return out;
}

inline std::vector<std::string> split(std::string_view s, char delim) {
  std::vector<std::string> parts;
  size_t start = 0;
  for (size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == delim) {
      parts.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return parts;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline bool contains(std::string_view hay, std::string_view needle) {
  return hay.find(needle) != std::string_view::npos;
}

inline size_t count_occurrences(std::string_view hay, std::string_view needle) {
  if (needle.empty()) return 0;
  size_t n = 0, pos = 0;
  while ((pos = hay.find(needle, pos)) != std::string_view::npos) {
    ++n;
    pos += needle.size();
  }
  return n;
}

// ---------------------------------------------------------------------------
// deterministic RNG

class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // standard normal via Box-Muller (stdlib normal_distribution is
  // implementation-defined, which would break byte-stable cohorts)
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    spare_ = r * std::sin(kTwoPi * u2);
    has_spare_ = true;
    return r * std::cos(kTwoPi * u2);
  }

  // uniform index in [0, n) without modulo bias
  size_t index(size_t n) {
    if (n == 0) throw ValidationError("Rng::index: n must be positive");
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<size_t>(x % n);
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// hashing

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw Error("sha256: EVP_MD_CTX_new failed");
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  EVP_DigestUpdate(ctx, data.data(), data.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hexd = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hexd[digest[i] >> 4]);
    out.push_back(hexd[digest[i] & 0xf]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// files

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// write-temp-then-rename; readers never observe a partial file
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(fnv1a64(path.string()) & 0xffff);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("short write: " + tmp.string());
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// json-line logging (stderr by default; silenced in tests)

namespace logging {

inline std::ostream*& sink() {
  static std::ostream* s = nullptr;
  return s;
}

inline std::mutex& mu() {
  static std::mutex m;
  return m;
}

inline void set_sink(std::ostream* s) { sink() = s; }

inline void emit(const std::string& json_line) {
  std::lock_guard<std::mutex> lock(mu());
  if (sink()) *sink() << json_line << '\n';
}

}  // namespace logging

}  // namespace emerge
