#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace acerlab {

using Vec = std::vector<double>;
using Mask = std::vector<char>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct config_error : std::runtime_error {
  explicit config_error(const std::string& m) : std::runtime_error("config error: " + m) {}
};
struct invalid_mask_error : std::runtime_error {
  explicit invalid_mask_error(const std::string& m) : std::runtime_error("invalid mask: " + m) {}
};
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& m) : std::runtime_error("numeric error: " + m) {}
};
struct protocol_error : std::runtime_error {
  explicit protocol_error(const std::string& m) : std::runtime_error("protocol error: " + m) {}
};
struct input_error : std::runtime_error {
  explicit input_error(const std::string& m) : std::runtime_error("input error: " + m) {}
};

// ---------------------------------------------------------------------------
// Random numbers
//
// A small counter-free PRNG wrapper with fully specified output mapping so
// that runs are reproducible independent of the standard library's
// distribution implementations.  splitmix64 is used both as the engine
// seeding function and to derive independent per-episode streams.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derive a stream seed from a base seed and an index (e.g. episode number).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t s = base ^ (0x9e3779b97f4a7c15ULL * (index + 1));
  return splitmix64(s);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {
    // warm up so that nearby seeds decorrelate
    for (int i = 0; i < 4; ++i) splitmix64(state_);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  // uniform in [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  int uniform_int(int n) { return int(next_u64() % std::uint64_t(n)); }

  // standard normal via Box-Muller (one value per call, no cached state)
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Vector helpers
// ---------------------------------------------------------------------------

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2_sq(const Vec& a) { return dot(a, a); }

inline void axpy(double alpha, const Vec& x, Vec& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(Vec& x, double alpha) {
  for (double& v : x) v *= alpha;
}

inline bool all_finite(const Vec& x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

inline int count_true(const Mask& m) {
  int n = 0;
  for (char c : m) n += (c != 0);
  return n;
}

// ---------------------------------------------------------------------------
// Binary serialization helpers (little-endian, fixed width)
// ---------------------------------------------------------------------------

namespace io {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  write_u64(os, v);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw input_error("unexpected end of stream");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw input_error("unexpected end of stream");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

inline double read_f64(std::istream& is) {
  std::uint64_t v = read_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

inline void write_vec(std::ostream& os, const Vec& v) {
  write_u64(os, v.size());
  for (double d : v) write_f64(os, d);
}

inline Vec read_vec(std::istream& is) {
  std::uint64_t n = read_u64(is);
  Vec v(n);
  for (auto& d : v) d = read_f64(is);
  return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), std::streamsize(s.size()));
}

inline std::string read_string(std::istream& is) {
  std::uint64_t n = read_u64(is);
  std::string s(n, '\0');
  is.read(s.data(), std::streamsize(n));
  if (!is) throw input_error("unexpected end of stream");
  return s;
}

}  // namespace io

}  // namespace acerlab
