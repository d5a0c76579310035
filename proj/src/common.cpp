#include "zstad/common.hpp"

#include <charconv>
#include <iostream>
#include <numbers>

namespace zstad {

namespace {
Verbosity g_verbosity = Verbosity::kWarn;
}

void set_verbosity(Verbosity v) { g_verbosity = v; }
Verbosity verbosity() { return g_verbosity; }

void log_warning(const std::string& msg) {
  if (g_verbosity >= Verbosity::kWarn) std::cerr << "warning: " << msg << '\n';
}

void log_info(const std::string& msg) {
  if (g_verbosity >= Verbosity::kInfo) std::cerr << msg << '\n';
}

// splitmix64
std::uint64_t Rng::next_u64() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw DomainError("uniform_int: empty range");
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(next_u64());
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return lo + static_cast<std::int64_t>(x % span);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Rng Rng::fork(std::uint64_t salt) {
  Rng child(next_u64() ^ (salt * 0xd1b54a32d192ed03ULL));
  return child;
}

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

}  // namespace zstad

namespace zstad {

bool parse_double(const std::string& tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (first != last && *first == '+') ++first;
  double x = 0.0;
  auto res = std::from_chars(first, last, x);
  if (res.ptr != last || first == last) return false;
  if (res.ec == std::errc::result_out_of_range) {
    // Underflow parses to a (sub)normal or zero; overflow is rejected.
    if (std::abs(x) > 1.0) return false;
  } else if (res.ec != std::errc()) {
    return false;
  }
  if (!std::isfinite(x)) return false;
  out = x;
  return true;
}

}  // namespace zstad
