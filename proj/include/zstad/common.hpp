#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace zstad {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Precondition violated by the caller (bad shape, out-of-range argument).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed input file. The message carries file and line context.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& where, std::size_t line, const std::string& what)
      : std::runtime_error(where + ":" + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Data that parses but breaks a contract (e.g. unseen annotation in a train split).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Broken internal invariant; indicates a bug rather than bad input.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class Verbosity { kQuiet = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

void set_verbosity(Verbosity v);
Verbosity verbosity();
void log_warning(const std::string& msg);
void log_info(const std::string& msg);

// Deterministic generator. Distributions are implemented here rather than
// taken from <random> so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();
  // Derives an independent child stream; used for per-restart / per-video seeds.
  Rng fork(std::uint64_t salt);

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(v[i - 1], v[j]);
  }
}

// Formats a double with round-trip precision.
std::string format_double(double x);

}  // namespace zstad

namespace zstad {
// Strict full-token parse; false on junk, overflow or non-finite results.
bool parse_double(const std::string& tok, double& out);
}  // namespace zstad
