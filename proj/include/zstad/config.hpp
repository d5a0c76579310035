#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace zstad {

/// Bad command line or configuration: unknown key, malformed value.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KeySpec {
  std::string key;
  std::string default_value;
  std::string help;
};

std::size_t edit_distance(const std::string& a, const std::string& b);
/// Closest candidates within edit distance 3, nearest first. Empty if none.
std::vector<std::string> suggestions(const std::string& key, const std::vector<std::string>& candidates);

/// Flat `key = value` configuration validated against a fixed schema.
class ConfigSet {
 public:
  explicit ConfigSet(std::vector<KeySpec> schema);

  const std::vector<KeySpec>& schema() const { return schema_; }
  bool has_key(const std::string& key) const;

  /// Lines `key = value`; `#` starts a comment; blank lines ignored.
  void load_file(const std::string& path);
  void parse(std::istream& in, const std::string& source);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::uint64_t> get_u64_list(const std::string& key) const;

  /// Every key in schema order, one `key = value` line each.
  void write(std::ostream& out) const;
  void save(const std::string& path) const;

 private:
  [[noreturn]] void unknown(const std::string& key, const std::string& where) const;
  std::vector<KeySpec> schema_;
  std::map<std::string, std::string> values_;
};

}  // namespace zstad
