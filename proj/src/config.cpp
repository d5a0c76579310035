#include "zstad/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "zstad/common.hpp"

namespace zstad {

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<std::string> suggestions(const std::string& key, const std::vector<std::string>& candidates) {
  std::vector<std::pair<std::size_t, std::string>> scored;
  for (const auto& c : candidates) {
    const std::size_t d = edit_distance(key, c);
    if (d <= 3) scored.emplace_back(d, c);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  std::vector<std::string> out;
  for (auto& s : scored) out.push_back(std::move(s.second));
  return out;
}

ConfigSet::ConfigSet(std::vector<KeySpec> schema) : schema_(std::move(schema)) {
  for (const auto& k : schema_) values_[k.key] = k.default_value;
}

bool ConfigSet::has_key(const std::string& key) const { return values_.count(key) > 0; }

void ConfigSet::unknown(const std::string& key, const std::string& where) const {
  std::vector<std::string> names;
  for (const auto& k : schema_) names.push_back(k.key);
  std::string msg = where + "unknown key '" + key + "'";
  const auto near = suggestions(key, names);
  if (!near.empty()) {
    msg += "; did you mean";
    for (std::size_t i = 0; i < near.size() && i < 3; ++i) msg += (i ? ", '" : " '") + near[i] + "'";
    msg += "?";
  }
  throw UsageError(msg);
}

void ConfigSet::set(const std::string& key, const std::string& value) {
  if (!has_key(key)) unknown(key, "");
  values_[key] = value;
}

namespace {
std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}
}  // namespace

void ConfigSet::parse(std::istream& in, const std::string& source) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw UsageError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (!has_key(key)) unknown(key, where);
    values_[key] = trim(line.substr(eq + 1));
  }
}

void ConfigSet::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  parse(in, path);
}

const std::string& ConfigSet::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw InternalError("config key '" + key + "' is not in the schema");
  return it->second;
}

double ConfigSet::get_double(const std::string& key) const {
  double v = 0.0;
  if (!parse_double(get(key), v)) throw UsageError(key + ": expected a number, got '" + get(key) + "'");
  return v;
}

namespace {
template <typename T>
T parse_integer(const std::string& key, const std::string& s) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw UsageError(key + ": expected an integer, got '" + s + "'");
  return v;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}
}  // namespace

int ConfigSet::get_int(const std::string& key) const { return parse_integer<int>(key, get(key)); }

std::uint64_t ConfigSet::get_u64(const std::string& key) const {
  return parse_integer<std::uint64_t>(key, get(key));
}

bool ConfigSet::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError(key + ": expected true or false, got '" + v + "'");
}

std::vector<int> ConfigSet::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (const auto& s : split_list(get(key))) out.push_back(parse_integer<int>(key, s));
  return out;
}

std::vector<double> ConfigSet::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : split_list(get(key))) {
    double v = 0.0;
    if (!parse_double(s, v)) throw UsageError(key + ": expected a number, got '" + s + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::uint64_t> ConfigSet::get_u64_list(const std::string& key) const {
  std::vector<std::uint64_t> out;
  for (const auto& s : split_list(get(key))) out.push_back(parse_integer<std::uint64_t>(key, s));
  return out;
}

void ConfigSet::write(std::ostream& out) const {
  for (const auto& k : schema_) out << k.key << " = " << get(k.key) << '\n';
}

void ConfigSet::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  write(out);
  if (!out) throw DataError("failed writing " + path);
}

}  // namespace zstad
