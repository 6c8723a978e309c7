#include "flatdiv/config.hpp"

#include <charconv>
#include <fstream>

#include "flatdiv/csv.hpp"

namespace flatdiv {
namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto piece = comma == std::string::npos ? s.substr(start) : s.substr(start, comma - start);
    const auto t = trim(piece);
    if (!t.empty()) out.push_back(t);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

}  // namespace

void ConfigTree::load_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path.string());
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    if (key.empty())
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    set(key, trim(t.substr(eq + 1)));
  }
}

void ConfigTree::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void ConfigTree::set(const std::string& key, std::string value) { values_[key] = std::move(value); }

const std::string* ConfigTree::lookup(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  consumed_.insert(key);
  return &it->second;
}

void ConfigTree::record(const std::string& key, const std::string& value) const {
  resolved_[key] = value;
}

std::string ConfigTree::get_string(const std::string& key, const std::string& def) const {
  const std::string* v = lookup(key);
  const std::string out = v ? *v : def;
  record(key, out);
  return out;
}

double ConfigTree::get_double(const std::string& key, double def) const {
  const std::string* v = lookup(key);
  const double out = v ? parse_double(key, *v) : def;
  record(key, format_double(out));
  return out;
}

std::int64_t ConfigTree::get_int(const std::string& key, std::int64_t def) const {
  const std::string* v = lookup(key);
  const std::int64_t out = v ? parse_int(key, *v) : def;
  record(key, std::to_string(out));
  return out;
}

std::uint64_t ConfigTree::get_uint64(const std::string& key, std::uint64_t def) const {
  const std::string* v = lookup(key);
  std::uint64_t out = def;
  if (v) {
    const char* end = v->data() + v->size();
    auto [ptr, ec] = std::from_chars(v->data(), end, out);
    if (ec != std::errc() || ptr != end)
      throw ConfigError(key + ": expected an unsigned integer, got '" + *v + "'");
  }
  record(key, std::to_string(out));
  return out;
}

bool ConfigTree::get_bool(const std::string& key, bool def) const {
  const std::string* v = lookup(key);
  bool out = def;
  if (v) {
    if (*v == "true" || *v == "1")
      out = true;
    else if (*v == "false" || *v == "0")
      out = false;
    else
      throw ConfigError(key + ": expected true/false, got '" + *v + "'");
  }
  record(key, out ? "true" : "false");
  return out;
}

std::vector<double> ConfigTree::get_double_list(const std::string& key,
                                                const std::vector<double>& def) const {
  const std::string* v = lookup(key);
  std::vector<double> out;
  if (v) {
    for (const auto& piece : split_list(*v)) out.push_back(parse_double(key, piece));
  } else {
    out = def;
  }
  std::string repr;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i) repr += ", ";
    repr += format_double(out[i]);
  }
  record(key, repr);
  return out;
}

std::vector<int> ConfigTree::get_int_list(const std::string& key,
                                          const std::vector<int>& def) const {
  const std::string* v = lookup(key);
  std::vector<int> out;
  if (v) {
    for (const auto& piece : split_list(*v)) out.push_back(static_cast<int>(parse_int(key, piece)));
  } else {
    out = def;
  }
  std::string repr;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i) repr += ", ";
    repr += std::to_string(out[i]);
  }
  record(key, repr);
  return out;
}

void ConfigTree::reject_unknown() const {
  std::string bad;
  for (const auto& [key, value] : values_) {
    if (consumed_.count(key)) continue;
    if (!bad.empty()) bad += ", ";
    bad += key;
  }
  if (!bad.empty()) throw ConfigError("unknown config keys: " + bad);
}

std::string ConfigTree::resolved_snapshot() const {
  std::string out;
  for (const auto& [key, value] : resolved_) {
    out += key;
    out += " = ";
    out += value;
    out += "\n";
  }
  return out;
}

std::uint64_t fnv1a_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace flatdiv
