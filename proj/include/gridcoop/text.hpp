#pragma once

// Line-oriented structured text shared by the network, asset and config
// files: `key = value` pairs, `[section]` headers followed by whitespace
// separated rows, `#` comments.

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace gridcoop::text {

struct Row {
  int line = 0;
  std::vector<std::string> cells;
};

struct Entry {
  int line = 0;
  std::string value;
};

struct Document {
  std::string origin;
  std::map<std::string, Entry> keys;
  std::map<std::string, std::vector<Row>> sections;

  bool has(const std::string& key) const { return keys.count(key) != 0; }
  const std::string& str(const std::string& key) const;
  std::string str_or(const std::string& key, const std::string& fallback) const;
  double number(const std::string& key) const;
  double number_or(const std::string& key, double fallback) const;
  const std::vector<Row>& section(const std::string& name) const;
  /// Throws unless `schema_version` equals `expected`.
  void require_schema(int expected) const;
};

Document parse(std::string_view content, const std::string& origin);
Document parse_file(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> split_ws(std::string_view s);

/// Strict number parsing; `where` ends up in the error message.
double to_double(const std::string& s, const std::string& where);
long long to_int(const std::string& s, const std::string& where);

/// Shortest round-trip representation of a double.
std::string fmt_double(double v);

/// Directory part of a path ("" for bare file names).
std::string dirname(const std::string& path);
/// `rel` resolved against `base_dir` unless already absolute.
std::string resolve(const std::string& base_dir, const std::string& rel);

}  // namespace gridcoop::text
