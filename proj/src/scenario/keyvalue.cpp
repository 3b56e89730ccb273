#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "gridcoop/errors.hpp"
#include "gridcoop/text.hpp"

namespace gridcoop::text {

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(begin, end - begin + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

double to_double(const std::string& s, const std::string& where) {
  const std::string t = trim(s);
  if (t.empty()) throw ValidationError(where + ": empty number");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE) {
    throw ValidationError(where + ": not a number: '" + t + "'");
  }
  return v;
}

long long to_int(const std::string& s, const std::string& where) {
  const std::string t = trim(s);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw ValidationError(where + ": not an integer: '" + t + "'");
  }
  return v;
}

std::string fmt_double(double v) { return fmt::format("{}", v); }

const std::string& Document::str(const std::string& key) const {
  const auto it = keys.find(key);
  if (it == keys.end()) throw ValidationError(origin + ": missing key '" + key + "'");
  return it->second.value;
}

std::string Document::str_or(const std::string& key, const std::string& fallback) const {
  const auto it = keys.find(key);
  return it == keys.end() ? fallback : it->second.value;
}

double Document::number(const std::string& key) const {
  const auto it = keys.find(key);
  if (it == keys.end()) throw ValidationError(origin + ": missing key '" + key + "'");
  return to_double(it->second.value, fmt::format("{}:{}: {}", origin, it->second.line, key));
}

double Document::number_or(const std::string& key, double fallback) const {
  return has(key) ? number(key) : fallback;
}

const std::vector<Row>& Document::section(const std::string& name) const {
  static const std::vector<Row> empty;
  const auto it = sections.find(name);
  return it == sections.end() ? empty : it->second;
}

void Document::require_schema(int expected) const {
  if (!has("schema_version")) throw ValidationError(origin + ": missing schema_version");
  const auto& e = keys.at("schema_version");
  const auto v = to_int(e.value, fmt::format("{}:{}", origin, e.line));
  if (v != expected) {
    throw ValidationError(fmt::format("{}: unsupported schema_version {} (expected {})", origin, v, expected));
  }
}

Document parse(std::string_view content, const std::string& origin) {
  Document doc;
  doc.origin = origin;
  std::string current;
  bool in_section = false;
  int line_no = 0;
  std::istringstream in{std::string(content)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(fmt::format("{}:{}: malformed section header", origin, line_no));
      current = trim(line.substr(1, line.size() - 2));
      in_section = true;
      doc.sections[current];
      continue;
    }
    if (!in_section) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ValidationError(fmt::format("{}:{}: expected 'key = value'", origin, line_no));
      }
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ValidationError(fmt::format("{}:{}: empty key", origin, line_no));
      if (doc.keys.count(key)) throw ValidationError(fmt::format("{}:{}: duplicate key '{}'", origin, line_no, key));
      doc.keys[key] = Entry{line_no, trim(line.substr(eq + 1))};
    } else {
      doc.sections[current].push_back(Row{line_no, split_ws(line)});
    }
  }
  return doc;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed", path);
  return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open file for writing", path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed", path);
}

Document parse_file(const std::string& path) { return parse(read_file(path), path); }

std::string dirname(const std::string& path) {
  return std::filesystem::path(path).parent_path().string();
}

std::string resolve(const std::string& base_dir, const std::string& rel) {
  const std::filesystem::path p(rel);
  if (p.is_absolute() || base_dir.empty()) return rel;
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

}  // namespace gridcoop::text
