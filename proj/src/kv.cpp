#include "naturamap/kv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "naturamap/error.hpp"

namespace naturamap::kv {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Entries parse(const std::string& text, std::vector<std::string>* other) {
  Entries out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (other) {
        other->push_back(line);
        continue;
      }
      throw ConfigError("expected key=value, got '" + line + "'");
    }
    out.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Entries read_file(const std::filesystem::path& path,
                  std::vector<std::string>* other) {
  return parse(read_text(path), other);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

double to_double(const std::string& key, const std::string& value) {
  double v = 0;
  auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw ConfigError("key '" + key + "': not a number: '" + value + "'");
  }
  return v;
}

std::int64_t to_int(const std::string& key, const std::string& value) {
  std::int64_t v = 0;
  auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw ConfigError("key '" + key + "': not an integer: '" + value + "'");
  }
  return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw ConfigError("key '" + key + "': not a non-negative integer: '" +
                      value + "'");
  }
  return v;
}

std::map<std::string, std::string> to_map(const Entries& entries) {
  std::map<std::string, std::string> m;
  for (const auto& [k, v] : entries) m[k] = v;
  return m;
}

}  // namespace naturamap::kv
