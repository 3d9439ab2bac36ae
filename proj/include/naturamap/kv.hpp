#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

// Plain-text "key=value" helpers for manifests and run files.
namespace naturamap::kv {

using Entries = std::vector<std::pair<std::string, std::string>>;

// Shortest text that parses back to the same double.
std::string format_double(double v);

// Splits "key=value" lines; blank lines and lines starting with '#' are
// skipped. Lines without '=' are returned through `other` when given, and
// rejected otherwise.
Entries parse(const std::string& text, std::vector<std::string>* other = nullptr);
Entries read_file(const std::filesystem::path& path,
                  std::vector<std::string>* other = nullptr);

void write_file(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

double to_double(const std::string& key, const std::string& value);
std::int64_t to_int(const std::string& key, const std::string& value);
std::uint64_t to_uint(const std::string& key, const std::string& value);

std::map<std::string, std::string> to_map(const Entries& entries);

}  // namespace naturamap::kv
