#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "naturamap/data.hpp"
#include "naturamap/kv.hpp"
#include "naturamap/model.hpp"
#include "naturamap/optim.hpp"

namespace naturamap::config {

// Flat key=value run configuration. Every key has a default; config files
// and flags may only set known keys. Later sources win, so the CLI merges
// the file first and its flags second.
class RunConfig {
 public:
  RunConfig();

  // Throws ConfigError for an unknown key or an unparsable value.
  void set(const std::string& key, const std::string& value);
  void merge(const kv::Entries& entries);
  void merge_file(const std::filesystem::path& path);

  const std::string& get(const std::string& key) const;
  bool known(const std::string& key) const { return values_.contains(key); }
  std::vector<std::string> keys() const;

  data::SynthParams synth() const;
  model::ArchConfig arch() const;
  optim::TrainConfig train() const;

  // Effective configuration, one key=value per line in key order.
  std::string text() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace naturamap::config
