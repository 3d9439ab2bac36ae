#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "naturamap/data.hpp"
#include "naturamap/kv.hpp"
#include "naturamap/ntsr.hpp"

namespace naturamap::data {
namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestFile = "manifest.txt";
constexpr const char* kManifestFormat = "naturamap-dataset";

kv::Entries synth_entries(const SynthParams& p) {
  return {
      {"patch_size", std::to_string(p.patch_size)},
      {"context_size", std::to_string(p.context_size)},
      {"n_sinusoids", std::to_string(p.n_sinusoids)},
      {"water_band", std::to_string(p.water_band)},
      {"water_threshold", kv::format_double(p.water_threshold)},
      {"w_local", kv::format_double(p.w_local)},
      {"w_ctx", kv::format_double(p.w_ctx)},
      {"w_geo", kv::format_double(p.w_geo)},
      {"lat_min", kv::format_double(p.lat_min)},
      {"lat_max", kv::format_double(p.lat_max)},
      {"seed", std::to_string(p.seed)},
  };
}

void apply_synth_entry(SynthParams& p, const std::string& k,
                       const std::string& v) {
  if (k == "patch_size") p.patch_size = kv::to_uint(k, v);
  else if (k == "context_size") p.context_size = kv::to_uint(k, v);
  else if (k == "n_sinusoids") p.n_sinusoids = kv::to_uint(k, v);
  else if (k == "water_band") p.water_band = kv::to_uint(k, v);
  else if (k == "water_threshold") p.water_threshold = kv::to_double(k, v);
  else if (k == "w_local") p.w_local = kv::to_double(k, v);
  else if (k == "w_ctx") p.w_ctx = kv::to_double(k, v);
  else if (k == "w_geo") p.w_geo = kv::to_double(k, v);
  else if (k == "lat_min") p.lat_min = kv::to_double(k, v);
  else if (k == "lat_max") p.lat_max = kv::to_double(k, v);
  else if (k == "seed") p.seed = kv::to_uint(k, v);
  else throw FormatError("unknown manifest key '" + k + "'");
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

const std::vector<std::uint64_t>& DatasetManifest::ids(
    const std::string& split) const {
  auto it = splits.find(split);
  if (it == splits.end()) throw ConfigError("unknown split '" + split + "'");
  return it->second;
}

std::string sample_dir_name(std::uint64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%05llu",
                static_cast<unsigned long long>(id));
  return buf;
}

fs::path DatasetManifest::sample_dir(const std::string& split,
                                     std::uint64_t id) const {
  return root / split / sample_dir_name(id);
}

std::string format_manifest(const DatasetManifest& m) {
  std::ostringstream out;
  out << "format=" << kManifestFormat << "\n";
  out << "version=" << m.format_version << "\n";
  for (const auto& [k, v] : synth_entries(m.params)) out << k << "=" << v << "\n";
  for (const auto& split : kSplits) {
    auto it = m.splits.find(split);
    if (it == m.splits.end()) continue;
    for (auto id : it->second) out << split << "," << id << "\n";
  }
  return out.str();
}

void write_manifest(const DatasetManifest& m) {
  kv::write_file(m.root / kManifestFile, format_manifest(m));
}

DatasetManifest read_manifest(const fs::path& root) {
  DatasetManifest m;
  m.root = root;
  for (const auto& s : kSplits) m.splits[s];
  std::vector<std::string> rows;
  const auto entries = kv::read_file(root / kManifestFile, &rows);
  bool format_seen = false;
  for (const auto& [k, v] : entries) {
    if (k == "format") {
      if (v != kManifestFormat) throw FormatError("not a dataset manifest");
      format_seen = true;
    } else if (k == "version") {
      m.format_version = static_cast<int>(kv::to_int(k, v));
      if (m.format_version != kDatasetFormatVersion) {
        throw FormatError("unsupported dataset version " + v);
      }
    } else {
      apply_synth_entry(m.params, k, v);
    }
  }
  if (!format_seen) throw FormatError("manifest lacks a format line");
  for (const auto& row : rows) {
    const auto comma = row.find(',');
    if (comma == std::string::npos) {
      throw FormatError("bad manifest line '" + row + "'");
    }
    const std::string split = row.substr(0, comma);
    if (!m.splits.contains(split)) {
      throw FormatError("unknown split in manifest: '" + split + "'");
    }
    m.splits[split].push_back(kv::to_uint("id", row.substr(comma + 1)));
  }
  return m;
}

void write_sample(const fs::path& dir, const Sample& s) {
  fs::create_directories(dir);
  write_tensor(dir / "patch.ntsr", s.patch);
  write_tensor(dir / "context.ntsr", s.context);
  write_tensor(dir / "geo.ntsr", s.geo);
  write_tensor(dir / "target.ntsr", s.target);
  write_tensor(dir / "mask.ntsr", s.water_mask);
  std::ostringstream meta;
  meta << "lat=" << kv::format_double(s.center.lat_deg) << "\n"
       << "lon=" << kv::format_double(s.center.lon_deg) << "\n"
       << "seed=" << s.sample_seed << "\n";
  kv::write_file(dir / "meta.txt", meta.str());
}

Sample read_sample(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw IoError("sample directory not found: " + dir.string());
  }
  Sample s;
  s.patch = read_tensor(dir / "patch.ntsr");
  s.context = read_tensor(dir / "context.ntsr");
  s.geo = read_tensor(dir / "geo.ntsr");
  s.target = read_tensor(dir / "target.ntsr");
  s.water_mask = read_tensor(dir / "mask.ntsr");
  for (const auto& [k, v] : kv::read_file(dir / "meta.txt")) {
    if (k == "lat") s.center.lat_deg = kv::to_double(k, v);
    else if (k == "lon") s.center.lon_deg = kv::to_double(k, v);
    else if (k == "seed") s.sample_seed = kv::to_uint(k, v);
  }
  if (s.target.rank() != 2 || s.patch.rank() != 3 ||
      s.patch.dim(0) != s.target.dim(0) || s.patch.dim(1) != s.target.dim(1) ||
      s.water_mask.shape() != s.target.shape() || s.geo.rank() != 3 ||
      s.geo.dim(0) != s.target.dim(0) || s.context.rank() != 3) {
    throw FormatError("inconsistent sample shapes in " + dir.string());
  }
  return s;
}

DatasetManifest generate_dataset(const SynthParams& params,
                                 std::size_t n_train, std::size_t n_val,
                                 std::size_t n_test, const fs::path& root,
                                 bool overwrite, std::size_t workers) {
  params.validate();
  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!overwrite) {
      throw ConfigError("dataset root " + root.string() +
                        " is not empty (pass overwrite to replace it)");
    }
    fs::remove(root / kManifestFile);
    for (const auto& s : kSplits) fs::remove_all(root / s);
  }
  fs::create_directories(root);

  DatasetManifest m;
  m.root = root;
  m.params = params;
  const std::size_t counts[] = {n_train, n_val, n_test};
  std::vector<std::pair<std::string, std::uint64_t>> jobs;
  std::uint64_t next_id = 0;
  for (std::size_t i = 0; i < kSplits.size(); ++i) {
    auto& ids = m.splits[kSplits[i]];
    fs::create_directories(root / kSplits[i]);
    for (std::size_t k = 0; k < counts[i]; ++k) {
      ids.push_back(next_id);
      jobs.emplace_back(kSplits[i], next_id);
      ++next_id;
    }
  }
  parallel_for(jobs.size(), workers, [&](std::size_t i) {
    const auto& [split, id] = jobs[i];
    write_sample(m.sample_dir(split, id), generate_sample(params, id));
  });
  write_manifest(m);
  return m;
}

std::vector<Sample> load_split(const DatasetManifest& m,
                               const std::string& split) {
  std::vector<Sample> out;
  for (auto id : m.ids(split)) out.push_back(read_sample(m.sample_dir(split, id)));
  return out;
}

double mean_target(const Sample& s) {
  double sum = 0.0;
  for (float v : s.target.values()) sum += v;
  return sum / static_cast<double>(s.target.size());
}

std::vector<double> compute_sample_weights(
    const std::vector<double>& mean_targets) {
  if (mean_targets.empty()) return {};
  auto bin_of = [](double m) {
    const auto b = static_cast<long>(std::floor(m * kWeightBins));
    return static_cast<std::size_t>(
        std::clamp<long>(b, 0, static_cast<long>(kWeightBins) - 1));
  };
  std::vector<std::size_t> counts(kWeightBins, 0);
  for (double m : mean_targets) ++counts[bin_of(m)];
  std::vector<double> w(mean_targets.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = 1.0 / static_cast<double>(counts[bin_of(mean_targets[i])]);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

std::vector<double> compute_sample_weights(const DatasetManifest& m,
                                           const std::string& split) {
  std::vector<double> means;
  for (auto id : m.ids(split)) {
    Sample s;
    s.target = read_tensor(m.sample_dir(split, id) / "target.ntsr");
    means.push_back(mean_target(s));
  }
  return compute_sample_weights(means);
}

WeightedSampler::WeightedSampler(const std::vector<double>& weights)
    : dist_(weights.begin(), weights.end()) {
  if (weights.empty()) throw ConfigError("sampler needs at least one weight");
}

std::vector<std::size_t> WeightedSampler::draw(std::mt19937_64& rng,
                                               std::size_t n) {
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = dist_(rng);
  return out;
}

}  // namespace naturamap::data
