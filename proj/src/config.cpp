#include "naturamap/config.hpp"

#include <sstream>

namespace naturamap::config {

namespace {

enum class Kind { kUint, kDouble, kBool, kLadder, kVariant, kSplit };

struct KeySpec {
  Kind kind;
  std::string fallback;
};

std::string ladder_text(const std::vector<std::size_t>& ladder) {
  std::string out;
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    out += (i ? "," : "") + std::to_string(ladder[i]);
  }
  return out;
}

const std::map<std::string, KeySpec>& key_specs() {
  static const std::map<std::string, KeySpec> specs = [] {
    const data::SynthParams sp;
    const model::ArchConfig arch;
    const optim::TrainConfig tc;
    auto d = kv::format_double;
    auto u = [](std::size_t v) { return std::to_string(v); };
    return std::map<std::string, KeySpec>{
        // Dataset synthesis (patch/context sizes also fix the architecture).
        {"patch_size", {Kind::kUint, u(sp.patch_size)}},
        {"context_size", {Kind::kUint, u(sp.context_size)}},
        {"n_sinusoids", {Kind::kUint, u(sp.n_sinusoids)}},
        {"water_band", {Kind::kUint, u(sp.water_band)}},
        {"water_threshold", {Kind::kDouble, d(sp.water_threshold)}},
        {"w_local", {Kind::kDouble, d(sp.w_local)}},
        {"w_ctx", {Kind::kDouble, d(sp.w_ctx)}},
        {"w_geo", {Kind::kDouble, d(sp.w_geo)}},
        {"lat_min", {Kind::kDouble, d(sp.lat_min)}},
        {"lat_max", {Kind::kDouble, d(sp.lat_max)}},
        {"n_train", {Kind::kUint, "512"}},
        {"n_val", {Kind::kUint, "128"}},
        {"n_test", {Kind::kUint, "128"}},
        // Architecture.
        {"channel_ladder", {Kind::kLadder, ladder_text(arch.channel_ladder)}},
        {"geo_latent_channels", {Kind::kUint, u(arch.geo_latent_channels)}},
        {"unet_pools", {Kind::kUint, u(arch.unet_pools)}},
        {"ae_pools", {Kind::kUint, u(arch.ae_pools)}},
        // Training.
        {"lr_max", {Kind::kDouble, d(tc.lr_max)}},
        {"lr_min", {Kind::kDouble, d(tc.lr_min)}},
        {"weight_decay", {Kind::kDouble, d(tc.weight_decay)}},
        {"beta1", {Kind::kDouble, d(tc.beta1)}},
        {"beta2", {Kind::kDouble, d(tc.beta2)}},
        {"eps", {Kind::kDouble, d(tc.eps)}},
        {"batch_size", {Kind::kUint, u(tc.batch_size)}},
        {"t0", {Kind::kUint, u(tc.t0)}},
        {"t_mult", {Kind::kUint, u(tc.t_mult)}},
        {"patience", {Kind::kUint, u(tc.patience)}},
        {"max_epochs", {Kind::kUint, u(tc.max_epochs)}},
        {"precision", {Kind::kUint, std::to_string(tc.precision)}},
        {"augment", {Kind::kBool, tc.augment ? "true" : "false"}},
        {"weighted_sampling", {Kind::kBool, tc.weighted_sampling ? "true" : "false"}},
        {"ae_tiles", {Kind::kUint, "0"}},
        // Run.
        {"seed", {Kind::kUint, "0"}},
        {"variant", {Kind::kVariant, "proposed"}},
        {"split", {Kind::kSplit, "val"}},
        {"workers", {Kind::kUint, "0"}},
    };
  }();
  return specs;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& [k, spec] : key_specs()) values_[k] = spec.fallback;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = key_specs().find(key);
  if (it == key_specs().end()) throw ConfigError("unknown config key '" + key + "'");
  switch (it->second.kind) {
    case Kind::kUint: kv::to_uint(key, value); break;
    case Kind::kDouble: kv::to_double(key, value); break;
    case Kind::kBool: parse_bool(key, value); break;
    case Kind::kVariant: model::parse_variant(value); break;
    case Kind::kLadder: {
      model::ArchConfig probe;
      model::apply_arch_entry(probe, key, value);
      break;
    }
    case Kind::kSplit:
      if (value != "train" && value != "val" && value != "test") {
        throw ConfigError("split must be train, val or test, got '" + value + "'");
      }
      break;
  }
  values_[key] = value;
}

void RunConfig::merge(const kv::Entries& entries) {
  for (const auto& [k, v] : entries) set(k, v);
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  merge(kv::read_file(path));
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

std::vector<std::string> RunConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

data::SynthParams RunConfig::synth() const {
  data::SynthParams p;
  p.patch_size = kv::to_uint("patch_size", get("patch_size"));
  p.context_size = kv::to_uint("context_size", get("context_size"));
  p.n_sinusoids = kv::to_uint("n_sinusoids", get("n_sinusoids"));
  p.water_band = kv::to_uint("water_band", get("water_band"));
  p.water_threshold = kv::to_double("water_threshold", get("water_threshold"));
  p.w_local = kv::to_double("w_local", get("w_local"));
  p.w_ctx = kv::to_double("w_ctx", get("w_ctx"));
  p.w_geo = kv::to_double("w_geo", get("w_geo"));
  p.lat_min = kv::to_double("lat_min", get("lat_min"));
  p.lat_max = kv::to_double("lat_max", get("lat_max"));
  p.seed = kv::to_uint("seed", get("seed"));
  p.validate();
  return p;
}

model::ArchConfig RunConfig::arch() const {
  model::ArchConfig a;
  for (const auto* k : {"patch_size", "context_size", "channel_ladder",
                        "geo_latent_channels", "unet_pools", "ae_pools"}) {
    model::apply_arch_entry(a, k, get(k));
  }
  a.validate();
  return a;
}

optim::TrainConfig RunConfig::train() const {
  optim::TrainConfig c;
  c.lr_max = kv::to_double("lr_max", get("lr_max"));
  c.lr_min = kv::to_double("lr_min", get("lr_min"));
  c.weight_decay = kv::to_double("weight_decay", get("weight_decay"));
  c.beta1 = kv::to_double("beta1", get("beta1"));
  c.beta2 = kv::to_double("beta2", get("beta2"));
  c.eps = kv::to_double("eps", get("eps"));
  c.batch_size = kv::to_uint("batch_size", get("batch_size"));
  c.t0 = kv::to_uint("t0", get("t0"));
  c.t_mult = kv::to_uint("t_mult", get("t_mult"));
  c.patience = kv::to_uint("patience", get("patience"));
  c.max_epochs = kv::to_uint("max_epochs", get("max_epochs"));
  c.precision = static_cast<int>(kv::to_uint("precision", get("precision")));
  c.augment = parse_bool("augment", get("augment"));
  c.weighted_sampling = parse_bool("weighted_sampling", get("weighted_sampling"));
  c.seed = kv::to_uint("seed", get("seed"));
  c.validate();
  return c;
}

std::string RunConfig::text() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << "=" << v << "\n";
  return out.str();
}

void RunConfig::write(const std::filesystem::path& path) const {
  kv::write_file(path, text());
}

}  // namespace naturamap::config
