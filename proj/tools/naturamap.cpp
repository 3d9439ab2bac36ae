// naturamap: dataset generation, two-stage training, evaluation, comparison
// and prediction export.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "naturamap/config.hpp"
#include "naturamap/metrics.hpp"
#include "naturamap/ntsr.hpp"
#include "naturamap/pgm.hpp"
#include "naturamap/train.hpp"

using namespace naturamap;
namespace fs = std::filesystem;

namespace {

constexpr const char* kConfigEcho = "config.txt";

// Options shared by every subcommand: a config file merged first, then
// explicit flags (which win).
struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  bool quiet = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "key=value config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "Override any config key (key=value)");
    cmd->add_flag("-q,--quiet", quiet, "No per-epoch progress");
  }

  // Registers a flag that maps onto a config key.
  CLI::Option* map(CLI::App* cmd, const std::string& flag, const std::string& key,
                   const std::string& help) {
    auto holder = std::make_shared<std::string>();
    auto* opt = cmd->add_option(flag, *holder, help);
    bindings_.push_back({opt, key, holder});
    return opt;
  }

  config::RunConfig resolve() const {
    config::RunConfig cfg;
    if (!config_file.empty()) cfg.merge_file(config_file);
    for (const auto& [opt, key, holder] : bindings_) {
      if (opt->count() > 0) cfg.set(key, *holder);
    }
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
      cfg.set(o.substr(0, eq), o.substr(eq + 1));
    }
    return cfg;
  }

  bool flag_given(const std::string& key) const {
    for (const auto& b : bindings_) {
      if (b.key == key && b.opt->count() > 0) return true;
    }
    return false;
  }

 private:
  struct Binding {
    CLI::Option* opt;
    std::string key;
    std::shared_ptr<std::string> holder;
  };
  std::vector<Binding> bindings_;
};

std::size_t worker_count(const config::RunConfig& cfg) {
  std::size_t n = kv::to_uint("workers", cfg.get("workers"));
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("NATURAMAP_THREADS")) {
    const auto cap = kv::to_uint("NATURAMAP_THREADS", env);
    if (cap > 0) n = std::min<std::size_t>(n, cap);
  }
  return n;
}

train::TrainOptions progress(bool quiet, const std::string& stage) {
  train::TrainOptions o;
  if (!quiet) {
    o.on_epoch = [stage](const train::EpochRecord& r) {
      std::cerr << stage << " epoch " << r.epoch << " lr=" << r.lr
                << " train=" << r.train_loss << " val=" << r.val_loss;
      if (stage != "autoencoder") std::cerr << " mae=" << r.val_mae << " mssim=" << r.val_mssim;
      std::cerr << "\n";
    };
  }
  o.on_warning = [](const std::string& w) { std::cerr << "warning: " << w << "\n"; };
  return o;
}

// Dataset geometry fixes the model geometry.
void adopt_dataset(config::RunConfig& cfg, const data::DatasetManifest& m) {
  cfg.set("patch_size", std::to_string(m.params.patch_size));
  cfg.set("context_size", std::to_string(m.params.context_size));
}

void check_arch(const model::ModelBundle& bundle, const data::DatasetManifest& m,
                const std::string& what) {
  if (bundle.arch().patch_size != m.params.patch_size ||
      bundle.arch().context_size != m.params.context_size) {
    throw ConfigError(what + " expects " + std::to_string(bundle.arch().patch_size) + "/" +
                      std::to_string(bundle.arch().context_size) +
                      " patches/contexts but the dataset has " +
                      std::to_string(m.params.patch_size) + "/" +
                      std::to_string(m.params.context_size));
  }
}

std::string report_row(const std::string& name, const metrics::EvalReport& r) {
  return name + "," + kv::format_double(r.mae) + "," + kv::format_double(r.mse) + "," +
         kv::format_double(r.mssim) + "\n";
}

double rel_delta(double from, double to) { return from == 0.0 ? 0.0 : (to - from) / from; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Naturalness mapping: synthetic data, UNet baseline and fused model"};
  app.require_subcommand(1);

  // gen ----------------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  Common gen_c;
  gen_c.add_to(gen);
  std::string gen_out;
  bool gen_overwrite = false;
  gen->add_option("--out", gen_out, "Dataset root")->required();
  gen->add_flag("--overwrite", gen_overwrite, "Replace an existing dataset");
  gen_c.map(gen, "--n-train", "n_train", "Training samples");
  gen_c.map(gen, "--n-val", "n_val", "Validation samples");
  gen_c.map(gen, "--n-test", "n_test", "Test samples");
  gen_c.map(gen, "--seed", "seed", "Synthesis seed");
  gen_c.map(gen, "--patch", "patch_size", "Patch size h (context defaults to 4h)");
  gen_c.map(gen, "--context", "context_size", "Context tile size");
  gen_c.map(gen, "--workers", "workers", "Generation threads (0 = all cores)");

  // train-ae / train ---------------------------------------------------------
  auto add_training_flags = [](CLI::App* cmd, Common& c) {
    c.map(cmd, "--epochs", "max_epochs", "Maximum epochs");
    c.map(cmd, "--lr", "lr_max", "Peak learning rate");
    c.map(cmd, "--batch-size", "batch_size", "Batch size");
    c.map(cmd, "--patience", "patience", "Early-stopping patience");
    c.map(cmd, "--seed", "seed", "Training seed");
  };
  auto* train_ae = app.add_subcommand("train-ae", "Stage 1: train the context autoencoder");
  Common ae_c;
  ae_c.add_to(train_ae);
  std::string ae_data, ae_out;
  train_ae->add_option("--data", ae_data, "Dataset root")->required();
  train_ae->add_option("--out", ae_out, "Checkpoint directory")->required();
  add_training_flags(train_ae, ae_c);
  ae_c.map(train_ae, "--ae-tiles", "ae_tiles", "Train on the first N tiles (0 = all)");

  auto* train_cmd = app.add_subcommand("train", "Stage 2: train the baseline or proposed model");
  Common tr_c;
  tr_c.add_to(train_cmd);
  std::string tr_data, tr_out, tr_ae;
  train_cmd->add_option("--data", tr_data, "Dataset root")->required();
  train_cmd->add_option("--out", tr_out, "Checkpoint directory")->required();
  train_cmd->add_option("--ae", tr_ae, "Stage-1 checkpoint (proposed variant only)");
  tr_c.map(train_cmd, "--variant", "variant", "baseline | proposed");
  add_training_flags(train_cmd, tr_c);

  // eval / compare -----------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  Common ev_c;
  ev_c.add_to(eval);
  std::string ev_data, ev_model, ev_report;
  eval->add_option("--data", ev_data, "Dataset root")->required();
  eval->add_option("--model", ev_model, "Checkpoint directory")->required();
  eval->add_option("--report", ev_report, "Report directory")->required();
  ev_c.map(eval, "--split", "split", "train | val | test");

  auto* compare = app.add_subcommand("compare", "Baseline vs proposed on one split");
  Common cmp_c;
  cmp_c.add_to(compare);
  std::string cmp_data, cmp_base, cmp_prop, cmp_report;
  compare->add_option("--data", cmp_data, "Dataset root")->required();
  compare->add_option("--baseline", cmp_base, "Baseline checkpoint")->required();
  compare->add_option("--proposed", cmp_prop, "Proposed checkpoint")->required();
  compare->add_option("--report", cmp_report, "Report directory")->required();
  cmp_c.map(compare, "--split", "split", "train | val | test");

  // predict ------------------------------------------------------------------
  auto* predict = app.add_subcommand("predict", "Predict one sample and export images");
  std::string pr_sample, pr_model, pr_base, pr_prop, pr_variant, pr_map, pr_image;
  predict->add_option("--sample", pr_sample, "Sample directory")->required();
  auto* pr_model_opt = predict->add_option("--model", pr_model, "Checkpoint directory");
  auto* pr_base_opt = predict->add_option("--baseline", pr_base, "Baseline checkpoint (panel)");
  auto* pr_prop_opt = predict->add_option("--proposed", pr_prop, "Proposed checkpoint (panel)");
  pr_model_opt->excludes(pr_base_opt)->excludes(pr_prop_opt);
  pr_base_opt->needs(pr_prop_opt);
  pr_prop_opt->needs(pr_base_opt);
  predict->add_option("--variant", pr_variant, "Must match the checkpoint when given");
  predict->add_option("--out-map", pr_map, "Predicted map (NTSR, h x w)");
  predict->add_option("--out-image", pr_image, "8-bit PGM (panel: target | baseline | proposed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      auto cfg = gen_c.resolve();
      if (gen_c.flag_given("patch_size") && !gen_c.flag_given("context_size")) {
        cfg.set("context_size",
                std::to_string(4 * kv::to_uint("patch_size", cfg.get("patch_size"))));
      }
      const auto params = cfg.synth();
      auto m = data::generate_dataset(params, kv::to_uint("n_train", cfg.get("n_train")),
                                      kv::to_uint("n_val", cfg.get("n_val")),
                                      kv::to_uint("n_test", cfg.get("n_test")), gen_out,
                                      gen_overwrite, worker_count(cfg));
      cfg.write(fs::path(gen_out) / kConfigEcho);
      std::cout << "wrote " << m.ids("train").size() << "/" << m.ids("val").size() << "/"
                << m.ids("test").size() << " samples to " << gen_out << "\n";
      return 0;
    }

    if (train_ae->parsed()) {
      auto cfg = ae_c.resolve();
      const auto m = data::read_manifest(ae_data);
      adopt_dataset(cfg, m);
      const auto arch = cfg.arch();
      const auto tc = cfg.train();
      auto tiles = data::load_split(m, "train");
      const auto limit = kv::to_uint("ae_tiles", cfg.get("ae_tiles"));
      if (limit > 0 && limit < tiles.size()) tiles.resize(limit);
      const auto val = data::load_split(m, "val");
      auto result = train::train_autoencoder(tiles, val, arch, tc, progress(ae_c.quiet, "autoencoder"));
      fs::create_directories(ae_out);
      model::save_checkpoint(result.bundle, ae_out);
      result.report.write(ae_out);
      cfg.write(fs::path(ae_out) / kConfigEcho);
      std::cout << result.report.summary();
      return 0;
    }

    if (train_cmd->parsed()) {
      auto cfg = tr_c.resolve();
      const auto variant = model::parse_variant(cfg.get("variant"));
      if (variant == model::Variant::kProposed && tr_ae.empty()) {
        throw ConfigError(
            "the proposed variant fuses the frozen autoencoder's context latent; pass --ae "
            "with a checkpoint from train-ae");
      }
      if (variant == model::Variant::kBaseline && !tr_ae.empty()) {
        throw ConfigError("the baseline variant does not use an autoencoder; drop --ae");
      }
      const auto m = data::read_manifest(tr_data);
      adopt_dataset(cfg, m);
      const auto arch = cfg.arch();
      const auto tc = cfg.train();
      std::optional<model::ModelBundle> ae;
      if (!tr_ae.empty()) {
        ae = model::load_checkpoint(tr_ae);
        check_arch(*ae, m, "autoencoder checkpoint");
      }
      const auto trs = data::load_split(m, "train");
      const auto val = data::load_split(m, "val");
      auto result = train::train_model(trs, val, arch, tc, variant, ae ? &*ae : nullptr,
                                       progress(tr_c.quiet, model::to_string(variant)));
      fs::create_directories(tr_out);
      model::save_checkpoint(result.bundle, tr_out);
      result.report.write(tr_out);
      cfg.write(fs::path(tr_out) / kConfigEcho);
      std::cout << result.report.summary();
      return 0;
    }

    if (eval->parsed()) {
      auto cfg = ev_c.resolve();
      const auto m = data::read_manifest(ev_data);
      auto bundle = model::load_checkpoint(ev_model);
      check_arch(bundle, m, "checkpoint");
      const auto samples = data::load_split(m, cfg.get("split"));
      const auto report = metrics::evaluate(bundle, samples, bundle.variant());
      fs::create_directories(ev_report);
      kv::write_file(fs::path(ev_report) / "eval.csv", report.table());
      kv::write_file(fs::path(ev_report) / "summary.txt",
                     "variant=" + model::to_string(bundle.variant()) + "\nsplit=" +
                         cfg.get("split") + "\n" + report.summary());
      cfg.write(fs::path(ev_report) / kConfigEcho);
      std::cout << report.summary();
      return 0;
    }

    if (compare->parsed()) {
      auto cfg = cmp_c.resolve();
      const auto m = data::read_manifest(cmp_data);
      auto base = model::load_checkpoint(cmp_base);
      auto prop = model::load_checkpoint(cmp_prop);
      check_arch(base, m, "baseline checkpoint");
      check_arch(prop, m, "proposed checkpoint");
      const auto samples = data::load_split(m, cfg.get("split"));
      const auto rb = metrics::evaluate(base, samples, base.variant());
      const auto rp = metrics::evaluate(prop, samples, prop.variant());
      const std::string table =
          "model,mae,mse,mssim\n" + report_row("baseline", rb) + report_row("proposed", rp);
      std::ostringstream deltas;
      deltas << "split=" << cfg.get("split") << "\n"
             << "mae_rel_delta=" << kv::format_double(rel_delta(rb.mae, rp.mae)) << "\n"
             << "mse_rel_delta=" << kv::format_double(rel_delta(rb.mse, rp.mse)) << "\n"
             << "mssim_rel_delta=" << kv::format_double(rel_delta(rb.mssim, rp.mssim)) << "\n";
      fs::create_directories(cmp_report);
      kv::write_file(fs::path(cmp_report) / "compare.csv", table);
      kv::write_file(fs::path(cmp_report) / "deltas.txt", deltas.str());
      cfg.write(fs::path(cmp_report) / kConfigEcho);
      std::cout << table << deltas.str();
      return 0;
    }

    if (predict->parsed()) {
      if (pr_model.empty() && pr_base.empty()) {
        throw ConfigError("predict needs --model, or --baseline with --proposed");
      }
      if (pr_map.empty() && pr_image.empty()) {
        throw ConfigError("predict needs --out-map and/or --out-image");
      }
      const auto sample = data::read_sample(pr_sample);
      auto run = [&](const std::string& ckpt) {
        auto bundle = model::load_checkpoint(ckpt);
        if (!pr_variant.empty() && model::parse_variant(pr_variant) != bundle.variant()) {
          throw ConfigError("checkpoint " + ckpt + " holds a " +
                            model::to_string(bundle.variant()) + " model, not " + pr_variant);
        }
        return model::predict(bundle, sample, bundle.variant());
      };
      TensorArray map, image;
      if (!pr_model.empty()) {
        map = run(pr_model);
        image = map;
      } else {
        auto b = run(pr_base);
        map = run(pr_prop);
        image = side_by_side({sample.target, b, map});
      }
      if (!pr_map.empty()) write_tensor(pr_map, map);
      if (!pr_image.empty()) write_pgm(pr_image, image);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
