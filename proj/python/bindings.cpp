#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "naturamap/config.hpp"
#include "naturamap/data.hpp"
#include "naturamap/geo.hpp"
#include "naturamap/metrics.hpp"
#include "naturamap/model.hpp"
#include "naturamap/ntsr.hpp"
#include "naturamap/optim.hpp"
#include "naturamap/pgm.hpp"
#include "naturamap/train.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace naturamap;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::array_t<float> to_numpy(const TensorArray& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

TensorArray from_numpy(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  if (shape.empty()) throw ShapeError("expected an array of rank >= 1");
  return TensorArray(std::move(shape), AlignedVector<float>(a.data(), a.data() + a.size()));
}

std::string config_value(const py::handle& v) {
  if (py::isinstance<py::bool_>(v)) return v.cast<bool>() ? "true" : "false";
  if (py::isinstance<py::str>(v)) return v.cast<std::string>();
  if (py::isinstance<py::float_>(v)) return py::repr(v).cast<std::string>();
  if (py::isinstance<py::int_>(v)) return py::str(v).cast<std::string>();
  if (py::isinstance<py::sequence>(v)) {
    std::string out;
    for (const auto& item : v.cast<py::sequence>()) {
      if (!out.empty()) out += ",";
      out += config_value(item);
    }
    return out;
  }
  throw ConfigError("unsupported config value type " +
                    py::str(py::type::of(v)).cast<std::string>());
}

config::RunConfig make_config(const py::dict& overrides) {
  config::RunConfig cfg;
  for (const auto& [k, v] : overrides) cfg.set(k.cast<std::string>(), config_value(v));
  return cfg;
}

py::dict report_dict(const train::TrainReport& r) {
  py::list epochs;
  for (const auto& e : r.epochs) {
    py::dict d;
    d["epoch"] = e.epoch;
    d["lr"] = e.lr;
    d["train_loss"] = e.train_loss;
    d["val_loss"] = e.val_loss;
    d["val_mae"] = e.val_mae;
    d["val_mse"] = e.val_mse;
    d["val_mssim"] = e.val_mssim;
    epochs.append(d);
  }
  py::dict out;
  out["stage"] = r.stage;
  out["epochs"] = epochs;
  out["best_epoch"] = r.best_epoch;
  out["best_val_loss"] = r.best_val_loss;
  out["stop_reason"] = r.stop_reason;
  out["skipped_samples"] = r.skipped_samples;
  out["validated_on_train"] = r.validated_on_train;
  return out;
}

py::dict eval_dict(const metrics::EvalReport& r) {
  py::dict out;
  out["mae"] = r.mae;
  out["mse"] = r.mse;
  out["mssim"] = r.mssim;
  out["land_pixels"] = r.land_pixels;
  out["total_pixels"] = r.total_pixels;
  out["undefined_samples"] = r.undefined_samples;
  out["mask_coverage"] = r.mask_coverage;
  return out;
}

train::TrainOptions quiet_options() {
  train::TrainOptions o;
  o.on_warning = [](const std::string& w) {
    py::gil_scoped_acquire gil;
    PyErr_WarnEx(PyExc_RuntimeWarning, w.c_str(), 1);
  };
  return o;
}

template <class F>
auto without_gil(F&& f) {
  py::gil_scoped_release release;
  return f();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Naturalness mapping with UNet fusion models.";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<CorruptFileError>(m, "CorruptFileError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<InvalidCoordinateError>(m, "InvalidCoordinateError", base.ptr());
  py::register_exception<FusionError>(m, "FusionError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  py::class_<config::RunConfig>(m, "Config")
      .def(py::init([](py::kwargs kw) { return make_config(kw); }))
      .def("set", [](config::RunConfig& c, const std::string& k,
                     const py::handle& v) { c.set(k, config_value(v)); })
      .def("get", &config::RunConfig::get)
      .def("keys", &config::RunConfig::keys)
      .def("merge_file", &config::RunConfig::merge_file)
      .def("text", &config::RunConfig::text)
      .def("__repr__", [](const config::RunConfig& c) { return "Config(\n" + c.text() + ")"; });

  // geo
  m.def("normalize_longitude", &geo::normalize_longitude, py::arg("lon_deg"));
  m.def("encode_longitude", [](double lon) {
    const auto sc = geo::encode_longitude(lon);
    return py::make_tuple(sc.sin, sc.cos);
  }, py::arg("lon_deg"), "(sin, cos) of the longitude on the full circle.");
  m.def("encode_latitude", &geo::encode_latitude, py::arg("lat_deg"));
  m.def("build_geo_grid", [](double lat, double lon, std::size_t h, std::size_t w,
                             double pixel_deg) {
    return to_numpy(geo::build_geo_grid({lat, lon}, h, w, pixel_deg));
  }, py::arg("lat_deg"), py::arg("lon_deg"), py::arg("h"), py::arg("w"),
        py::arg("pixel_size_deg") = data::kPixelSizeDeg);

  // data
  py::class_<data::Sample>(m, "Sample")
      .def_property_readonly("patch", [](const data::Sample& s) { return to_numpy(s.patch); })
      .def_property_readonly("context", [](const data::Sample& s) { return to_numpy(s.context); })
      .def_property_readonly("geo", [](const data::Sample& s) { return to_numpy(s.geo); })
      .def_property_readonly("target", [](const data::Sample& s) { return to_numpy(s.target); })
      .def_property_readonly("water_mask",
                             [](const data::Sample& s) { return to_numpy(s.water_mask); })
      .def_property_readonly("lat_deg", [](const data::Sample& s) { return s.center.lat_deg; })
      .def_property_readonly("lon_deg", [](const data::Sample& s) { return s.center.lon_deg; })
      .def_readonly("sample_seed", &data::Sample::sample_seed)
      .def("__repr__", [](const data::Sample& s) {
        std::ostringstream o;
        o << "Sample(seed=" << s.sample_seed << ", size=" << s.height() << "x" << s.width()
          << ", lat=" << s.center.lat_deg << ", lon=" << s.center.lon_deg << ")";
        return o.str();
      });

  m.def("generate_sample", [](std::uint64_t sample_seed, const config::RunConfig* cfg) {
    return data::generate_sample(cfg ? cfg->synth() : config::RunConfig().synth(), sample_seed);
  }, py::arg("sample_seed"), py::arg("config") = nullptr);

  m.def("generate_dataset", [](const fs::path& root, const config::RunConfig* cfg,
                               bool overwrite) {
    const config::RunConfig c = cfg ? *cfg : config::RunConfig();
    const auto workers = kv::to_uint("workers", c.get("workers"));
    without_gil([&] {
      return data::generate_dataset(c.synth(), kv::to_uint("n_train", c.get("n_train")),
                                    kv::to_uint("n_val", c.get("n_val")),
                                    kv::to_uint("n_test", c.get("n_test")), root, overwrite,
                                    workers == 0 ? 1 : workers);
    });
    c.write(root / "config.txt");
  }, py::arg("root"), py::arg("config") = nullptr, py::arg("overwrite") = false);

  m.def("split_ids", [](const fs::path& root, const std::string& split) {
    return data::read_manifest(root).ids(split);
  }, py::arg("root"), py::arg("split"));
  m.def("load_split", [](const fs::path& root, const std::string& split) {
    return data::load_split(data::read_manifest(root), split);
  }, py::arg("root"), py::arg("split"));
  m.def("read_sample", &data::read_sample, py::arg("dir"));
  m.def("write_sample", &data::write_sample, py::arg("dir"), py::arg("sample"));
  m.def("compute_sample_weights",
        py::overload_cast<const std::vector<double>&>(&data::compute_sample_weights),
        py::arg("mean_targets"));

  // NTSR and PGM
  m.def("read_tensor", [](const fs::path& p) { return to_numpy(read_tensor(p)); },
        py::arg("path"));
  m.def("write_tensor", [](const fs::path& p, const FloatArray& a) {
    write_tensor(p, from_numpy(a));
  }, py::arg("path"), py::arg("array"));
  m.def("encode_tensor", [](const FloatArray& a) {
    const auto bytes = encode_tensor(from_numpy(a));
    return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  }, py::arg("array"));
  m.def("decode_tensor", [](const py::bytes& b) {
    const std::string s = b;
    return to_numpy(decode_tensor(std::vector<std::uint8_t>(s.begin(), s.end())));
  }, py::arg("data"));
  m.def("write_pgm", [](const fs::path& p, const FloatArray& a) {
    write_pgm(p, from_numpy(a));
  }, py::arg("path"), py::arg("array"));

  // metrics
  auto opt = [](std::optional<double> v) -> py::object {
    return v ? py::object(py::float_(*v)) : py::object(py::none());
  };
  m.def("masked_mae", [opt](const FloatArray& p, const FloatArray& t, const FloatArray& w) {
    return opt(metrics::masked_mae(from_numpy(p), from_numpy(t), from_numpy(w)));
  }, py::arg("pred"), py::arg("target"), py::arg("water_mask"),
        "Mean absolute error over land pixels, None for an all-water tile.");
  m.def("masked_mse", [opt](const FloatArray& p, const FloatArray& t, const FloatArray& w) {
    return opt(metrics::masked_mse(from_numpy(p), from_numpy(t), from_numpy(w)));
  }, py::arg("pred"), py::arg("target"), py::arg("water_mask"));
  m.def("mssim", [](const FloatArray& p, const FloatArray& t, const FloatArray& w) {
    return metrics::mssim(from_numpy(p), from_numpy(t), from_numpy(w)).value;
  }, py::arg("pred"), py::arg("target"), py::arg("water_mask"));
  m.def("gaussian_window", &metrics::gaussian_window, py::arg("size") = 11,
        py::arg("sigma") = 1.5);

  // optim
  m.def("lr_at", [](double epoch, const config::RunConfig* cfg) {
    return optim::lr_at(epoch, cfg ? cfg->train() : config::RunConfig().train());
  }, py::arg("epoch"), py::arg("config") = nullptr);

  // model
  py::class_<model::ModelBundle>(m, "Model")
      .def_property_readonly("variant",
                             [](const model::ModelBundle& b) { return model::to_string(b.variant()); })
      .def_property_readonly("patch_size",
                             [](const model::ModelBundle& b) { return b.arch().patch_size; })
      .def_property_readonly("frozen", &model::ModelBundle::frozen)
      .def("checksum", [](model::ModelBundle& b, const std::string& component) {
        return model::checksum(b, component);
      }, py::arg("component"))
      .def("predict", [](model::ModelBundle& b, const data::Sample& s) {
        return to_numpy(model::predict(b, s, b.variant()));
      }, py::arg("sample"), "Clamped naturalness map for one sample.")
      .def("evaluate", [](model::ModelBundle& b, const std::vector<data::Sample>& samples) {
        return eval_dict(without_gil([&] { return metrics::evaluate(b, samples, b.variant()); }));
      }, py::arg("samples"))
      .def("save", [](model::ModelBundle& b, const fs::path& dir) {
        model::save_checkpoint(b, dir);
      }, py::arg("dir"))
      .def("__repr__", [](const model::ModelBundle& b) {
        return "Model(variant=" + model::to_string(b.variant()) +
               ", patch_size=" + std::to_string(b.arch().patch_size) + ")";
      });

  m.def("init_model", [](const std::string& variant, std::uint64_t seed,
                         const config::RunConfig* cfg) {
    const auto arch = cfg ? cfg->arch() : config::RunConfig().arch();
    return model::init_parameters(arch, seed, model::parse_variant(variant));
  }, py::arg("variant") = "proposed", py::arg("seed") = 0, py::arg("config") = nullptr);
  m.def("load_model", &model::load_checkpoint, py::arg("dir"));

  m.def("train_autoencoder", [](const std::vector<data::Sample>& train,
                                const std::vector<data::Sample>& val,
                                const config::RunConfig* cfg) {
    const config::RunConfig c = cfg ? *cfg : config::RunConfig();
    auto result = without_gil([&] {
      return train::train_autoencoder(train, val, c.arch(), c.train(), quiet_options());
    });
    return py::make_tuple(std::move(result.bundle), report_dict(result.report));
  }, py::arg("train"), py::arg("val"), py::arg("config") = nullptr,
        "Returns (autoencoder, report).");

  m.def("train_model", [](const std::vector<data::Sample>& train,
                          const std::vector<data::Sample>& val, const std::string& variant,
                          const model::ModelBundle* autoencoder, const config::RunConfig* cfg) {
    const config::RunConfig c = cfg ? *cfg : config::RunConfig();
    auto result = without_gil([&] {
      return train::train_model(train, val, c.arch(), c.train(), model::parse_variant(variant),
                                autoencoder, quiet_options());
    });
    return py::make_tuple(std::move(result.bundle), report_dict(result.report));
  }, py::arg("train"), py::arg("val"), py::arg("variant") = "proposed",
        py::arg("autoencoder") = nullptr, py::arg("config") = nullptr,
        "Returns (model, report).");
}
