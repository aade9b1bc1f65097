// SPDX-License-Identifier: Apache-2.0
//
// Python bindings for the e3lab core: corpus synthesis, detector training,
// the expert-ensemble update cycle, metrics and protocol runs.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "e3/baselines.hpp"
#include "e3/checkpoint.hpp"
#include "e3/config.hpp"
#include "e3/errors.hpp"
#include "e3/metrics.hpp"
#include "e3/protocol.hpp"
#include "e3/report.hpp"
#include "e3/synthgen.hpp"

namespace py = pybind11;

namespace {

using nlohmann::json;

py::array_t<float> image_to_array(const e3::LabeledImage& img) {
  py::array_t<float> out({img.height, img.width});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

e3::LabeledImage array_to_image(const py::array& arr, int label,
                                const std::string& source_id, int index) {
  py::array_t<float, py::array::c_style | py::array::forcecast> a(arr);
  if (a.ndim() != 2) {
    throw e3::DimensionError("expected a 2-D float array for an image");
  }
  e3::LabeledImage img;
  img.height = static_cast<int>(a.shape(0));
  img.width = static_cast<int>(a.shape(1));
  img.pixels.assign(a.data(), a.data() + a.size());
  img.label = label;
  img.source_id = source_id;
  img.index = index;
  return img;
}

std::vector<e3::LabeledImage> stack_to_images(const py::array& arr) {
  py::array_t<float, py::array::c_style | py::array::forcecast> a(arr);
  if (a.ndim() != 3) {
    throw e3::DimensionError("expected an [n,H,W] float array");
  }
  const int n = static_cast<int>(a.shape(0));
  const int h = static_cast<int>(a.shape(1));
  const int w = static_cast<int>(a.shape(2));
  std::vector<e3::LabeledImage> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    e3::LabeledImage img;
    img.height = h;
    img.width = w;
    const float* base = a.data() + static_cast<std::size_t>(i) * h * w;
    img.pixels.assign(base, base + static_cast<std::size_t>(h) * w);
    img.label = 0;
    img.source_id = "array";
    img.index = i;
    out.push_back(std::move(img));
  }
  return out;
}

py::array_t<float> images_to_stack(const std::vector<e3::LabeledImage>& imgs) {
  if (imgs.empty()) return py::array_t<float>({0, 0, 0});
  py::array_t<float> out({static_cast<int>(imgs.size()), imgs[0].height,
                          imgs[0].width});
  float* dst = out.mutable_data();
  for (const e3::LabeledImage& img : imgs) {
    dst = std::copy(img.pixels.begin(), img.pixels.end(), dst);
  }
  return out;
}

e3::GeneratorSpec spec_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw e3::ConfigError(std::string("bad generator spec JSON: ") + e.what());
  }
  e3::GeneratorSpec spec;
  spec.id = j.at("id").get<std::string>();
  spec.family = e3::trace_family_from_string(j.at("family").get<std::string>());
  spec.params = j.at("params").get<std::map<std::string, double>>();
  spec.fingerprint_seed = j.value("fingerprint_seed", 0ull);
  spec.validate();
  return spec;
}

py::dict episode_to_dict(const e3::EpisodeReport& ep,
                         const e3::ProtocolResult& result) {
  py::dict d;
  d["method"] = ep.method;
  d["protocol"] = result.protocol;
  d["label"] = result.label;
  d["episode"] = ep.episode;
  d["generator"] = ep.generator_id;
  py::dict auc, acc;
  for (const auto& [src, v] : ep.per_source_auc) auc[py::str(src)] = v;
  for (const auto& [src, v] : ep.per_source_accuracy) acc[py::str(src)] = v;
  d["per_source_auc"] = auc;
  d["per_source_accuracy"] = acc;
  d["avg_auc"] = ep.avg_auc;
  d["avg_accuracy"] = ep.avg_accuracy;
  if (ep.mixed_auc.has_value()) {
    d["mixed_auc"] = *ep.mixed_auc;
  } else {
    d["mixed_auc"] = py::none();
  }
  d["wall_seconds"] = ep.wall_seconds;
  return d;
}

void register_exceptions(py::module_& m) {
  static py::exception<e3::ConfigError> config_error(m, "ConfigError");
  static py::exception<e3::E3Error> e3_error(m, "E3LabError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const e3::ConfigError& e) {
      config_error(e.what());
    } catch (const e3::E3Error& e) {
      e3_error(e.what());
    }
  });
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "e3lab core: continual synthetic-image-detector laboratory";
  register_exceptions(m);

  py::class_<e3::RunConfig>(m, "RunConfig")
      .def_static("defaults", &e3::default_config)
      .def_static("from_json", &e3::parse_config_json, py::arg("text"))
      .def("to_json", &e3::serialize_config)
      .def("fingerprint", &e3::RunConfig::fingerprint)
      .def_readwrite("master_seed", &e3::RunConfig::master_seed)
      .def_readwrite("protocol", &e3::RunConfig::protocol)
      .def_readwrite("buffer_capacity", &e3::RunConfig::buffer_capacity)
      .def_readwrite("new_data_budget", &e3::RunConfig::new_data_budget);

  py::class_<e3::Corpus, std::shared_ptr<e3::Corpus>>(m, "Corpus")
      .def("source_ids", &e3::Corpus::source_ids)
      .def(
          "images",
          [](const e3::Corpus& c, const std::string& source,
             const std::string& split) {
            e3::Split s = split == "train"  ? e3::Split::train
                          : split == "val" ? e3::Split::val
                                           : e3::Split::test;
            return images_to_stack(e3::split_corpus(c, source, s));
          },
          py::arg("source"), py::arg("split"))
      .def("export_dir",
           [](const e3::Corpus& c, const std::string& dir) {
             e3::export_corpus(c, dir);
           })
      .def_property_readonly("image_size", [](const e3::Corpus& c) {
        return c.config.image_size;
      });

  m.def(
      "build_corpus",
      [](const e3::RunConfig& cfg) {
        e3::CorpusConfig cc = cfg.corpus;
        cc.master_seed = cfg.master_seed;
        return std::make_shared<e3::Corpus>(e3::build_corpus(cc));
      },
      py::arg("config"));
  m.def("import_corpus", [](const std::string& dir) {
    return std::make_shared<e3::Corpus>(e3::import_corpus(dir));
  });

  m.def(
      "generate_real",
      [](std::uint64_t seed, int index, int size) {
        return image_to_array(e3::generate_real(seed, index, size));
      },
      py::arg("seed"), py::arg("index"), py::arg("size"));
  m.def(
      "apply_trace",
      [](const py::array& base, const std::string& spec_json,
         std::uint64_t noise_seed) {
        e3::LabeledImage img = array_to_image(base, 0, "real", 0);
        return image_to_array(
            e3::apply_trace(img, spec_from_json_text(spec_json), noise_seed));
      },
      py::arg("base"), py::arg("spec_json"), py::arg("noise_seed") = 0);
  m.def(
      "extract_patch",
      [](const py::array& image, int size, const std::string& mode,
         std::uint64_t seed) {
        e3::LabeledImage img = array_to_image(image, 0, "real", 0);
        const e3::PatchMode pm =
            mode == "center" ? e3::PatchMode::center : e3::PatchMode::random;
        return image_to_array(e3::extract_patch(img, size, pm, seed));
      },
      py::arg("image"), py::arg("size"), py::arg("mode") = "center",
      py::arg("seed") = 0);

  py::class_<e3::DetectorModel, std::shared_ptr<e3::DetectorModel>>(m,
                                                                    "Detector")
      .def_property_readonly("embed_dim",
                             [](const e3::DetectorModel& d) {
                               return d.embedder.config.embed_dim;
                             })
      .def_property_readonly("param_count", &e3::DetectorModel::param_count)
      .def_property_readonly("train_loss_history",
                             [](const e3::DetectorModel& d) {
                               return d.train_loss_history;
                             });

  m.def(
      "train_baseline",
      [](const e3::Corpus& corpus, const e3::RunConfig& cfg) {
        return std::make_shared<e3::DetectorModel>(
            e3::train_baseline(corpus, cfg));
      },
      py::arg("corpus"), py::arg("config"));
  m.def(
      "predict_scores",
      [](const e3::DetectorModel& model, const py::array& images) {
        return e3::predict_scores(model, stack_to_images(images));
      },
      py::arg("detector"), py::arg("images"));
  m.def(
      "embed",
      [](const e3::DetectorModel& model, const py::array& images) {
        const auto vecs = e3::embed(model, stack_to_images(images));
        py::array_t<float> out(
            {static_cast<int>(vecs.size()),
             model.embedder.config.embed_dim});
        float* dst = out.mutable_data();
        for (const auto& v : vecs) dst = std::copy(v.begin(), v.end(), dst);
        return out;
      },
      py::arg("detector"), py::arg("images"));

  m.def("save_detector", &e3::save_detector_checkpoint, py::arg("detector"),
        py::arg("path"));
  m.def("load_detector", [](const std::string& path) {
    return std::make_shared<e3::DetectorModel>(
        e3::load_detector_checkpoint(path));
  });

  m.def("roc_auc", &e3::roc_auc, py::arg("pos_scores"), py::arg("neg_scores"));
  m.def("accuracy", &e3::accuracy, py::arg("scores"), py::arg("labels"),
        py::arg("threshold") = 0.5);
  m.def("rer", &e3::rer, py::arg("auc_new"), py::arg("auc_ref"));

  // Quota arithmetic for a buffer of capacity M after absorbing k generators.
  m.def(
      "buffer_quota",
      [](int capacity, int k) {
        if (capacity < 4 || capacity % 2 != 0 || k < 0) {
          throw e3::ConfigError("buffer_quota: bad arguments");
        }
        return capacity / (2 * (k + 1));
      },
      py::arg("capacity"), py::arg("k"));

  m.def(
      "run_protocol",
      [](const e3::RunConfig& cfg, const py::object& out_dir) {
        py::list episodes;
        auto emit = [&](const e3::ProtocolOutcome& outcome) {
          for (const e3::EpisodeReport& ep : outcome.result.episodes) {
            episodes.append(episode_to_dict(ep, outcome.result));
          }
        };
        if (cfg.protocol == "sweep") {
          std::vector<e3::ProtocolOutcome> outs = e3::run_sweep(cfg);
          if (!out_dir.is_none()) {
            std::vector<e3::ProtocolResult> results;
            for (const auto& o : outs) results.push_back(o.result);
            e3::write_reports(results, e3::serialize_config(cfg),
                              out_dir.cast<std::string>());
          }
          for (const auto& o : outs) emit(o);
        } else if (cfg.protocol == "arch") {
          std::vector<e3::ProtocolOutcome> outs = e3::run_arch(cfg);
          if (!out_dir.is_none()) {
            std::vector<e3::ProtocolResult> results;
            for (const auto& o : outs) results.push_back(o.result);
            e3::write_reports(results, e3::serialize_config(cfg),
                              out_dir.cast<std::string>());
          }
          for (const auto& o : outs) emit(o);
        } else {
          e3::ProtocolOutcome out = e3::run_protocol(cfg);
          if (!out_dir.is_none()) {
            e3::write_report(out.result, e3::serialize_config(cfg),
                             out_dir.cast<std::string>());
          }
          emit(out);
        }
        return episodes;
      },
      py::arg("config"), py::arg("out_dir") = py::none());

  m.attr("__version__") = "0.1.0";
}
