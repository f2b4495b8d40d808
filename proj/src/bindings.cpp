#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <string>
#include <vector>

#include "c2f/data.hpp"
#include "c2f/gradsuite.hpp"
#include "c2f/metrics.hpp"
#include "c2f/trainer.hpp"

namespace py = pybind11;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

c2f::Matrix to_matrix(const DoubleArray& a) {
    if (a.ndim() != 2) throw c2f::ShapeError("expected a 2-D float array");
    c2f::Matrix m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    auto buf = a.unchecked<2>();
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) m(r, c) = buf(r, c);
    return m;
}

py::array_t<double> to_array(const c2f::Matrix& m) {
    py::array_t<double> a({m.rows, m.cols});
    auto buf = a.mutable_unchecked<2>();
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) buf(r, c) = m(r, c);
    return a;
}

std::map<std::string, std::string> to_kv(const py::dict& settings, const char* allowed_prefix) {
    std::map<std::string, std::string> kv;
    for (auto item : settings) {
        const std::string key = py::str(item.first);
        if (key.rfind(allowed_prefix, 0) != 0)
            throw c2f::ConfigError("unknown key '" + key + "' (expected " + allowed_prefix +
                                   "* here)");
        kv[key] = py::str(item.second);
    }
    return kv;
}

c2f::TrainConfig train_config(const py::dict& settings) {
    c2f::ModelConfig mc;
    c2f::TrainConfig tc;
    c2f::SyntheticSpec sp;
    c2f::apply_settings(to_kv(settings, "train."), mc, tc, sp);
    tc.validate();
    return tc;
}

py::dict report_dict(const c2f::EvalReport& rep) {
    py::dict d;
    d["mof"] = rep.mof;
    d["edit"] = rep.edit;
    d["f1_10"] = rep.f1_10;
    d["f1_25"] = rep.f1_25;
    d["f1_50"] = rep.f1_50;
    d["wrong_count"] = rep.wrong_count;
    d["wrong_entropy_mean"] = rep.wrong_entropy_mean;
    py::list vids;
    for (const auto& v : rep.videos) {
        py::dict vd;
        vd["id"] = v.id;
        vd["mof"] = v.mof;
        vd["edit"] = v.edit;
        vd["f1_10"] = v.f1_10;
        vd["f1_25"] = v.f1_25;
        vd["f1_50"] = v.f1_50;
        vd["labels"] = v.prediction.labels;
        vids.append(vd);
    }
    d["videos"] = vids;
    py::list bins;
    for (const auto& b : rep.calibration) {
        py::dict bd;
        bd["lo"] = b.lo;
        bd["hi"] = b.hi;
        bd["count"] = b.count;
        bd["accuracy"] = b.accuracy;
        bd["mean_confidence"] = b.mean_confidence;
        bins.append(bd);
    }
    d["calibration"] = bins;
    return d;
}

void check_dataset_fits(const c2f::Dataset& ds, const c2f::ModelConfig& cfg) {
    if (ds.videos.empty()) throw c2f::ValidationError("dataset has no videos");
    if (ds.videos.front().features.cols != cfg.d_in)
        throw c2f::ValidationError("dataset has " +
                                   std::to_string(ds.videos.front().features.cols) +
                                   " feature channels, model expects " + std::to_string(cfg.d_in));
    if (ds.mapping.size() != cfg.num_classes)
        throw c2f::ValidationError("dataset has " + std::to_string(ds.mapping.size()) +
                                   " classes, model expects " + std::to_string(cfg.num_classes));
    if (ds.num_activities > cfg.num_activities)
        throw c2f::ValidationError("dataset has " + std::to_string(ds.num_activities) +
                                   " activities, model expects at most " +
                                   std::to_string(cfg.num_activities));
}

struct PyModel {
    c2f::ModelParams params;
};

}  // namespace

PYBIND11_MODULE(_c2f, m) {
    m.doc() = "coarse-to-fine temporal convolutional network for action segmentation";

    py::register_exception<c2f::ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<c2f::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<c2f::FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<c2f::ValidationError>(m, "ValidationError", PyExc_ValueError);

    m.def(
        "window_distribution",
        [](int w0, double pi0) { return c2f::build_distribution(w0, pi0).support(); },
        py::arg("w0"), py::arg("pi0") = 0.5,
        "(window, probability) pairs of the sampling distribution centered on w0");

    m.def(
        "pool_features",
        [](const DoubleArray& f, int w) { return to_array(c2f::pool_features_only(to_matrix(f), w)); },
        py::arg("features"), py::arg("window"),
        "Per-channel max pooling with window-sized strides; the last window may be short");

    m.def(
        "mof", [](const std::vector<int>& pred, const std::vector<int>& gt) { return c2f::mof(pred, gt); },
        py::arg("pred"), py::arg("gt"), "Frame accuracy in percent");
    m.def(
        "edit_score",
        [](const std::vector<int>& pred, const std::vector<int>& gt) { return c2f::edit_score(pred, gt); },
        py::arg("pred"), py::arg("gt"), "Segmental edit score in percent");
    m.def(
        "f1_at",
        [](const std::vector<int>& pred, const std::vector<int>& gt, double overlap) {
            const auto r = c2f::f1_at(pred, gt, overlap);
            py::dict d;
            d["precision"] = r.precision;
            d["recall"] = r.recall;
            d["f1"] = r.f1;
            return d;
        },
        py::arg("pred"), py::arg("gt"), py::arg("overlap"),
        "Segmental F1 at an IoU threshold, in percent");
    m.def(
        "to_segments",
        [](const std::vector<int>& labels) {
            std::vector<std::tuple<int, int, int>> out;
            for (const auto& s : c2f::to_segments(labels)) out.emplace_back(s.label, s.start, s.end);
            return out;
        },
        py::arg("labels"), "(label, start, end) runs with half-open frame ranges");
    m.def(
        "calibration_curve",
        [](const std::vector<double>& confidences, const std::vector<bool>& correct, int bins) {
            py::list out;
            for (const auto& b : c2f::calibration_curve(confidences, correct, bins)) {
                py::dict d;
                d["lo"] = b.lo;
                d["hi"] = b.hi;
                d["count"] = b.count;
                d["accuracy"] = b.accuracy;
                d["mean_confidence"] = b.mean_confidence;
                out.append(d);
            }
            return out;
        },
        py::arg("confidences"), py::arg("correct"), py::arg("bins") = 10);

    m.def(
        "synthesize",
        [](const std::string& out_dir, const py::dict& settings) {
            c2f::SyntheticSpec sp;
            {
                c2f::ModelConfig mc;
                c2f::TrainConfig tc;
                c2f::apply_settings(to_kv(settings, "synth."), mc, tc, sp);
            }
            const c2f::SyntheticSpec full = c2f::default_synthetic_spec(
                sp.num_videos, sp.num_classes, sp.num_activities, sp.d, sp.seed);
            c2f::SyntheticSpec spec = full;
            spec.t_min = sp.t_min;
            spec.t_max = sp.t_max;
            spec.actions_min = sp.actions_min;
            spec.actions_max = sp.actions_max;
            spec.noise_scale = sp.noise_scale;
            const auto records = c2f::make_synthetic(spec);
            c2f::ClassMapping mapping;
            for (int c = 0; c < spec.num_classes; ++c) {
                mapping.names.push_back("action" + std::to_string(c));
                mapping.index[mapping.names.back()] = c;
            }
            c2f::write_dataset(out_dir, records, mapping);
            return records.size();
        },
        py::arg("out_dir"), py::arg("settings") = py::dict(),
        "Write a synthetic dataset; settings use synth.* keys");

    m.def(
        "load_dataset",
        [](const std::string& dir) {
            const c2f::Dataset ds = c2f::load_dataset(dir);
            py::dict d;
            py::list vids;
            for (const auto& v : ds.videos) {
                py::dict vd;
                vd["id"] = v.id;
                vd["features"] = to_array(v.features);
                vd["labels"] = v.frame_labels;
                vd["activity"] = v.activity;
                vids.append(vd);
            }
            d["videos"] = vids;
            d["actions"] = ds.mapping.names;
            d["num_activities"] = ds.num_activities;
            return d;
        },
        py::arg("dir"));

    m.def(
        "gradcheck",
        [](int per_op_trials, int e2e_trials, std::uint64_t seed) {
            c2f::GradSuiteResult res;
            {
                py::gil_scoped_release nogil;
                res = c2f::run_gradient_suite(per_op_trials, e2e_trials, seed);
            }
            py::dict d;
            d["ok"] = res.ok;
            d["max_rel_err"] = res.max_rel_err;
            d["total_trials"] = res.total_trials;
            py::list ops;
            for (const auto& op : res.ops) {
                py::dict od;
                od["name"] = op.name;
                od["trials"] = op.trials;
                od["max_rel_err"] = op.max_rel_err;
                od["ok"] = op.ok;
                ops.append(od);
            }
            d["ops"] = ops;
            return d;
        },
        py::arg("per_op_trials") = 20, py::arg("e2e_trials") = 1, py::arg("seed") = 0,
        "Finite-difference check of every differentiable op plus two end-to-end losses");

    py::class_<PyModel>(m, "Model")
        .def(py::init([](int d_in, int num_classes, int num_activities, std::uint64_t seed,
                         const py::dict& settings) {
                 c2f::ModelConfig mc;
                 {
                     c2f::TrainConfig tc;
                     c2f::SyntheticSpec sp;
                     c2f::apply_settings(to_kv(settings, "model."), mc, tc, sp);
                 }
                 mc.d_in = d_in;
                 mc.num_classes = num_classes;
                 mc.num_activities = num_activities;
                 mc.validate();
                 PyModel model;
                 model.params = c2f::ModelParams(mc, seed);
                 return model;
             }),
             py::arg("d_in"), py::arg("num_classes"), py::arg("num_activities"),
             py::arg("seed") = 0, py::arg("settings") = py::dict(),
             "Fresh parameters; settings use model.* keys (widths, windows, mlp size)")
        .def_property_readonly("d_in", [](const PyModel& s) { return s.params.cfg.d_in; })
        .def_property_readonly("num_classes",
                               [](const PyModel& s) { return s.params.cfg.num_classes; })
        .def_property_readonly("num_activities",
                               [](const PyModel& s) { return s.params.cfg.num_activities; })
        .def_property_readonly("core_params",
                               [](const PyModel& s) { return s.params.core_param_count(); })
        .def_property_readonly("total_params",
                               [](const PyModel& s) { return s.params.total_param_count(); })
        .def(
            "fit",
            [](PyModel& self, const std::string& data_dir, const py::dict& settings) {
                const c2f::TrainConfig tc = train_config(settings);
                const c2f::Dataset ds = c2f::load_dataset(data_dir);
                check_dataset_fits(ds, self.params.cfg);
                std::vector<c2f::EpochStats> hist;
                {
                    py::gil_scoped_release nogil;
                    hist = c2f::train(self.params, ds.videos, tc);
                }
                py::list out;
                for (const auto& e : hist) {
                    py::dict d;
                    d["total"] = e.total;
                    d["ce"] = e.ce;
                    d["tr"] = e.tr;
                    d["al"] = e.al;
                    d["skipped"] = e.skipped_steps;
                    out.append(d);
                }
                return out;
            },
            py::arg("data_dir"), py::arg("settings") = py::dict(),
            "Train on a dataset directory; returns per-epoch loss means (train.* keys)")
        .def(
            "fit_recognition",
            [](PyModel& self, const std::string& data_dir, const py::dict& settings) {
                const c2f::TrainConfig tc = train_config(settings);
                const c2f::Dataset ds = c2f::load_dataset(data_dir);
                check_dataset_fits(ds, self.params.cfg);
                const auto samples = c2f::recognition_samples(ds.videos);
                std::vector<double> hist;
                {
                    py::gil_scoped_release nogil;
                    hist = c2f::train_recognition(self.params, samples, tc);
                }
                return hist;
            },
            py::arg("data_dir"), py::arg("settings") = py::dict(),
            "Train the video-level activity head; returns per-epoch losses")
        .def(
            "predict_probs",
            [](PyModel& self, const DoubleArray& features, const py::dict& settings) {
                const c2f::TrainConfig tc = train_config(settings);
                return to_array(c2f::infer_probs(self.params, to_matrix(features), tc, tc.ensemble()));
            },
            py::arg("features"), py::arg("settings") = py::dict(),
            "Ensembled class probabilities, one row per frame")
        .def(
            "predict",
            [](PyModel& self, const DoubleArray& features, const py::dict& settings) {
                const c2f::TrainConfig tc = train_config(settings);
                const c2f::Matrix p =
                    c2f::infer_probs(self.params, to_matrix(features), tc, tc.ensemble());
                const c2f::Prediction pred = c2f::predict_labels(p);
                return py::make_tuple(pred.labels, pred.confidence);
            },
            py::arg("features"), py::arg("settings") = py::dict(),
            "(labels, confidence) per frame")
        .def(
            "predict_activity",
            [](PyModel& self, const DoubleArray& features, const py::dict& settings) {
                const c2f::TrainConfig tc = train_config(settings);
                return c2f::predict_activity(self.params, to_matrix(features), tc);
            },
            py::arg("features"), py::arg("settings") = py::dict())
        .def(
            "evaluate",
            [](PyModel& self, const std::string& data_dir, const py::dict& settings) {
                const c2f::TrainConfig tc = train_config(settings);
                const c2f::Dataset ds = c2f::load_dataset(data_dir);
                check_dataset_fits(ds, self.params.cfg);
                c2f::EvalReport rep;
                {
                    py::gil_scoped_release nogil;
                    rep = c2f::evaluate(self.params, ds.videos, tc, tc.ensemble());
                }
                return report_dict(rep);
            },
            py::arg("data_dir"), py::arg("settings") = py::dict())
        .def("save", [](const PyModel& self,
                        const std::string& path) { c2f::save_checkpoint(path, self.params); },
             py::arg("path"))
        .def_static(
            "load",
            [](const std::string& path) {
                PyModel model;
                model.params = c2f::load_checkpoint(path);
                return model;
            },
            py::arg("path"));
}
