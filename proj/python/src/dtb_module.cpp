#include "dtb/checkpoint.hpp"
#include "dtb/errors.hpp"
#include "dtb/evaluation.hpp"
#include "dtb/experiment.hpp"
#include "dtb/features.hpp"
#include "dtb/nmf.hpp"
#include "dtb/nn/arch.hpp"
#include "dtb/notation.hpp"
#include "dtb/synth.hpp"
#include "dtb/train.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <utility>

namespace py = pybind11;

namespace {

py::object py_count_combinations(int n, int k_min, int k_max) {
    const std::string decimal = dtb::count_combinations(n, k_min, k_max).to_string();
    PyObject* value = PyLong_FromString(decimal.c_str(), nullptr, 10);
    if (value == nullptr) throw py::error_already_set();
    return py::reinterpret_steal<py::object>(value);
}

py::array_t<double> py_render_combination(const std::vector<int>& midis, double duration,
                                          double sample_rate) {
    std::vector<dtb::Pitch> pitches;
    pitches.reserve(midis.size());
    for (int m : midis) pitches.emplace_back(dtb::Pitch{m});
    const dtb::AudioClip clip =
        dtb::render_combination(dtb::NoteCombination(pitches), duration,
                                dtb::SynthPatch::default_patch(), sample_rate);
    py::array_t<double> out(static_cast<py::ssize_t>(clip.samples.size()));
    std::copy(clip.samples.begin(), clip.samples.end(), out.mutable_data());
    return out;
}

dtb::FeatureMatrix features_from_array(const py::array_t<float, py::array::c_style>& array,
                                       double frame_rate) {
    if (array.ndim() != 2) throw dtb::ArgumentError("features must be a 2-d [frames, bins] array");
    dtb::FeatureMatrix features;
    features.frame_rate = frame_rate;
    features.n_frames = static_cast<int>(array.shape(0));
    features.n_bins = static_cast<int>(array.shape(1));
    features.data.assign(array.data(), array.data() + array.size());
    return features;
}

py::array_t<float> array_from_features(const dtb::FeatureMatrix& features) {
    py::array_t<float> out({features.n_frames, features.n_bins});
    std::copy(features.data.begin(), features.data.end(), out.mutable_data());
    return out;
}

py::array_t<float> py_extract_features(const py::array_t<double, py::array::c_style>& samples,
                                       double sample_rate, int fft_size, int hop, int n_bins,
                                       double f_min, double f_max) {
    if (samples.ndim() != 1) throw dtb::ArgumentError("samples must be a 1-d array");
    dtb::AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.samples.assign(samples.data(), samples.data() + samples.size());
    dtb::FeatureConfig cfg;
    cfg.sample_rate = sample_rate;
    cfg.fft_size = fft_size;
    cfg.hop = hop;
    cfg.n_bins = n_bins;
    cfg.f_min = f_min;
    cfg.f_max = f_max;
    return array_from_features(dtb::extract_features(clip, cfg));
}

dtb::PianoRoll roll_from_array(const py::array_t<bool, py::array::c_style>& array,
                               double frame_rate, int pitch_lo) {
    if (array.ndim() != 2) throw dtb::ArgumentError("roll must be a 2-d [frames, pitches] array");
    dtb::PianoRoll roll(frame_rate, dtb::Pitch{pitch_lo}, static_cast<int>(array.shape(1)),
                        static_cast<int>(array.shape(0)));
    auto view = array.unchecked<2>();
    for (py::ssize_t t = 0; t < array.shape(0); ++t)
        for (py::ssize_t p = 0; p < array.shape(1); ++p)
            if (view(t, p)) roll.set(static_cast<int>(t), static_cast<int>(p), true);
    return roll;
}

py::array_t<bool> array_from_roll(const dtb::PianoRoll& roll) {
    py::array_t<bool> out({roll.n_frames(), roll.n_pitches()});
    auto view = out.mutable_unchecked<2>();
    for (int t = 0; t < roll.n_frames(); ++t)
        for (int p = 0; p < roll.n_pitches(); ++p) view(t, p) = roll.at(t, p);
    return out;
}

py::list py_architecture_table(const std::string& name) {
    const dtb::nn::ArchitectureSpec arch =
        dtb::nn::build_architecture(dtb::nn::arch_from_string(name));
    py::list rows;
    for (const dtb::nn::LayerSpec& l : arch.layers)
        rows.append(py::make_tuple(l.label(), l.dims_string(), l.params));
    return rows;
}

long long py_total_params(const std::string& name) {
    return dtb::nn::build_architecture(dtb::nn::arch_from_string(name)).total_params();
}

py::dict py_nmf_factorize(const py::array_t<float, py::array::c_style>& x, int rank,
                          int max_iters, double tolerance) {
    if (x.ndim() != 2) throw dtb::ArgumentError("x must be a 2-d [frames, bins] array");
    const int n_frames = static_cast<int>(x.shape(0));
    const int n_bins = static_cast<int>(x.shape(1));
    std::vector<double> data(x.data(), x.data() + x.size());

    dtb::NmfConfig cfg;
    cfg.rank = rank;
    cfg.max_iters = max_iters;
    cfg.tolerance = tolerance;
    const dtb::NmfResult result = dtb::nmf_factorize(data, n_bins, n_frames, cfg, nullptr);

    py::array_t<double> w({n_bins, result.rank});
    auto wv = w.mutable_unchecked<2>();
    for (int b = 0; b < n_bins; ++b)
        for (int r = 0; r < result.rank; ++r)
            wv(b, r) = result.w[static_cast<std::size_t>(r) * n_bins + b];
    py::array_t<double> h({result.rank, n_frames});
    std::copy(result.h.h.begin(), result.h.h.end(), h.mutable_data());
    py::array_t<double> history(static_cast<py::ssize_t>(result.error_history.size()));
    std::copy(result.error_history.begin(), result.error_history.end(), history.mutable_data());

    py::dict out;
    out["w"] = std::move(w);
    out["h"] = std::move(h);
    out["error_history"] = std::move(history);
    return out;
}

py::dict prf_dict(const dtb::PrfSummary& prf) {
    py::dict out;
    out["tp"] = prf.tp;
    out["fp"] = prf.fp;
    out["fn"] = prf.fn;
    out["precision"] = prf.precision;
    out["recall"] = prf.recall;
    out["f_measure"] = prf.f_measure;
    return out;
}

py::dict py_framewise_prf(const py::array_t<bool, py::array::c_style>& pred,
                          const py::array_t<bool, py::array::c_style>& truth) {
    return prf_dict(dtb::framewise_prf(roll_from_array(pred, 100.0, 21),
                                       roll_from_array(truth, 100.0, 21)));
}

py::list py_combination_stats(const py::array_t<bool, py::array::c_style>& pred,
                              const py::array_t<bool, py::array::c_style>& truth, int pitch_lo,
                              int top_k, int min_frames) {
    const auto stats = dtb::combination_stats(roll_from_array(pred, 100.0, pitch_lo),
                                              roll_from_array(truth, 100.0, pitch_lo), top_k,
                                              min_frames);
    py::list rows;
    for (const dtb::CombinationStats& s : stats) {
        py::dict row;
        py::list midis;
        for (const dtb::Pitch& p : s.combination.pitches()) midis.append(p.midi);
        row["combination"] = std::move(midis);
        row["n_frames"] = s.n_frames;
        row["p_exact"] = s.p_exact;
        row["p_additions"] = s.p_additions;
        row["p_omissions"] = s.p_omissions;
        rows.append(std::move(row));
    }
    return rows;
}

/// Inference wrapper: checkpoint + its stored standardization, windowing, and
/// threshold binarization behind one call.
class TranscriptionModel {
public:
    explicit TranscriptionModel(const std::string& checkpoint_path)
        : ckpt_(dtb::load_checkpoint(checkpoint_path)),
          model_(dtb::model_from_checkpoint(ckpt_)) {
        const dtb::NamedArray* mean = ckpt_.find("standardization.mean");
        const dtb::NamedArray* inv_std = ckpt_.find("standardization.inv_std");
        if (mean != nullptr && inv_std != nullptr)
            standardization_ = dtb::Standardization{mean->values, inv_std->values};
    }

    std::string architecture() const {
        return ckpt_.meta.at("architecture").get<std::string>();
    }

    py::array_t<bool> predict(const py::array_t<float, py::array::c_style>& features,
                              double threshold, double frame_rate) {
        dtb::FeatureMatrix matrix = features_from_array(features, frame_rate);
        if (standardization_.has_value()) standardization_->apply(matrix);
        const int n_pitches = model_.spec().output().flat
                                  ? static_cast<int>(model_.spec().output().count())
                                  : model_.spec().output().w;
        const dtb::PianoRoll roll =
            dtb::predict_roll(model_, matrix, threshold, dtb::default_pitch_base(n_pitches));
        return array_from_roll(roll);
    }

private:
    dtb::Checkpoint ckpt_;
    dtb::nn::Model<float> model_;
    std::optional<dtb::Standardization> standardization_;
};

} // namespace

PYBIND11_MODULE(_dtb, m) {
    m.doc() = "framewise transcription experiment toolkit (native core)";

    py::register_exception<dtb::Error>(m, "DtbError");

    m.def("version", &dtb::tool_version, "toolkit version string");

    m.def("count_combinations", &py_count_combinations, py::arg("n"), py::arg("k_min"),
          py::arg("k_max"),
          "Exact sum of binomial coefficients C(n, i) for i in [k_min, k_max].");

    m.def("render_combination", &py_render_combination, py::arg("midis"),
          py::arg("duration") = 2.0, py::arg("sample_rate") = 44100.0,
          "Render a simultaneous note combination to float64 samples.");

    m.def("extract_features", &py_extract_features, py::arg("samples"), py::arg("sample_rate"),
          py::arg("fft_size") = 4096, py::arg("hop") = 441, py::arg("n_bins") = 229,
          py::arg("f_min") = 30.0, py::arg("f_max") = 16000.0,
          "Log-compressed filterbank features, one row per frame.");

    m.def("architecture_table", &py_architecture_table, py::arg("name"),
          "Per-layer (label, output dimensions, parameter count) rows.");
    m.def("total_params", &py_total_params, py::arg("name"));

    m.def("nmf_factorize", &py_nmf_factorize, py::arg("x"), py::arg("rank"),
          py::arg("max_iters") = 500, py::arg("tolerance") = 1e-6,
          "Multiplicative-update factorization of a [frames, bins] matrix.");

    m.def("framewise_prf", &py_framewise_prf, py::arg("pred"), py::arg("truth"),
          "Micro-averaged precision/recall/f-measure over roll cells.");

    m.def("combination_stats", &py_combination_stats, py::arg("pred"), py::arg("truth"),
          py::arg("pitch_lo") = 21, py::arg("top_k") = -1, py::arg("min_frames") = 20,
          "Per-combination exact/addition/omission proportions.");

    py::class_<TranscriptionModel>(m, "TranscriptionModel")
        .def(py::init<const std::string&>(), py::arg("checkpoint_path"))
        .def_property_readonly("architecture", &TranscriptionModel::architecture)
        .def("predict", &TranscriptionModel::predict, py::arg("features"),
             py::arg("threshold") = 0.5, py::arg("frame_rate") = 100.0,
             "Binarized piano roll ([frames, pitches] bool) for a feature matrix.");
}
