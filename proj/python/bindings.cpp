#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "pdl1/aggregate.hpp"
#include "pdl1/color.hpp"
#include "pdl1/experiment.hpp"
#include "pdl1/histogram.hpp"
#include "pdl1/model_selection.hpp"
#include "pdl1/parallel.hpp"
#include "pdl1/roi.hpp"
#include "pdl1/synth.hpp"

namespace py = pybind11;
using namespace pdl1;

namespace {

using U8 = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;

slide::SlideRaster raster_from(const U8& a)
{
    if (a.ndim() != 3 || a.shape(2) != 3) throw InputDomainError("expected an (H, W, 3) uint8 array");
    slide::SlideRaster s(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::memcpy(s.pixels.data(), a.data(), s.pixels.size());
    return s;
}

U8 array_from(const slide::SlideRaster& s)
{
    U8 out({s.height, s.width, 3});
    std::memcpy(out.mutable_data(), s.pixels.data(), s.pixels.size());
    return out;
}

U8 array_from(const slide::GrayImage& g)
{
    U8 out({g.height, g.width});
    std::memcpy(out.mutable_data(), g.pixels.data(), g.pixels.size());
    return out;
}

U8 array_from(const roi::RoiBinaryMask& m)
{
    U8 out({m.rows, m.cols});
    std::memcpy(out.mutable_data(), m.inside.data(), m.inside.size());
    return out;
}

roi::RoiBinaryMask mask_from(const U8& a)
{
    if (a.ndim() != 2) throw InputDomainError("expected a 2-d mask");
    roi::RoiBinaryMask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    for (std::size_t i = 0; i < m.inside.size(); ++i) m.inside[i] = a.data()[i] != 0;
    return m;
}

LabeledFeatureSet features_from(const F64& x, const std::vector<int>& y)
{
    if (x.ndim() != 2) throw InputDomainError("expected a 2-d feature matrix");
    if (static_cast<std::size_t>(x.shape(0)) != y.size()) throw InputDomainError("X and y differ in length");
    LabeledFeatureSet set(static_cast<int>(x.shape(1)));
    for (py::ssize_t i = 0; i < x.shape(0); ++i) {
        FeatureRow r;
        r.slide_id = "row" + std::to_string(i);
        r.values.assign(x.data() + i * x.shape(1), x.data() + (i + 1) * x.shape(1));
        r.label = y[i] ? Label::positive : Label::negative;
        set.add(std::move(r));
    }
    return set;
}

agg::PointSet points_from(const F64& x)
{
    if (x.ndim() != 2) throw InputDomainError("expected a 2-d point array");
    agg::PointSet p(static_cast<int>(x.shape(1)));
    p.values.assign(x.data(), x.data() + x.size());
    return p;
}

struct PyClassifier {
    clf::Model model;
    clf::GridSearchReport report;
};

}  // namespace

PYBIND11_MODULE(_pdl1, m)
{
    m.doc() = "PD-L1 whole slide image scoring";
    m.attr("__version__") = "0.1.0";

    py::register_exception<InputDomainError>(m, "InputDomainError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<EmptyRoiError>(m, "EmptyRoiError", PyExc_RuntimeError);
    py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def("set_threads", &set_worker_count, py::arg("n"), "Worker cap; 1 is single-threaded, 0 the default.");

    m.def(
        "srgb_to_lab",
        [](double r, double g, double b) {
            const auto lab = color::srgb_to_lab({r, g, b});
            return py::make_tuple(lab.L, lab.a, lab.b);
        },
        py::arg("r"), py::arg("g"), py::arg("b"));
    m.def(
        "ciede2000",
        [](std::array<double, 3> x, std::array<double, 3> y) {
            return color::ciede2000({x[0], x[1], x[2]}, {y[0], y[1], y[2]});
        },
        py::arg("lab1"), py::arg("lab2"));
    m.def("distance_to_white", [](double r, double g, double b) { return color::distance_to_white(color::Rgb{r, g, b}); });
    m.def("distance_to_brown", [](double r, double g, double b) { return color::distance_to_brown(color::Rgb{r, g, b}); });

    m.def("load_slide", [](const std::filesystem::path& p) { return array_from(slide::load_slide(p)); }, py::arg("path"));
    m.def("save_slide", [](const U8& a, const std::filesystem::path& p) { slide::save_slide(raster_from(a), p); },
          py::arg("pixels"), py::arg("path"));

    m.def(
        "identify_roi",
        [](const U8& pixels, std::optional<U8> artifact_mask, double f_roi) {
            const auto s = raster_from(pixels);
            std::optional<slide::GrayImage> mask;
            if (artifact_mask) {
                if (artifact_mask->ndim() != 2) throw InputDomainError("artifact mask must be 2-d");
                slide::GrayImage g(static_cast<int>(artifact_mask->shape(1)), static_cast<int>(artifact_mask->shape(0)));
                std::memcpy(g.pixels.data(), artifact_mask->data(), g.pixels.size());
                mask = std::move(g);
            }
            roi::RoiConfig cfg;
            cfg.f_roi = f_roi;
            const auto res = roi::identify_roi(s, cfg, mask);
            std::vector<double> fractions;
            for (const auto& t : res.float_mask.tiles) fractions.push_back(t.fraction);
            F64 f({res.float_mask.rows, res.float_mask.cols});
            std::memcpy(f.mutable_data(), fractions.data(), fractions.size() * sizeof(double));
            return py::make_tuple(array_from(res.mask), f);
        },
        py::arg("pixels"), py::arg("artifact_mask") = py::none(), py::arg("f_roi") = 0.85,
        "Returns (tile mask, per-tile near-white fraction; NaN marks artifact tiles).");

    m.def(
        "brown_histogram",
        [](const U8& pixels, const U8& roi_mask) {
            const auto s = raster_from(pixels);
            const auto grid = slide::make_grid(s);
            const auto tiles = slide::downsample_all(s, grid);
            const auto h = hist::featurize(tiles, mask_from(roi_mask));
            return py::make_tuple(std::vector<std::uint64_t>(h.counts.begin(), h.counts.end()),
                                  std::vector<double>(h.features.begin(), h.features.end()));
        },
        py::arg("pixels"), py::arg("roi_mask"), "Returns (counts, log-normalized features).");

    m.def(
        "baseline_train",
        [](const std::vector<std::vector<std::uint64_t>>& counts, const std::vector<int>& labels) {
            std::vector<hist::Counts> h;
            for (const auto& c : counts) {
                if (c.size() != hist::num_bins) throw InputDomainError("each histogram needs 100 bins");
                hist::Counts x{};
                std::copy(c.begin(), c.end(), x.begin());
                h.push_back(x);
            }
            std::vector<Label> l;
            for (int v : labels) l.push_back(v ? Label::positive : Label::negative);
            const auto r = hist::baseline_train(h, l);
            return py::make_tuple(r.thresholds.t_bin, r.thresholds.t_cls, r.training_accuracy);
        },
        py::arg("counts"), py::arg("labels"), "Returns (t_bin, t_cls, training accuracy).");

    m.def(
        "kmeans",
        [](const F64& x, int k, std::uint64_t seed) {
            agg::KMeansConfig cfg;
            cfg.k = k;
            cfg.seed = seed;
            const auto r = agg::kmeans_fit(points_from(x), cfg);
            F64 c({static_cast<py::ssize_t>(r.centroids.size()), static_cast<py::ssize_t>(r.centroids.dim)});
            std::memcpy(c.mutable_data(), r.centroids.values.data(), r.centroids.values.size() * sizeof(double));
            return py::make_tuple(c, r.assignment, r.inertia);
        },
        py::arg("points"), py::arg("k"), py::arg("seed") = 0, "Returns (centroids, assignment, inertia).");

    py::class_<PyClassifier>(m, "Classifier")
        .def("predict",
             [](const PyClassifier& c, const F64& x) {
                 if (x.ndim() != 2) throw InputDomainError("expected a 2-d feature matrix");
                 std::vector<int> out;
                 for (py::ssize_t i = 0; i < x.shape(0); ++i) {
                     out.push_back(clf::predict(c.model, std::span(x.data() + i * x.shape(1), x.shape(1))) ==
                                   Label::positive);
                 }
                 return out;
             })
        .def_property_readonly("chosen", [](const PyClassifier& c) {
            return clf::describe(c.report.cells[c.report.chosen].params);
        })
        .def_property_readonly("cv_accuracy", [](const PyClassifier& c) {
            std::vector<double> out;
            for (const auto& cell : c.report.cells) out.push_back(cell.mean_accuracy);
            return out;
        });

    m.def(
        "train_classifier",
        [](const F64& x, const std::vector<int>& y, const std::string& family, int folds, std::uint64_t seed) {
            const auto data = features_from(x, y);
            auto res = clf::grid_search_cv(data, clf::default_grid(clf::parse_family(family)), folds, seed);
            return PyClassifier{std::move(res.model), std::move(res.report)};
        },
        py::arg("X"), py::arg("y"), py::arg("family") = "rf", py::arg("folds") = 6, py::arg("seed") = 0,
        "Grid search over the default grid by stratified cross-validation, then retrain on all rows.");

    m.def(
        "render_metrics",
        [](std::size_t tp, std::size_t fn, std::size_t tn, std::size_t fp) {
            return clf::render_metrics({tp, fn, tn, fp});
        },
        py::arg("tp"), py::arg("fn"), py::arg("tn"), py::arg("fp"));

    m.def(
        "generate_slide",
        [](std::uint64_t seed, double stain_fraction, int dark_artifacts, int brown_artifacts, bool external) {
            synth::SynthConfig cfg;
            cfg.seed = seed;
            cfg.stain_fraction = stain_fraction;
            cfg.dark_artifacts = dark_artifacts;
            cfg.brown_artifacts = brown_artifacts;
            cfg.palette = external ? synth::Palette::external : synth::Palette::internal;
            const auto s = synth::generate_slide(cfg);
            py::dict truth;
            truth["roi"] = array_from(s.truth.roi);
            truth["tissue"] = array_from(s.truth.tissue);
            truth["artifact_mask"] = array_from(s.truth.artifact_mask);
            truth["label"] = s.truth.label == Label::positive ? 1 : 0;
            truth["stain_pixels"] = s.truth.stain_pixels;
            truth["tissue_pixels"] = s.truth.tissue_pixels;
            truth["dark_artifact_tiles"] = s.truth.dark_artifact_tiles;
            truth["brown_artifact_tiles"] = s.truth.brown_artifact_tiles;
            return py::make_tuple(array_from(s.raster), truth);
        },
        py::arg("seed"), py::arg("stain_fraction") = 0.0, py::arg("dark_artifacts") = 2, py::arg("brown_artifacts") = 0,
        py::arg("external") = false, "Returns (pixels, ground truth dict).");

    m.def(
        "generate_corpus",
        [](int n_pos, int n_neg, const std::string& dataset, std::uint64_t seed, const std::filesystem::path& out,
           double brown_artifact_probability) {
            synth::CorpusSpec spec;
            spec.n_pos = n_pos;
            spec.n_neg = n_neg;
            spec.dataset = parse_dataset_id(dataset);
            spec.seed = seed;
            spec.brown_artifact_probability = brown_artifact_probability;
            return synth::generate_corpus(spec, out).entries.size();
        },
        py::arg("n_pos"), py::arg("n_neg"), py::arg("dataset"), py::arg("seed"), py::arg("out"),
        py::arg("brown_artifact_probability") = 0.0, "Writes slides and manifest.tsv; returns the slide count.");

    m.def(
        "run_experiment",
        [](const std::filesystem::path& config, const std::filesystem::path& run_dir) {
            const auto r = exp::run_experiment(exp::load_config(config), run_dir);
            return exp::render_report(r);
        },
        py::arg("config"), py::arg("run_dir"), "Runs an experiment config file; returns the rendered report.");
}
