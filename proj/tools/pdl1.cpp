#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "pdl1/aggregate.hpp"
#include "pdl1/cae.hpp"
#include "pdl1/experiment.hpp"
#include "pdl1/histogram.hpp"
#include "pdl1/manifest.hpp"
#include "pdl1/model_selection.hpp"
#include "pdl1/parallel.hpp"
#include "pdl1/random.hpp"
#include "pdl1/roi.hpp"
#include "pdl1/synth.hpp"

namespace fs = std::filesystem;
using namespace pdl1;

namespace {

struct SlideInput {
    ManifestEntry entry;
    std::vector<slide::DownTile> tiles;
    roi::RoiBinaryMask mask;
};

// Tiles and ROI of every manifest slide; a mask found in masks_dir as
// <slide_id>.pgm is used as is, otherwise the ROI is computed.
std::vector<SlideInput> load_inputs(const fs::path& manifest_path, const std::string& masks_dir, bool use_artifact_masks,
                                    double f_roi)
{
    const auto m = read_manifest(manifest_path);
    std::vector<SlideInput> out(m.entries.size());
    roi::RoiConfig rc;
    rc.f_roi = f_roi;
    parallel_for(out.size(), [&](std::size_t i) {
        auto& s = out[i];
        s.entry = m.entries[i];
        const auto raster = slide::load_slide(m.resolve(s.entry.path));
        const auto grid = slide::make_grid(raster);
        s.tiles = slide::downsample_all(raster, grid);
        const fs::path cached = masks_dir.empty() ? fs::path() : fs::path(masks_dir) / (s.entry.slide_id + ".pgm");
        if (!cached.empty() && fs::exists(cached)) {
            s.mask = roi::load_roi_mask(cached);
            if (s.mask.rows != grid.rows || s.mask.cols != grid.cols) {
                throw FormatError(cached.string() + ": mask does not match the slide's tile grid");
            }
            return;
        }
        std::vector<bool> excluded;
        if (use_artifact_masks && s.entry.artifact_mask) {
            excluded = slide::apply_artifact_mask(grid, slide::load_mask(m.resolve(*s.entry.artifact_mask)));
        }
        s.mask = roi::identify_roi(s.tiles, grid, rc, excluded).mask;
    });
    return out;
}

std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
}

std::vector<Label> labels_of(const LabeledFeatureSet& f)
{
    std::vector<Label> out;
    for (const auto& r : f.rows()) out.push_back(r.label);
    return out;
}

hist::Counts counts_of(const FeatureRow& r)
{
    if (r.values.size() != hist::num_bins) throw InputDomainError("baseline: expected " + std::to_string(hist::num_bins) + " counts");
    hist::Counts c{};
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (r.values[i] < 0 || r.values[i] != std::floor(r.values[i])) {
            throw InputDomainError("baseline: '" + r.slide_id + "' holds non-count values; use featurize-hist --counts");
        }
        c[i] = static_cast<std::uint64_t>(r.values[i]);
    }
    return c;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"PD-L1 whole slide image scoring pipeline"};
    app.require_subcommand(1);
    bool deterministic = false;
    std::size_t threads = 0;
    app.add_flag("--deterministic", deterministic, "single-threaded numerics");
    app.add_option("--threads", threads, "worker cap (default: PDL1_THREADS or all cores)");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus");
    std::string synth_preset, synth_out, synth_dataset = "internal";
    std::uint64_t synth_seed = 0;
    int synth_pos = 0, synth_neg = 0;
    double synth_brown = 0.5;
    synth_cmd->add_option("--preset", synth_preset, "paperlike: internal 20/19 and external 4/21")->check(CLI::IsMember({"paperlike"}));
    synth_cmd->add_option("--out", synth_out)->required();
    synth_cmd->add_option("--seed", synth_seed);
    synth_cmd->add_option("--positives", synth_pos);
    synth_cmd->add_option("--negatives", synth_neg);
    synth_cmd->add_option("--dataset", synth_dataset)->check(CLI::IsMember({"internal", "external"}));
    synth_cmd->add_option("--brown-artifact-probability", synth_brown)->check(CLI::Range(0.0, 1.0));

    // tile
    auto* tile_cmd = app.add_subcommand("tile", "cut a slide into downsampled 64x64 tiles");
    std::string tile_slide, tile_out;
    tile_cmd->add_option("--slide", tile_slide)->required();
    tile_cmd->add_option("--out", tile_out)->required();

    // roi
    auto* roi_cmd = app.add_subcommand("roi", "tile-level region of interest");
    std::string roi_slide, roi_mask, roi_out, roi_float;
    double f_roi = 0.85;
    roi_cmd->add_option("--slide", roi_slide)->required();
    roi_cmd->add_option("--artifact-mask", roi_mask);
    roi_cmd->add_option("--f-roi", f_roi);
    roi_cmd->add_option("--out", roi_out)->required();
    roi_cmd->add_option("--float-out", roi_float);

    // featurize-hist
    auto* fh_cmd = app.add_subcommand("featurize-hist", "distance-to-brown histograms over the ROI");
    std::string fh_manifest, fh_masks, fh_out;
    bool fh_counts = false, fh_no_artifacts = false;
    fh_cmd->add_option("--manifest", fh_manifest)->required();
    fh_cmd->add_option("--masks", fh_masks, "directory of precomputed <slide_id>.pgm ROI masks");
    fh_cmd->add_flag("--counts", fh_counts, "write raw bin counts instead of log-normalized features");
    fh_cmd->add_flag("--no-artifact-masks", fh_no_artifacts);
    fh_cmd->add_option("--f-roi", f_roi);
    fh_cmd->add_option("--out", fh_out)->required();

    // baseline
    auto* tb_cmd = app.add_subcommand("train-baseline", "grid search of the histogram thresholds");
    std::string tb_counts, tb_out;
    tb_cmd->add_option("--counts", tb_counts, "feature file written with featurize-hist --counts")->required();
    tb_cmd->add_option("--out", tb_out)->required();
    auto* pb_cmd = app.add_subcommand("predict-baseline", "apply the histogram thresholds");
    std::string pb_model, pb_counts, pb_report;
    pb_cmd->add_option("--model", pb_model)->required();
    pb_cmd->add_option("--counts", pb_counts)->required();
    pb_cmd->add_option("--report", pb_report);

    // cae
    auto* tc_cmd = app.add_subcommand("train-cae", "train the convolutional autoencoder on ROI tiles");
    std::string tc_manifest, tc_masks, tc_out;
    cae::TrainConfig tc;
    tc_cmd->add_option("--manifest", tc_manifest)->required();
    tc_cmd->add_option("--masks", tc_masks);
    tc_cmd->add_option("--epochs", tc.epochs);
    tc_cmd->add_option("--lr", tc.lr);
    tc_cmd->add_option("--batch-size", tc.batch_size);
    tc_cmd->add_option("--seed", tc.seed);
    tc_cmd->add_option("--out", tc_out)->required();

    auto* em_cmd = app.add_subcommand("embed", "encode every ROI tile");
    std::string em_model, em_manifest, em_masks, em_out;
    em_cmd->add_option("--model", em_model)->required();
    em_cmd->add_option("--manifest", em_manifest)->required();
    em_cmd->add_option("--masks", em_masks);
    em_cmd->add_option("--out", em_out, "directory for <slide_id>.emb files")->required();

    auto* ag_cmd = app.add_subcommand("aggregate", "slide-level features from tile embeddings");
    std::string ag_manifest, ag_embeddings, ag_method = "avg", ag_clusters, ag_out;
    bool ag_fit = false;
    agg::KMeansConfig kc;
    double t_op = 90;
    ag_cmd->add_option("--manifest", ag_manifest)->required();
    ag_cmd->add_option("--embeddings", ag_embeddings)->required();
    ag_cmd->add_option("--method", ag_method)->check(CLI::IsMember({"avg", "clustered"}));
    ag_cmd->add_option("--clusters", ag_clusters, "cluster model file (read, or written with --fit)");
    ag_cmd->add_flag("--fit", ag_fit, "fit the cluster model on this manifest's slides");
    ag_cmd->add_option("--k", kc.k);
    ag_cmd->add_option("--t-op", t_op);
    ag_cmd->add_option("--seed", kc.seed);
    ag_cmd->add_option("--out", ag_out)->required();

    // classifiers
    auto* tclf_cmd = app.add_subcommand("train-clf", "grid search by cross-validation and retrain");
    std::string tclf_features, tclf_family = "rf", tclf_grid, tclf_out, tclf_cv;
    int folds = 6;
    std::uint64_t clf_seed = 0;
    tclf_cmd->add_option("--features", tclf_features)->required();
    tclf_cmd->add_option("--family", tclf_family)->check(CLI::IsMember({"rf", "svm"}));
    tclf_cmd->add_option("--grid", tclf_grid);
    tclf_cmd->add_option("--folds", folds);
    tclf_cmd->add_option("--seed", clf_seed);
    tclf_cmd->add_option("--out", tclf_out)->required();
    tclf_cmd->add_option("--cv-report", tclf_cv);

    auto* cl_cmd = app.add_subcommand("classify", "evaluate a classifier on a feature file");
    std::string cl_model, cl_features, cl_report;
    cl_cmd->add_option("--model", cl_model)->required();
    cl_cmd->add_option("--features", cl_features)->required();
    cl_cmd->add_option("--report", cl_report);

    // harness
    auto* ex_cmd = app.add_subcommand("experiment", "run a full experiment from a config file");
    std::string ex_config, ex_out;
    ex_cmd->add_option("--config", ex_config)->required();
    ex_cmd->add_option("--out", ex_out, "run directory")->required();
    auto* rp_cmd = app.add_subcommand("report", "render report.txt from a run directory");
    std::string rp_run, rp_out;
    rp_cmd->add_option("--run", rp_run)->required();
    rp_cmd->add_option("--out", rp_out);

    CLI11_PARSE(app, argc, argv);
    set_worker_count(deterministic ? 1 : threads);

    try {
        if (*synth_cmd) {
            if (synth_preset == "paperlike") {
                synth::generate_paperlike(synth_out, synth_seed, synth_brown);
                std::cout << "wrote " << synth_out << "/internal and " << synth_out << "/external\n";
            } else {
                synth::CorpusSpec spec;
                spec.n_pos = synth_pos;
                spec.n_neg = synth_neg;
                spec.dataset = parse_dataset_id(synth_dataset);
                spec.seed = synth_seed;
                spec.brown_artifact_probability = synth_brown;
                const auto m = synth::generate_corpus(spec, synth_out);
                std::cout << "wrote " << m.entries.size() << " slides to " << synth_out << "\n";
            }
        } else if (*tile_cmd) {
            const auto s = slide::load_slide(tile_slide);
            const auto grid = slide::make_grid(s);
            const auto tiles = slide::downsample_all(s, grid);
            fs::create_directories(tile_out);
            for (int i = 0; i < grid.count(); ++i) {
                const auto t = grid.tile(i);
                slide::SlideRaster r(slide::down_size, slide::down_size);
                std::copy(tiles[i].begin(), tiles[i].end(), r.pixels.begin());
                char name[64];
                std::snprintf(name, sizeof name, "_r%02d_c%02d.ppm", t.row, t.col);
                slide::save_slide(r, fs::path(tile_out) / (s.slide_id + name));
            }
            std::cout << grid.rows << "x" << grid.cols << " tiles\n";
        } else if (*roi_cmd) {
            const auto s = slide::load_slide(roi_slide);
            std::optional<slide::GrayImage> mask;
            if (!roi_mask.empty()) mask = slide::load_mask(roi_mask);
            roi::RoiConfig rc;
            rc.f_roi = f_roi;
            const auto res = roi::identify_roi(s, rc, mask);
            roi::save_roi_mask(res.mask, roi_out);
            if (!roi_float.empty()) roi::save_float_mask(res.float_mask, roi_float);
            std::size_t artifacts = 0;
            for (const auto& t : res.float_mask.tiles) artifacts += t.is_artifact;
            std::cout << res.mask.count() << " of " << res.mask.inside.size() << " tiles inside, " << artifacts
                      << " artifact tiles\n";
        } else if (*fh_cmd) {
            const auto inputs = load_inputs(fh_manifest, fh_masks, !fh_no_artifacts, f_roi);
            LabeledFeatureSet out(hist::num_bins);
            for (const auto& s : inputs) {
                const auto h = hist::featurize(s.tiles, s.mask);
                std::vector<double> v(hist::num_bins);
                for (int i = 0; i < hist::num_bins; ++i) v[i] = fh_counts ? static_cast<double>(h.counts[i]) : h.features[i];
                out.add({s.entry.slide_id, std::move(v), s.entry.label});
            }
            write_features(out, fh_out);
        } else if (*tb_cmd) {
            const auto f = read_features(tb_counts);
            std::vector<hist::Counts> h;
            for (const auto& r : f.rows()) h.push_back(counts_of(r));
            const auto labels = labels_of(f);
            const auto res = hist::baseline_train(h, labels);
            hist::save_baseline(res.thresholds, tb_out);
            std::cout << "t_bin " << res.thresholds.t_bin << " t_cls " << format_real(res.thresholds.t_cls)
                      << " training accuracy " << res.training_accuracy << "\n";
        } else if (*pb_cmd) {
            const auto th = hist::load_baseline(pb_model);
            const auto f = read_features(pb_counts);
            std::vector<Label> pred;
            for (const auto& r : f.rows()) {
                pred.push_back(hist::baseline_predict(counts_of(r), th));
                std::cout << r.slide_id << '\t' << to_string(pred.back()) << '\n';
            }
            const auto line = "baseline_hist:baseline & " + clf::render_metrics(clf::metrics_from(labels_of(f), pred)) + "\n";
            std::cout << line;
            if (!pb_report.empty()) write_file(pb_report, line);
        } else if (*tc_cmd) {
            const auto inputs = load_inputs(tc_manifest, tc_masks, true, f_roi);
            std::vector<slide::DownTile> tiles;
            for (const auto& s : inputs)
                for (std::size_t k = 0; k < s.tiles.size(); ++k)
                    if (s.mask.inside[k]) tiles.push_back(s.tiles[k]);
            auto net = cae::cae_init(derive_seed(tc.seed, "cae/init"));
            cae::cae_train(net, tiles, tc, [](int epoch, double loss) {
                std::cout << "epoch " << epoch << " loss " << loss << std::endl;
            });
            cae::save_weights(net, tc_out);
        } else if (*em_cmd) {
            auto net = cae::load_weights(em_model);
            const auto inputs = load_inputs(em_manifest, em_masks, true, f_roi);
            fs::create_directories(em_out);
            for (const auto& s : inputs) {
                cae::save_embeddings({s.entry.slide_id, cae::encode_roi(net, s.tiles, s.mask.inside)},
                                     fs::path(em_out) / (s.entry.slide_id + ".emb"));
            }
        } else if (*ag_cmd) {
            const auto m = read_manifest(ag_manifest);
            std::vector<agg::PointSet> points;
            for (const auto& e : m.entries) {
                const auto emb = cae::load_embeddings(fs::path(ag_embeddings) / (e.slide_id + ".emb"));
                agg::PointSet p(32);
                for (const auto& t : emb.tiles) p.push_range(t);
                points.push_back(std::move(p));
            }
            LabeledFeatureSet out;
            if (ag_method == "avg") {
                for (std::size_t i = 0; i < points.size(); ++i) {
                    out.add({m.entries[i].slide_id, agg::average_aggregate(points[i]), m.entries[i].label});
                }
            } else {
                if (ag_clusters.empty()) throw ConfigError("--method clustered needs --clusters");
                agg::ClusterModel model;
                if (ag_fit) {
                    model = agg::fit_cluster_model(points, kc, t_op);
                    agg::save_cluster_model(model, ag_clusters);
                } else {
                    model = agg::load_cluster_model(ag_clusters);
                }
                for (std::size_t i = 0; i < points.size(); ++i) {
                    out.add({m.entries[i].slide_id, agg::cluster_distribution(points[i], model), m.entries[i].label});
                }
            }
            write_features(out, ag_out);
        } else if (*tclf_cmd) {
            const auto f = read_features(tclf_features);
            const auto family = clf::parse_family(tclf_family);
            const auto grid = tclf_grid.empty() ? clf::default_grid(family) : clf::load_grid(tclf_grid);
            if (grid.family != family) throw ConfigError("grid file declares family " + clf::to_string(grid.family));
            const auto res = clf::grid_search_cv(f, grid, folds, clf_seed);
            clf::save_model(res.model, tclf_out);
            std::ostringstream o;
            for (std::size_t c = 0; c < res.report.cells.size(); ++c) {
                const auto& cell = res.report.cells[c];
                char acc[32];
                std::snprintf(acc, sizeof acc, "%.4f", cell.mean_accuracy);
                o << (c == res.report.chosen ? "* " : "  ") << acc << "  " << clf::describe(cell.params) << '\n';
            }
            for (const auto& flag : res.report.flags) o << "note: " << flag << '\n';
            std::cout << o.str();
            if (!tclf_cv.empty()) write_file(tclf_cv, o.str());
        } else if (*cl_cmd) {
            const auto model = clf::load_model(cl_model);
            const auto f = read_features(cl_features);
            const auto line = "model & " + clf::render_metrics(clf::evaluate(model, f)) + "\n";
            std::cout << line;
            if (!cl_report.empty()) write_file(cl_report, line);
        } else if (*ex_cmd) {
            const auto cfg = exp::load_config(ex_config);
            const auto rep = exp::run_experiment(cfg, ex_out);
            std::cout << exp::render_report(rep);
        } else if (*rp_cmd) {
            const auto rep = exp::report_from_json(read_file(fs::path(rp_run) / "report.json"));
            const auto text = exp::render_report(rep);
            if (rp_out.empty()) std::cout << text;
            else write_file(rp_out, text);
        }
    } catch (const std::exception& e) {
        std::cerr << "pdl1: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
