#include "pdl1/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pdl1/aggregate.hpp"
#include "pdl1/cae.hpp"
#include "pdl1/histogram.hpp"
#include "pdl1/manifest.hpp"
#include "pdl1/parallel.hpp"
#include "pdl1/random.hpp"
#include "pdl1/roi.hpp"
#include "pdl1/slide.hpp"

namespace pdl1::exp {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string to_string(Configuration c) { return c == Configuration::combined ? "combined" : "separated"; }

std::string to_string(Representation r)
{
    switch (r) {
    case Representation::baseline_hist: return "baseline_hist";
    case Representation::ml_hist: return "ml_hist";
    case Representation::avg_embed: return "avg_embed";
    case Representation::clustered_embed: return "clustered_embed";
    }
    return "?";
}

std::string to_string(Classifier c)
{
    switch (c) {
    case Classifier::baseline: return "baseline";
    case Classifier::rf: return "rf";
    case Classifier::svm: return "svm";
    }
    return "?";
}

std::string ModelSpec::name() const { return to_string(representation) + ":" + to_string(classifier); }

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

ModelSpec parse_model(std::string_view s)
{
    const auto colon = s.find(':');
    if (colon == std::string_view::npos) throw ConfigError("model '" + std::string(s) + "' must be representation:classifier");
    const std::string r = trim(s.substr(0, colon)), c = trim(s.substr(colon + 1));
    ModelSpec m;
    if (r == "baseline_hist") m.representation = Representation::baseline_hist;
    else if (r == "ml_hist") m.representation = Representation::ml_hist;
    else if (r == "avg_embed") m.representation = Representation::avg_embed;
    else if (r == "clustered_embed") m.representation = Representation::clustered_embed;
    else throw ConfigError("unknown representation '" + r + "'");
    if (c == "baseline") m.classifier = Classifier::baseline;
    else if (c == "rf") m.classifier = Classifier::rf;
    else if (c == "svm") m.classifier = Classifier::svm;
    else throw ConfigError("unknown classifier '" + c + "'");
    if ((m.classifier == Classifier::baseline) != (m.representation == Representation::baseline_hist)) {
        throw ConfigError("model '" + std::string(s) + "': the baseline classifier goes with baseline_hist only");
    }
    return m;
}

// ---- config ----

void ExperimentConfig::validate() const
{
    auto need = [](const fs::path& p, const std::string& what) {
        if (!fs::exists(p)) throw ConfigError(what + " not found: " + p.string());
    };
    if (internal_manifest.empty()) throw ConfigError("internal_manifest is required");
    need(internal_manifest, "internal_manifest");
    if (external_manifest) need(*external_manifest, "external_manifest");
    if (configuration == Configuration::separated && !external_manifest) {
        throw ConfigError("separated configuration needs external_manifest");
    }
    if (models.empty()) throw ConfigError("no models listed");
    for (std::size_t i = 0; i < models.size(); ++i) {
        if ((models[i].classifier == Classifier::baseline) != (models[i].representation == Representation::baseline_hist)) {
            throw ConfigError("model " + models[i].name() + ": the baseline classifier goes with baseline_hist only");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (models[i] == models[j]) throw ConfigError("model " + models[i].name() + " listed twice");
        }
    }
    if (!(split_ratio > 0 && split_ratio < 1)) throw ConfigError("split_ratio must lie in (0,1)");
    if (!(f_roi > 0 && f_roi <= 1)) throw ConfigError("f_roi must lie in (0,1]");
    if (k < 1) throw ConfigError("k must be >= 1");
    if (!(t_op > 0 && t_op <= 100)) throw ConfigError("t_op must lie in (0,100]");
    if (epochs < 1 || batch_size < 1 || !(lr > 0)) throw ConfigError("epochs, batch_size and lr must be positive");
    if (folds < 2) throw ConfigError("folds must be >= 2");
    if (rf_grid) need(*rf_grid, "rf_grid");
    if (svm_grid) need(*svm_grid, "svm_grid");
}

std::string ExperimentConfig::render() const
{
    std::ostringstream o;
    o << "internal_manifest = " << internal_manifest.string() << '\n';
    if (external_manifest) o << "external_manifest = " << external_manifest->string() << '\n';
    o << "configuration = " << to_string(configuration) << '\n';
    o << "models = ";
    for (std::size_t i = 0; i < models.size(); ++i) o << (i ? ", " : "") << models[i].name();
    o << '\n';
    o << "use_artifact_masks = " << (use_artifact_masks ? "true" : "false") << '\n';
    o << "seed = " << seed << '\n';
    o << "split_ratio = " << format_real(split_ratio) << '\n';
    o << "f_roi = " << format_real(f_roi) << '\n';
    o << "k = " << k << '\n';
    o << "t_op = " << format_real(t_op) << '\n';
    o << "epochs = " << epochs << '\n';
    o << "lr = " << format_real(lr) << '\n';
    o << "batch_size = " << batch_size << '\n';
    o << "folds = " << folds << '\n';
    if (rf_grid) o << "rf_grid = " << rf_grid->string() << '\n';
    if (svm_grid) o << "svm_grid = " << svm_grid->string() << '\n';
    return o.str();
}

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir)
{
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::set<std::string> seen;
    auto path_of = [&](const std::string& v) {
        fs::path p(v);
        return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        const std::string where = "experiment config line " + std::to_string(lineno);
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        const std::string key = trim(std::string_view(t).substr(0, eq));
        const std::string val = trim(std::string_view(t).substr(eq + 1));
        if (!seen.insert(key).second) throw ConfigError(where + ": duplicate key " + key);
        auto number = [&] {
            try {
                std::size_t used = 0;
                const double v = std::stod(val, &used);
                if (used != val.size()) throw std::invalid_argument(val);
                return v;
            } catch (const std::exception&) {
                throw ConfigError(where + ": bad number '" + val + "' for " + key);
            }
        };
        auto integer = [&] {
            const double v = number();
            if (v != std::floor(v)) throw ConfigError(where + ": " + key + " must be an integer");
            return v;
        };
        if (key == "internal_manifest") cfg.internal_manifest = path_of(val);
        else if (key == "external_manifest") cfg.external_manifest = path_of(val);
        else if (key == "configuration") {
            if (val == "combined") cfg.configuration = Configuration::combined;
            else if (val == "separated") cfg.configuration = Configuration::separated;
            else throw ConfigError(where + ": configuration must be combined or separated");
        } else if (key == "models") {
            cfg.models.clear();
            std::string_view rest(val);
            while (true) {
                const auto pos = rest.find(',');
                const std::string item = trim(rest.substr(0, pos));
                if (!item.empty()) cfg.models.push_back(parse_model(item));
                if (pos == std::string_view::npos) break;
                rest.remove_prefix(pos + 1);
            }
        } else if (key == "use_artifact_masks") {
            if (val == "true" || val == "1" || val == "yes") cfg.use_artifact_masks = true;
            else if (val == "false" || val == "0" || val == "no") cfg.use_artifact_masks = false;
            else throw ConfigError(where + ": use_artifact_masks must be true or false");
        } else if (key == "seed") {
            try {
                std::size_t used = 0;
                cfg.seed = std::stoull(val, &used);
                if (used != val.size()) throw std::invalid_argument(val);
            } catch (const std::exception&) {
                throw ConfigError(where + ": bad seed '" + val + "'");
            }
        } else if (key == "split_ratio") cfg.split_ratio = number();
        else if (key == "f_roi") cfg.f_roi = number();
        else if (key == "k") cfg.k = static_cast<int>(integer());
        else if (key == "t_op") cfg.t_op = number();
        else if (key == "epochs") cfg.epochs = static_cast<int>(integer());
        else if (key == "lr") cfg.lr = number();
        else if (key == "batch_size") cfg.batch_size = static_cast<int>(integer());
        else if (key == "folds") cfg.folds = static_cast<int>(integer());
        else if (key == "rf_grid") cfg.rf_grid = path_of(val);
        else if (key == "svm_grid") cfg.svm_grid = path_of(val);
        else throw ConfigError(where + ": unknown key '" + key + "'");
    }
    return cfg;
}

ExperimentConfig load_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open experiment config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

void Provenance::assert_disjoint(const std::set<std::string>& test_ids) const
{
    for (const auto& [stage, ids] : stages) {
        for (const auto& id : ids) {
            if (test_ids.count(id)) throw Error("test-set leakage: stage '" + stage + "' consumed test slide " + id);
        }
    }
}

std::string fnv1a_hex(std::string_view data)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<std::size_t> stratified_split(const std::vector<Label>& labels, const std::vector<DatasetId>& datasets,
                                          double ratio, std::uint64_t seed)
{
    if (labels.size() != datasets.size()) throw InputDomainError("stratified_split: size mismatch");
    if (!(ratio > 0 && ratio < 1)) throw InputDomainError("stratified_split: ratio must lie in (0,1)");
    const std::size_t n = labels.size();
    // strata in fixed order: (positive, internal), (negative, internal), (positive, external), (negative, external)
    std::vector<std::vector<std::size_t>> strata(4);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t s = 2 * static_cast<std::size_t>(datasets[i]) + (labels[i] == Label::positive ? 0 : 1);
        strata[s].push_back(i);
    }
    Rng rng(derive_seed(seed, "split"));
    for (auto& s : strata) rng.shuffle(s);

    const auto total = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
    std::vector<std::size_t> quota(4);
    std::vector<double> remainder(4);
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < 4; ++s) {
        const double exact = ratio * static_cast<double>(strata[s].size());
        quota[s] = static_cast<std::size_t>(std::floor(exact));
        remainder[s] = exact - static_cast<double>(quota[s]);
        assigned += quota[s];
    }
    std::vector<std::size_t> order{0, 1, 2, 3};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < total; k = (k + 1) % 4) {
        const std::size_t s = order[k];
        if (quota[s] < strata[s].size()) {
            ++quota[s];
            ++assigned;
        }
    }
    std::vector<std::size_t> train;
    for (std::size_t s = 0; s < 4; ++s) train.insert(train.end(), strata[s].begin(), strata[s].begin() + quota[s]);
    std::sort(train.begin(), train.end());
    return train;
}

// ---- run ----

namespace {

struct SlideData {
    ManifestEntry entry;
    std::vector<slide::DownTile> tiles;
    roi::RoiBinaryMask mask;
    hist::HistogramFeature hist;
    std::vector<cae::TileEmbedding> embeddings;
};

class Timer {
public:
    explicit Timer(std::map<std::string, double>& sink, std::string name)
        : sink_(sink), name_(std::move(name)), start_(std::chrono::steady_clock::now())
    {
    }
    ~Timer()
    {
        sink_[name_] += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::map<std::string, double>& sink_;
    std::string name_;
    std::chrono::steady_clock::time_point start_;
};

template <typename Fn>
auto stage(const std::string& name, const std::string& slide_id, Fn&& fn)
{
    try {
        return fn();
    } catch (const Error& e) {
        throw Error("stage " + name + (slide_id.empty() ? "" : " (slide " + slide_id + ")") + ": " + e.what());
    }
}

void write_text(const fs::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
    if (!out) throw IoError("write failed: " + p.string());
}

std::vector<ManifestEntry> absolute_entries(const DatasetManifest& m)
{
    std::vector<ManifestEntry> out;
    for (auto e : m.entries) {
        e.path = m.resolve(e.path);
        if (e.artifact_mask) e.artifact_mask = m.resolve(*e.artifact_mask);
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg, const fs::path& run_dir)
{
    cfg.validate();
    ExperimentReport rep;
    rep.configuration = to_string(cfg.configuration);
    rep.seed = cfg.seed;
    rep.use_artifact_masks = cfg.use_artifact_masks;
    const std::string rendered_cfg = cfg.render();
    rep.config_hash = fnv1a_hex(rendered_cfg);
    auto& timing = rep.timing_seconds;

    for (const char* sub : {"masks", "features", "embeddings", "models"}) fs::create_directories(run_dir / sub);
    write_text(run_dir / "config.txt", rendered_cfg);

    auto seed_for = [&](const std::string& name) {
        const std::uint64_t s = derive_seed(cfg.seed, name);
        rep.stage_seeds[name] = s;
        return s;
    };

    // slides and split
    std::vector<SlideData> slides;
    std::vector<std::size_t> train_idx;
    std::vector<std::pair<std::string, std::vector<std::size_t>>> test_sets;
    {
        auto internal = absolute_entries(stage("manifest", "", [&] { return read_manifest(cfg.internal_manifest); }));
        std::vector<ManifestEntry> external;
        if (cfg.external_manifest) {
            external = absolute_entries(stage("manifest", "", [&] { return read_manifest(*cfg.external_manifest); }));
        }
        for (auto& e : internal) e.dataset = DatasetId::internal;
        for (auto& e : external) e.dataset = DatasetId::external;

        std::set<std::string> ids;
        auto add = [&](const ManifestEntry& e) {
            if (!ids.insert(e.slide_id).second) throw ConfigError("slide id " + e.slide_id + " appears in both manifests");
            SlideData s;
            s.entry = e;
            slides.push_back(std::move(s));
        };
        for (const auto& e : internal) add(e);
        const std::uint64_t split_seed = seed_for("split");
        if (cfg.configuration == Configuration::combined) {
            for (const auto& e : external) add(e);
            std::vector<Label> labels;
            std::vector<DatasetId> ds;
            for (const auto& s : slides) {
                labels.push_back(s.entry.label);
                ds.push_back(s.entry.dataset);
            }
            train_idx = stratified_split(labels, ds, cfg.split_ratio, split_seed);
            std::vector<std::size_t> test;
            for (std::size_t i = 0; i < slides.size(); ++i) {
                if (!std::binary_search(train_idx.begin(), train_idx.end(), i)) test.push_back(i);
            }
            test_sets.emplace_back("Combined test set", test);
        } else {
            std::vector<Label> labels;
            std::vector<DatasetId> ds;
            for (const auto& s : slides) {
                labels.push_back(s.entry.label);
                ds.push_back(s.entry.dataset);
            }
            train_idx = stratified_split(labels, ds, cfg.split_ratio, split_seed);
            std::vector<std::size_t> internal_test;
            for (std::size_t i = 0; i < slides.size(); ++i) {
                if (!std::binary_search(train_idx.begin(), train_idx.end(), i)) internal_test.push_back(i);
            }
            const std::size_t first_external = slides.size();
            for (const auto& e : external) add(e);
            std::vector<std::size_t> external_test(slides.size() - first_external);
            std::iota(external_test.begin(), external_test.end(), first_external);
            test_sets.emplace_back("Separated test sets - Internal", internal_test);
            test_sets.emplace_back("Separated test sets - External", external_test);
        }
        for (const auto& [name, idx] : test_sets) {
            if (idx.empty()) throw ConfigError(name + " is empty");
        }
    }
    for (std::size_t i : train_idx) rep.train_ids.push_back(slides[i].entry.slide_id);
    std::set<std::string> test_ids;
    for (const auto& [name, idx] : test_sets)
        for (std::size_t i : idx) test_ids.insert(slides[i].entry.slide_id);

    bool need_hist = false, need_embed = false, need_clusters = false;
    for (const auto& m : cfg.models) {
        need_hist = need_hist || m.representation == Representation::baseline_hist || m.representation == Representation::ml_hist;
        need_embed = need_embed || m.representation == Representation::avg_embed ||
                     m.representation == Representation::clustered_embed;
        need_clusters = need_clusters || m.representation == Representation::clustered_embed;
    }

    // ROI and histograms, independently per slide
    {
        Timer t(timing, "roi");
        roi::RoiConfig rc;
        rc.f_roi = cfg.f_roi;
        parallel_for(slides.size(), [&](std::size_t i) {
            auto& s = slides[i];
            const std::string& id = s.entry.slide_id;
            stage("roi", id, [&] {
                const auto raster = slide::load_slide(s.entry.path);
                const auto grid = slide::make_grid(raster);
                s.tiles = slide::downsample_all(raster, grid);
                std::vector<bool> excluded;
                if (cfg.use_artifact_masks && s.entry.artifact_mask) {
                    excluded = slide::apply_artifact_mask(grid, slide::load_mask(*s.entry.artifact_mask));
                }
                s.mask = roi::identify_roi(s.tiles, grid, rc, excluded).mask;
                roi::save_roi_mask(s.mask, run_dir / "masks" / (id + ".pgm"));
                return 0;
            });
            if (need_hist) s.hist = stage("histogram", id, [&] { return hist::featurize(s.tiles, s.mask); });
        });
    }

    Provenance prov;

    // CAE on the training split only
    std::optional<cae::Cae> net;
    if (need_embed) {
        Timer t(timing, "cae");
        std::vector<slide::DownTile> train_tiles;
        for (std::size_t i : train_idx) {
            const auto& s = slides[i];
            prov.record("cae", s.entry.slide_id);
            for (std::size_t k = 0; k < s.tiles.size(); ++k) {
                if (s.mask.inside[k]) train_tiles.push_back(s.tiles[k]);
            }
        }
        if (train_tiles.empty()) throw Error("stage cae: no ROI tiles in the training split");
        net.emplace(cae::cae_init(seed_for("cae/init")));
        cae::TrainConfig tc;
        tc.lr = cfg.lr;
        tc.epochs = cfg.epochs;
        tc.batch_size = cfg.batch_size;
        tc.seed = seed_for("cae/train");
        const auto tr = stage("cae", "", [&] { return cae::cae_train(*net, train_tiles, tc); });
        cae::save_weights(*net, run_dir / "models" / "cae.bin");
        {
            json j;
            j["epoch_loss"] = tr.epoch_loss;
            j["training_tiles"] = train_tiles.size();
            write_text(run_dir / "models" / "cae_training.json", j.dump(2) + "\n");
        }
        for (auto& s : slides) {
            s.embeddings = stage("embed", s.entry.slide_id, [&] { return cae::encode_roi(*net, s.tiles, s.mask.inside); });
            cae::save_embeddings({s.entry.slide_id, s.embeddings}, run_dir / "embeddings" / (s.entry.slide_id + ".emb"));
        }
    }

    auto points_of = [](const SlideData& s) {
        agg::PointSet p(32);
        for (const auto& e : s.embeddings) p.push_range(e);
        return p;
    };

    std::map<Representation, LabeledFeatureSet> features;
    if (need_hist) {
        LabeledFeatureSet f(hist::num_bins);
        for (const auto& s : slides) {
            f.add({s.entry.slide_id, std::vector<double>(s.hist.features.begin(), s.hist.features.end()), s.entry.label});
        }
        write_features(f, run_dir / "features" / "ml_hist.tsv");
        features[Representation::ml_hist] = std::move(f);
    }
    if (need_embed) {
        LabeledFeatureSet f(32);
        for (const auto& s : slides) f.add({s.entry.slide_id, agg::average_aggregate(points_of(s)), s.entry.label});
        write_features(f, run_dir / "features" / "avg_embed.tsv");
        features[Representation::avg_embed] = std::move(f);
    }
    if (need_clusters) {
        Timer t(timing, "kmeans");
        std::vector<agg::PointSet> train_points;
        std::size_t n_points = 0;
        for (std::size_t i : train_idx) {
            prov.record("kmeans", slides[i].entry.slide_id);
            train_points.push_back(points_of(slides[i]));
            n_points += train_points.back().size();
        }
        if (n_points < static_cast<std::size_t>(cfg.k)) {
            throw ConfigError("stage kmeans: " + std::to_string(n_points) + " training tiles for k = " + std::to_string(cfg.k));
        }
        agg::KMeansConfig kc;
        kc.k = cfg.k;
        kc.seed = seed_for("kmeans");
        const auto model = stage("kmeans", "", [&] { return agg::fit_cluster_model(train_points, kc, cfg.t_op); });
        agg::save_cluster_model(model, run_dir / "models" / "clusters.bin");
        LabeledFeatureSet f(cfg.k + 1);
        for (const auto& s : slides) f.add({s.entry.slide_id, agg::cluster_distribution(points_of(s), model), s.entry.label});
        write_features(f, run_dir / "features" / "clustered_embed.tsv");
        features[Representation::clustered_embed] = std::move(f);
    }

    // classifiers
    for (const auto& [name, idx] : test_sets) {
        TestSection sec;
        sec.name = name;
        for (std::size_t i : idx) sec.slide_ids.push_back(slides[i].entry.slide_id);
        rep.sections.push_back(std::move(sec));
    }
    for (const auto& spec : cfg.models) {
        Timer t(timing, "classifier/" + spec.name());
        const std::string mname = spec.name();
        ModelSummary summary;
        summary.model = mname;
        std::vector<clf::Metrics> per_section;
        if (spec.classifier == Classifier::baseline) {
            std::vector<hist::Counts> h;
            std::vector<Label> l;
            for (std::size_t i : train_idx) {
                prov.record("train/" + mname, slides[i].entry.slide_id);
                h.push_back(slides[i].hist.counts);
                l.push_back(slides[i].entry.label);
            }
            const auto res = stage("train/" + mname, "", [&] { return hist::baseline_train(h, l); });
            hist::save_baseline(res.thresholds, run_dir / "models" / "baseline.txt");
            summary.hyperparameters = "t_bin=" + std::to_string(res.thresholds.t_bin) + " t_cls=" + format_real(res.thresholds.t_cls);
            summary.training_accuracy = res.training_accuracy;
            for (const auto& [name, idx] : test_sets) {
                std::vector<Label> truth, pred;
                for (std::size_t i : idx) {
                    truth.push_back(slides[i].entry.label);
                    pred.push_back(hist::baseline_predict(slides[i].hist.counts, res.thresholds));
                }
                per_section.push_back(clf::metrics_from(truth, pred));
            }
        } else {
            const auto& all = features.at(spec.representation);
            std::vector<std::size_t> tr(train_idx.begin(), train_idx.end());
            for (std::size_t i : train_idx) prov.record("train/" + mname, slides[i].entry.slide_id);
            const auto train_set = all.subset(tr);
            const auto family = spec.classifier == Classifier::rf ? clf::Family::rf : clf::Family::svm;
            const auto& grid_path = family == clf::Family::rf ? cfg.rf_grid : cfg.svm_grid;
            clf::Grid grid = grid_path ? clf::load_grid(*grid_path) : clf::default_grid(family);
            if (grid.family != family) throw ConfigError("grid file for " + mname + " declares the wrong family");
            const auto gs = stage("train/" + mname, "", [&] {
                return clf::grid_search_cv(train_set, grid, cfg.folds, seed_for("classifier/" + mname));
            });
            clf::save_model(gs.model, run_dir / "models" / (to_string(spec.representation) + "_" + to_string(spec.classifier) + ".bin"));
            summary.hyperparameters = clf::describe(gs.report.cells[gs.report.chosen].params);
            summary.cv_accuracy = gs.report.cells[gs.report.chosen].mean_accuracy;
            summary.flags = gs.report.flags;
            for (const auto& [name, idx] : test_sets) per_section.push_back(clf::evaluate(gs.model, all.subset(idx)));
        }
        for (std::size_t s = 0; s < per_section.size(); ++s) rep.sections[s].rows.push_back({mname, per_section[s]});
        rep.models.push_back(std::move(summary));
    }

    prov.assert_disjoint(test_ids);
    for (const auto& [stage_name, ids] : prov.stages) rep.provenance[stage_name] = {ids.begin(), ids.end()};

    write_text(run_dir / "report.txt", render_report(rep));
    write_text(run_dir / "report.json", report_to_json(rep));
    json tj(rep.timing_seconds);
    write_text(run_dir / "timing.json", tj.dump(2) + "\n");
    return rep;
}

std::string render_report(const ExperimentReport& r)
{
    std::ostringstream o;
    o << "configuration: " << r.configuration << '\n';
    o << "config hash: " << r.config_hash << '\n';
    o << "seed: " << r.seed << '\n';
    o << "artifact masks: " << (r.use_artifact_masks ? "on" : "off") << '\n';
    o << "training slides: " << r.train_ids.size() << '\n';
    for (const auto& sec : r.sections) {
        o << '\n' << sec.name << " (" << sec.slide_ids.size() << " slides)\n";
        for (const auto& row : sec.rows) o << row.model << " & " << clf::render_metrics(row.metrics) << '\n';
    }
    o << "\nChosen hyperparameters\n";
    for (const auto& m : r.models) {
        o << m.model << " & " << m.hyperparameters;
        if (m.cv_accuracy >= 0) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.4f", m.cv_accuracy);
            o << " (cv accuracy " << buf << ")";
        }
        if (m.training_accuracy >= 0) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.4f", m.training_accuracy);
            o << " (training accuracy " << buf << ")";
        }
        o << '\n';
        for (const auto& f : m.flags) o << "  note: " << f << '\n';
    }
    return o.str();
}

std::string report_to_json(const ExperimentReport& r)
{
    json j;
    j["configuration"] = r.configuration;
    j["config_hash"] = r.config_hash;
    j["seed"] = r.seed;
    j["use_artifact_masks"] = r.use_artifact_masks;
    j["train_ids"] = r.train_ids;
    j["stage_seeds"] = r.stage_seeds;
    j["sections"] = json::array();
    for (const auto& s : r.sections) {
        json js;
        js["name"] = s.name;
        js["slide_ids"] = s.slide_ids;
        js["rows"] = json::array();
        for (const auto& row : s.rows) {
            js["rows"].push_back({{"model", row.model},
                                  {"tp", row.metrics.tp},
                                  {"fn", row.metrics.fn},
                                  {"tn", row.metrics.tn},
                                  {"fp", row.metrics.fp},
                                  {"accuracy", row.metrics.accuracy()}});
        }
        j["sections"].push_back(std::move(js));
    }
    j["models"] = json::array();
    for (const auto& m : r.models) {
        j["models"].push_back(
            {{"model", m.model}, {"hyperparameters", m.hyperparameters}, {"cv_accuracy", m.cv_accuracy},
             {"training_accuracy", m.training_accuracy},
             {"flags", m.flags}});
    }
    j["provenance"] = r.provenance;
    return j.dump(2) + "\n";
}

ExperimentReport report_from_json(const std::string& text)
{
    ExperimentReport r;
    try {
        const json j = json::parse(text);
        r.configuration = j.at("configuration").get<std::string>();
        r.config_hash = j.at("config_hash").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.use_artifact_masks = j.at("use_artifact_masks").get<bool>();
        r.train_ids = j.at("train_ids").get<std::vector<std::string>>();
        r.stage_seeds = j.at("stage_seeds").get<std::map<std::string, std::uint64_t>>();
        for (const auto& js : j.at("sections")) {
            TestSection s;
            s.name = js.at("name").get<std::string>();
            s.slide_ids = js.at("slide_ids").get<std::vector<std::string>>();
            for (const auto& row : js.at("rows")) {
                clf::Metrics m;
                m.tp = row.at("tp").get<std::size_t>();
                m.fn = row.at("fn").get<std::size_t>();
                m.tn = row.at("tn").get<std::size_t>();
                m.fp = row.at("fp").get<std::size_t>();
                s.rows.push_back({row.at("model").get<std::string>(), m});
            }
            r.sections.push_back(std::move(s));
        }
        for (const auto& jm : j.at("models")) {
            ModelSummary m;
            m.model = jm.at("model").get<std::string>();
            m.hyperparameters = jm.at("hyperparameters").get<std::string>();
            m.cv_accuracy = jm.at("cv_accuracy").get<double>();
            m.training_accuracy = jm.at("training_accuracy").get<double>();
            m.flags = jm.at("flags").get<std::vector<std::string>>();
            r.models.push_back(std::move(m));
        }
        r.provenance = j.at("provenance").get<std::map<std::string, std::vector<std::string>>>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("report json: ") + e.what());
    }
    return r;
}

}  // namespace pdl1::exp
