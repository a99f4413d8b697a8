#include "pdl1/model_selection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pdl1/binio.hpp"
#include "pdl1/parallel.hpp"
#include "pdl1/random.hpp"

namespace pdl1::clf {

std::string to_string(Family f) { return f == Family::rf ? "rf" : "svm"; }

Family parse_family(std::string_view s)
{
    if (s == "rf") return Family::rf;
    if (s == "svm") return Family::svm;
    throw ConfigError("unknown classifier family '" + std::string(s) + "' (expected rf or svm)");
}

Family family_of(const Hyperparams& h) { return std::holds_alternative<ForestParams>(h) ? Family::rf : Family::svm; }

std::string describe(const Hyperparams& h)
{
    std::ostringstream o;
    if (const auto* p = std::get_if<ForestParams>(&h)) {
        o << "rf trees=" << p->trees << " max_depth=" << (p->max_depth == 0 ? std::string("none") : std::to_string(p->max_depth))
          << " min_leaf=" << p->min_leaf << " max_features=" << p->max_features;
    } else {
        const auto& s = std::get<SvmParams>(h);
        o << "svm c=" << format_real(s.c) << " kernel=" << (s.kernel == KernelType::linear ? "linear" : "rbf");
        if (s.kernel == KernelType::rbf) {
            o << " gamma=";
            switch (s.gamma_rule) {
            case GammaRule::value: o << format_real(s.gamma); break;
            case GammaRule::inverse_dim: o << "inverse_dim"; break;
            case GammaRule::inverse_dim_var: o << "inverse_dim_var"; break;
            }
        }
        o << " standardize=" << (s.standardize ? "true" : "false");
    }
    return o.str();
}

Model train(const LabeledFeatureSet& data, const Hyperparams& h, std::uint64_t seed)
{
    if (const auto* p = std::get_if<ForestParams>(&h)) return rf_train(data, *p, seed);
    return svm_train(data, std::get<SvmParams>(h), seed);
}

Label predict(const Model& m, std::span<const double> x)
{
    return std::visit([&](const auto& model) { return model.predict(x); }, m);
}

// ---- grids ----

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s)
{
    std::vector<std::string> out;
    while (true) {
        const auto pos = s.find(',');
        auto item = trim(s.substr(0, pos));
        if (!item.empty()) out.push_back(std::move(item));
        if (pos == std::string_view::npos) break;
        s.remove_prefix(pos + 1);
    }
    return out;
}

double to_double(const std::string& s, const std::string& key)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("grid: bad number '" + s + "' for " + key);
    }
}

int to_int(const std::string& s, const std::string& key)
{
    const double v = to_double(s, key);
    if (v != std::floor(v) || v < 0) throw ConfigError("grid: '" + s + "' for " + key + " must be a non-negative integer");
    return static_cast<int>(v);
}

bool to_bool(const std::string& s, const std::string& key)
{
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("grid: bad boolean '" + s + "' for " + key);
}

struct GammaChoice {
    GammaRule rule;
    double value;
};

Grid build_rf(const std::vector<int>& trees, const std::vector<int>& depth, const std::vector<int>& min_leaf,
              const std::vector<int>& max_features)
{
    Grid g;
    g.family = Family::rf;
    for (int t : trees)
        for (int d : depth)
            for (int l : min_leaf)
                for (int f : max_features) g.cells.push_back(ForestParams{t, d, l, f});
    return g;
}

Grid build_svm(const std::vector<double>& cs, const std::vector<KernelType>& kernels, const std::vector<GammaChoice>& gammas,
               const std::vector<bool>& standardize)
{
    Grid g;
    g.family = Family::svm;
    for (double c : cs) {
        for (KernelType k : kernels) {
            for (bool st : standardize) {
                if (k == KernelType::linear) {
                    SvmParams p;
                    p.c = c;
                    p.kernel = k;
                    p.standardize = st;
                    g.cells.push_back(p);
                    continue;
                }
                for (const auto& gm : gammas) {
                    SvmParams p;
                    p.c = c;
                    p.kernel = k;
                    p.gamma_rule = gm.rule;
                    p.gamma = gm.value;
                    p.standardize = st;
                    g.cells.push_back(p);
                }
            }
        }
    }
    return g;
}

}  // namespace

Grid default_grid(Family f)
{
    if (f == Family::rf) return build_rf({100, 300}, {0, 8, 16}, {1, 3}, {0});
    return build_svm({0.1, 1, 10, 100}, {KernelType::linear, KernelType::rbf},
                     {{GammaRule::inverse_dim, 0}, {GammaRule::inverse_dim_var, 0}}, {true});
}

Grid parse_grid(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::optional<Family> family;
    std::vector<std::pair<std::string, std::vector<std::string>>> entries;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("grid line " + std::to_string(lineno) + ": expected key = values");
        const std::string key = trim(std::string_view(t).substr(0, eq));
        auto values = split_list(std::string_view(t).substr(eq + 1));
        if (values.empty()) throw ConfigError("grid line " + std::to_string(lineno) + ": no values for " + key);
        if (key == "family") {
            if (values.size() != 1) throw ConfigError("grid: family takes one value");
            family = parse_family(values[0]);
            continue;
        }
        entries.emplace_back(key, std::move(values));
    }
    if (!family) throw ConfigError("grid: missing 'family = rf|svm'");

    if (*family == Family::rf) {
        std::vector<int> trees{100, 300}, depth{0, 8, 16}, min_leaf{1, 3}, max_features{0};
        for (const auto& [key, vals] : entries) {
            std::vector<int> parsed;
            for (const auto& v : vals) parsed.push_back(key == "max_depth" && v == "none" ? 0 : to_int(v, key));
            if (key == "trees") trees = parsed;
            else if (key == "max_depth") depth = parsed;
            else if (key == "min_leaf") min_leaf = parsed;
            else if (key == "max_features") max_features = parsed;
            else throw ConfigError("grid: unknown rf key '" + key + "'");
        }
        for (int t : trees)
            if (t < 1) throw ConfigError("grid: trees must be >= 1");
        for (int l : min_leaf)
            if (l < 1) throw ConfigError("grid: min_leaf must be >= 1");
        return build_rf(trees, depth, min_leaf, max_features);
    }

    std::vector<double> cs{0.1, 1, 10, 100};
    std::vector<KernelType> kernels{KernelType::linear, KernelType::rbf};
    std::vector<GammaChoice> gammas{{GammaRule::inverse_dim, 0}, {GammaRule::inverse_dim_var, 0}};
    std::vector<bool> standardize{true};
    for (const auto& [key, vals] : entries) {
        if (key == "c") {
            cs.clear();
            for (const auto& v : vals) {
                cs.push_back(to_double(v, key));
                if (!(cs.back() > 0)) throw ConfigError("grid: C must be > 0");
            }
        } else if (key == "kernel") {
            kernels.clear();
            for (const auto& v : vals) {
                if (v == "linear") kernels.push_back(KernelType::linear);
                else if (v == "rbf") kernels.push_back(KernelType::rbf);
                else throw ConfigError("grid: unknown kernel '" + v + "'");
            }
        } else if (key == "gamma") {
            gammas.clear();
            for (const auto& v : vals) {
                if (v == "inverse_dim") gammas.push_back({GammaRule::inverse_dim, 0});
                else if (v == "inverse_dim_var") gammas.push_back({GammaRule::inverse_dim_var, 0});
                else {
                    const double gv = to_double(v, key);
                    if (!(gv > 0)) throw ConfigError("grid: gamma must be > 0");
                    gammas.push_back({GammaRule::value, gv});
                }
            }
        } else if (key == "standardize") {
            standardize.clear();
            for (const auto& v : vals) standardize.push_back(to_bool(v, key));
        } else {
            throw ConfigError("grid: unknown svm key '" + key + "'");
        }
    }
    return build_svm(cs, kernels, gammas, standardize);
}

Grid load_grid(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open grid file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_grid(ss.str());
}

// ---- cross-validation ----

std::vector<int> stratified_folds(const LabeledFeatureSet& data, int folds, std::uint64_t seed)
{
    if (folds < 2) throw InputDomainError("stratified_folds: need at least 2 folds");
    if (data.size() < static_cast<std::size_t>(folds)) {
        throw InputDomainError("stratified_folds: " + std::to_string(data.size()) + " rows for " + std::to_string(folds) +
                               " folds");
    }
    Rng rng(derive_seed(seed, "folds"));
    std::vector<int> fold_of(data.size(), -1);
    std::size_t offset = 0;
    for (Label cls : {Label::positive, Label::negative}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (data[i].label == cls) idx.push_back(i);
        }
        rng.shuffle(idx);
        for (std::size_t i : idx) fold_of[i] = static_cast<int>(offset++ % static_cast<std::size_t>(folds));
    }
    return fold_of;
}

std::uint64_t fold_seed(std::uint64_t seed, std::size_t cell, int fold)
{
    return derive_seed(seed, "cell" + std::to_string(cell) + "/fold" + std::to_string(fold));
}

GridSearchResult grid_search_cv(const LabeledFeatureSet& data, const Grid& grid, int folds, std::uint64_t seed)
{
    if (grid.cells.empty()) throw ConfigError("grid_search_cv: empty grid");
    for (const auto& c : grid.cells) {
        if (family_of(c) != grid.family) throw ConfigError("grid_search_cv: mixed families in grid");
    }
    if (data.count(Label::positive) == 0 || data.count(Label::negative) == 0) {
        throw InputDomainError("grid_search_cv: both classes must be present");
    }
    GridSearchResult res;
    auto& rep = res.report;
    rep.family = grid.family;
    rep.folds = folds;
    rep.seed = seed;
    rep.fold_of = stratified_folds(data, folds, seed);

    std::vector<std::vector<std::size_t>> train_idx(static_cast<std::size_t>(folds)), test_idx(train_idx.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (int f = 0; f < folds; ++f) (rep.fold_of[i] == f ? test_idx : train_idx)[f].push_back(i);
    }
    std::vector<LabeledFeatureSet> train_sets, test_sets;
    for (int f = 0; f < folds; ++f) {
        train_sets.push_back(data.subset(train_idx[f]));
        test_sets.push_back(data.subset(test_idx[f]));
        const auto& tr = train_sets.back();
        const auto& te = test_sets.back();
        if (tr.count(Label::positive) == 0 || tr.count(Label::negative) == 0) {
            rep.flags.push_back("fold " + std::to_string(f) + ": training part holds one class; constant predictor used");
        }
        if (te.count(Label::positive) == 0 || te.count(Label::negative) == 0) {
            rep.flags.push_back("fold " + std::to_string(f) + ": held-out part holds one class");
        }
    }

    const std::size_t n_cells = grid.cells.size();
    const auto nf = static_cast<std::size_t>(folds);
    std::vector<double> acc(n_cells * nf);
    parallel_for(n_cells * nf, [&](std::size_t job) {
        const std::size_t cell = job / nf;
        const int f = static_cast<int>(job % nf);
        const auto& tr = train_sets[f];
        const auto& te = test_sets[f];
        std::size_t correct = 0;
        if (tr.count(Label::positive) == 0 || tr.count(Label::negative) == 0) {
            const Label constant = tr.count(Label::positive) > 0 ? Label::positive : Label::negative;
            for (const auto& r : te.rows()) correct += r.label == constant;
        } else {
            const Model m = train(tr, grid.cells[cell], fold_seed(seed, cell, f));
            for (const auto& r : te.rows()) correct += predict(m, r.values) == r.label;
        }
        acc[job] = static_cast<double>(correct) / static_cast<double>(te.size());
    });

    for (std::size_t c = 0; c < n_cells; ++c) {
        CellResult cr;
        cr.params = grid.cells[c];
        cr.fold_accuracy.assign(acc.begin() + static_cast<std::ptrdiff_t>(c * nf),
                                acc.begin() + static_cast<std::ptrdiff_t>((c + 1) * nf));
        double s = 0;
        for (double a : cr.fold_accuracy) s += a;
        cr.mean_accuracy = s / static_cast<double>(nf);
        if (c == 0 || cr.mean_accuracy > rep.cells[rep.chosen].mean_accuracy) rep.chosen = c;
        rep.cells.push_back(std::move(cr));
    }
    res.model = train(data, grid.cells[rep.chosen], derive_seed(seed, "final"));
    return res;
}

// ---- metrics ----

double Metrics::accuracy() const
{
    if (total() == 0) throw InputDomainError("accuracy of an empty test set");
    return static_cast<double>(tp + tn) / static_cast<double>(total());
}

Metrics metrics_from(std::span<const Label> truth, std::span<const Label> predicted)
{
    if (truth.size() != predicted.size()) throw InputDomainError("metrics: size mismatch");
    if (truth.empty()) throw InputDomainError("metrics: empty test set");
    Metrics m;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool t = truth[i] == Label::positive, p = predicted[i] == Label::positive;
        if (t && p) ++m.tp;
        else if (t) ++m.fn;
        else if (p) ++m.fp;
        else ++m.tn;
    }
    return m;
}

Metrics evaluate(const Model& m, const LabeledFeatureSet& test)
{
    std::vector<Label> truth, pred;
    for (const auto& r : test.rows()) {
        truth.push_back(r.label);
        pred.push_back(predict(m, r.values));
    }
    return metrics_from(truth, pred);
}

std::string render_metrics(const Metrics& m)
{
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.2f%% (tp:%zu fn:%zu tn:%zu fp:%zu)", 100.0 * m.accuracy(), m.tp, m.fn, m.tn, m.fp);
    return buf;
}

// ---- model files ----

namespace {

constexpr std::string_view rf_magic{"PDL1RF\0\0", 8};
constexpr std::string_view svm_magic{"PDL1SVM\0", 8};
constexpr std::uint32_t model_version = 1;

void save_rf(const RandomForestModel& m, const std::filesystem::path& path)
{
    binio::Writer w(path);
    w.magic(rf_magic);
    w.u32(model_version);
    w.u32(static_cast<std::uint32_t>(m.params.trees));
    w.u32(static_cast<std::uint32_t>(m.params.max_depth));
    w.u32(static_cast<std::uint32_t>(m.params.min_leaf));
    w.u32(static_cast<std::uint32_t>(m.params.max_features));
    w.u64(m.seed);
    w.u32(static_cast<std::uint32_t>(m.dim));
    w.u32(static_cast<std::uint32_t>(m.trees.size()));
    for (const auto& t : m.trees) {
        w.u32(static_cast<std::uint32_t>(t.nodes.size()));
        for (const auto& n : t.nodes) {
            w.u32(static_cast<std::uint32_t>(n.feature));
            w.f64(n.threshold);
            w.u32(static_cast<std::uint32_t>(n.left));
            w.u32(static_cast<std::uint32_t>(n.right));
            w.u32(n.votes[0]);
            w.u32(n.votes[1]);
        }
    }
    w.close();
}

RandomForestModel load_rf(binio::Reader& r, const std::filesystem::path& path)
{
    RandomForestModel m;
    m.params.trees = static_cast<int>(r.u32());
    m.params.max_depth = static_cast<int>(r.u32());
    m.params.min_leaf = static_cast<int>(r.u32());
    m.params.max_features = static_cast<int>(r.u32());
    m.seed = r.u64();
    m.dim = static_cast<int>(r.u32());
    const std::uint32_t n_trees = r.u32();
    m.trees.resize(n_trees);
    for (auto& t : m.trees) {
        const std::uint32_t n = r.u32();
        if (n == 0) throw FormatError(path.string() + ": empty tree");
        t.nodes.resize(n);
        for (auto& node : t.nodes) {
            node.feature = static_cast<int>(r.u32());
            node.threshold = r.f64();
            node.left = static_cast<int>(r.u32());
            node.right = static_cast<int>(r.u32());
            node.votes = {r.u32(), r.u32()};
        }
        for (const auto& node : t.nodes) {
            if (node.is_leaf()) continue;
            if (node.feature >= m.dim || node.left < 0 || node.right < 0 || node.left >= static_cast<int>(n) ||
                node.right >= static_cast<int>(n) || !std::isfinite(node.threshold)) {
                throw FormatError(path.string() + ": corrupt tree node");
            }
        }
    }
    return m;
}

void save_svm(const SvmModel& m, const std::filesystem::path& path)
{
    binio::Writer w(path);
    w.magic(svm_magic);
    w.u32(model_version);
    w.f64(m.params.c);
    w.u32(static_cast<std::uint32_t>(m.params.kernel));
    w.u32(static_cast<std::uint32_t>(m.params.gamma_rule));
    w.f64(m.params.gamma);
    w.u32(m.params.standardize ? 1 : 0);
    w.f64(m.params.tolerance);
    w.f64(m.gamma);
    w.u32(static_cast<std::uint32_t>(m.dim));
    w.u32(static_cast<std::uint32_t>(m.mean.size()));
    w.f64s(m.mean);
    w.f64s(m.scale);
    w.u32(static_cast<std::uint32_t>(m.dual_coef.size()));
    w.f64s(m.dual_coef);
    w.f64s(m.support_vectors);
    w.f64(m.bias);
    w.close();
}

SvmModel load_svm(binio::Reader& r, const std::filesystem::path& path)
{
    SvmModel m;
    m.params.c = r.f64();
    const auto kernel = r.u32();
    const auto rule = r.u32();
    if (kernel > 1 || rule > 2) throw FormatError(path.string() + ": bad svm kernel");
    m.params.kernel = static_cast<KernelType>(kernel);
    m.params.gamma_rule = static_cast<GammaRule>(rule);
    m.params.gamma = r.f64();
    m.params.standardize = r.u32() != 0;
    m.params.tolerance = r.f64();
    m.gamma = r.f64();
    m.dim = static_cast<int>(r.u32());
    const std::uint32_t n_std = r.u32();
    m.mean = r.f64s(n_std);
    m.scale = r.f64s(n_std);
    const std::uint32_t n_sv = r.u32();
    m.dual_coef = r.f64s(n_sv);
    m.support_vectors = r.f64s(static_cast<std::size_t>(n_sv) * static_cast<std::size_t>(m.dim));
    m.bias = r.f64();
    return m;
}

}  // namespace

void save_model(const Model& m, const std::filesystem::path& path)
{
    if (const auto* rf = std::get_if<RandomForestModel>(&m)) save_rf(*rf, path);
    else save_svm(std::get<SvmModel>(m), path);
}

Model load_model(const std::filesystem::path& path)
{
    std::string head(8, '\0');
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open model " + path.string());
        in.read(head.data(), 8);
        if (in.gcount() != 8) throw FormatError(path.string() + ": truncated model file");
    }
    binio::Reader r(path);
    Model out;
    if (head == rf_magic) {
        r.expect_magic(rf_magic);
        if (r.u32() != model_version) throw FormatError(path.string() + ": unsupported model version");
        out = load_rf(r, path);
    } else if (head == svm_magic) {
        r.expect_magic(svm_magic);
        if (r.u32() != model_version) throw FormatError(path.string() + ": unsupported model version");
        out = load_svm(r, path);
    } else {
        throw FormatError(path.string() + ": not a classifier model file");
    }
    if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes in model file");
    return out;
}

}  // namespace pdl1::clf
