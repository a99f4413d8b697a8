#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "pdl1/forest.hpp"
#include "pdl1/svm.hpp"

namespace pdl1::clf {

enum class Family : std::uint8_t { rf, svm };

std::string to_string(Family f);
Family parse_family(std::string_view s);

using Hyperparams = std::variant<ForestParams, SvmParams>;
using Model = std::variant<RandomForestModel, SvmModel>;

Family family_of(const Hyperparams& h);
std::string describe(const Hyperparams& h);

Model train(const LabeledFeatureSet& data, const Hyperparams& h, std::uint64_t seed);
Label predict(const Model& m, std::span<const double> x);

/// Ordered list of grid cells for one family.
struct Grid {
    Family family = Family::rf;
    std::vector<Hyperparams> cells;
};

/// RF: trees {100,300} x depth {none,8,16} x min_leaf {1,3}.
/// SVM: C {0.1,1,10,100} x (linear, rbf 1/d, rbf 1/(d var)).
Grid default_grid(Family f);

/// Grid file, one "key = v1, v2, ..." per line, '#' comments:
///
///     family = rf
///     trees = 100, 300
///     max_depth = none, 8, 16
///     min_leaf = 1, 3
///     max_features = 0
///
///     family = svm
///     c = 0.1, 1, 10, 100
///     kernel = linear, rbf
///     gamma = inverse_dim, inverse_dim_var, 0.05
///     standardize = true
///
/// Keys left out take the default grid's values. Cells are enumerated with the
/// last key varying fastest in the order listed above; a linear kernel ignores
/// gamma and appears once per C.
Grid parse_grid(const std::string& text);
Grid load_grid(const std::filesystem::path& path);

/// Stratified partition: each class is shuffled with the seed and dealt
/// round-robin, continuing across classes. Returns the fold of every row.
std::vector<int> stratified_folds(const LabeledFeatureSet& data, int folds, std::uint64_t seed);

struct CellResult {
    Hyperparams params;
    std::vector<double> fold_accuracy;
    double mean_accuracy = 0;
};

struct GridSearchReport {
    Family family = Family::rf;
    int folds = 6;
    std::uint64_t seed = 0;
    std::vector<int> fold_of;
    std::vector<CellResult> cells;
    std::size_t chosen = 0;
    std::vector<std::string> flags;  // e.g. single-class folds
};

struct GridSearchResult {
    GridSearchReport report;
    Model model;  // chosen cell retrained on all rows
};

/// Seed used to train cell `cell` on the complement of fold `fold`.
std::uint64_t fold_seed(std::uint64_t seed, std::size_t cell, int fold);

/// Exhaustive grid search by stratified k-fold cross-validation. A training
/// fold holding one class is scored with a constant predictor of that class
/// and flagged. The first cell with the highest mean accuracy wins.
GridSearchResult grid_search_cv(const LabeledFeatureSet& data, const Grid& grid, int folds, std::uint64_t seed);

struct Metrics {
    std::size_t tp = 0, fn = 0, tn = 0, fp = 0;

    std::size_t total() const { return tp + fn + tn + fp; }
    double accuracy() const;
    bool operator==(const Metrics&) const = default;
};

Metrics metrics_from(std::span<const Label> truth, std::span<const Label> predicted);
Metrics evaluate(const Model& m, const LabeledFeatureSet& test);

/// "91.67% (tp:4 fn:1 tn:7 fp:0)"
std::string render_metrics(const Metrics& m);

/// Versioned binary: "PDL1RF\0\0" or "PDL1SVM\0", u32 version, payload.
void save_model(const Model& m, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace pdl1::clf
