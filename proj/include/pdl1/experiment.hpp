#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pdl1/model_selection.hpp"

namespace pdl1::exp {

enum class Configuration : std::uint8_t { combined, separated };
enum class Representation : std::uint8_t { baseline_hist, ml_hist, avg_embed, clustered_embed };
enum class Classifier : std::uint8_t { baseline, rf, svm };

std::string to_string(Configuration c);
std::string to_string(Representation r);
std::string to_string(Classifier c);

struct ModelSpec {
    Representation representation = Representation::baseline_hist;
    Classifier classifier = Classifier::baseline;

    std::string name() const;
    bool operator==(const ModelSpec&) const = default;
};

/// "ml_hist:rf" and the like. Throws ConfigError on unknown names or a
/// baseline classifier paired with anything but baseline_hist.
ModelSpec parse_model(std::string_view s);

struct ExperimentConfig {
    std::filesystem::path internal_manifest;
    std::optional<std::filesystem::path> external_manifest;
    Configuration configuration = Configuration::separated;
    std::vector<ModelSpec> models{{Representation::baseline_hist, Classifier::baseline}};
    bool use_artifact_masks = true;
    std::uint64_t seed = 0;
    double split_ratio = 0.7;
    double f_roi = 0.85;
    int k = 256;
    double t_op = 90;
    int epochs = 20;
    double lr = 0.001;
    int batch_size = 64;
    int folds = 6;
    std::optional<std::filesystem::path> rf_grid;
    std::optional<std::filesystem::path> svm_grid;

    /// Throws ConfigError on inconsistent values or missing files.
    void validate() const;
    /// Canonical key = value rendering; parse_config(render()) round-trips.
    std::string render() const;
};

/// Experiment file: "key = value" lines, '#' comments. Keys: internal_manifest,
/// external_manifest, configuration, models (comma list), use_artifact_masks,
/// seed, split_ratio, f_roi, k, t_op, epochs, lr, batch_size, folds, rf_grid,
/// svm_grid. Relative paths are resolved against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Slide ids consumed by each training stage.
struct Provenance {
    std::map<std::string, std::set<std::string>> stages;

    void record(const std::string& stage, const std::string& slide_id) { stages[stage].insert(slide_id); }
    /// Throws Error naming the stage and slide when any test slide was consumed.
    void assert_disjoint(const std::set<std::string>& test_ids) const;
};

struct ModelRow {
    std::string model;
    clf::Metrics metrics;
};

struct TestSection {
    std::string name;  // e.g. "Separated test sets - Internal"
    std::vector<std::string> slide_ids;
    std::vector<ModelRow> rows;
};

struct ModelSummary {
    std::string model;
    std::string hyperparameters;
    double cv_accuracy = -1;        // mean CV accuracy of the chosen cell, -1 when not searched
    double training_accuracy = -1;  // baseline only
    std::vector<std::string> flags;
};

struct ExperimentReport {
    std::string configuration;
    std::string config_hash;
    std::uint64_t seed = 0;
    bool use_artifact_masks = true;
    std::vector<std::string> train_ids;
    std::map<std::string, std::uint64_t> stage_seeds;
    std::vector<TestSection> sections;
    std::vector<ModelSummary> models;
    std::map<std::string, std::vector<std::string>> provenance;
    std::map<std::string, double> timing_seconds;  // not part of the rendered report
};

/// Stratified by (label, dataset): the training part gets floor(ratio * n)
/// slides, shared among the strata by largest remainder. Returns the indices
/// of the training slides; the rest form the test set.
std::vector<std::size_t> stratified_split(const std::vector<Label>& labels, const std::vector<DatasetId>& datasets,
                                          double ratio, std::uint64_t seed);

/// Runs the whole protocol and writes the run directory:
///
///     masks/<slide>.pgm        ROI masks
///     features/<repr>.tsv      slide-level features
///     embeddings/<slide>.emb   tile embeddings
///     models/                  cae.bin, clusters.bin, baseline.txt, <repr>_<clf>.bin
///     report.txt, report.json, timing.json, config.txt
ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& run_dir);

/// Rows of "<model> & ACC% (tp:a fn:b tn:c fp:d)" per test set.
std::string render_report(const ExperimentReport& r);

std::string report_to_json(const ExperimentReport& r);
ExperimentReport report_from_json(const std::string& text);

std::string fnv1a_hex(std::string_view data);

}  // namespace pdl1::exp
