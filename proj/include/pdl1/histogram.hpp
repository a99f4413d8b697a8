#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pdl1/common.hpp"
#include "pdl1/roi.hpp"
#include "pdl1/slide.hpp"

namespace pdl1::hist {

inline constexpr int num_bins = 100;

/// Bins cover [0, 100) in unit steps; larger distances clamp into the last bin.
using Counts = std::array<std::uint64_t, num_bins>;
using Features = std::array<double, num_bins>;

struct HistogramFeature {
    Counts counts{};
    Features features{};
    std::uint64_t total_pixels = 0;
};

int bin_of(double distance);

/// Brown-distance histogram over every pixel of every ROI tile.
/// Throws EmptyRoiError when the mask selects no tile.
Counts brown_histogram(std::span<const slide::DownTile> tiles, const roi::RoiBinaryMask& mask);

/// features[i] = ln(1 + counts[i]) / ln(1 + total).
Features log_normalize(const Counts& counts);

HistogramFeature featurize(std::span<const slide::DownTile> tiles, const roi::RoiBinaryMask& mask);

struct BaselineThresholds {
    int t_bin = 0;
    double t_cls = 0;
    bool operator==(const BaselineThresholds&) const = default;
};

/// Fraction of histogram mass in bins [0, t_bin].
double baseline_ratio(const Counts& counts, int t_bin);

/// positive iff baseline_ratio > t_cls.
Label baseline_predict(const Counts& counts, const BaselineThresholds& th);

struct BaselineTrainResult {
    BaselineThresholds thresholds;
    double training_accuracy = 0;
};

/// Exhaustive search over t_bin in [0, 99] and t_cls in {0, 1/steps, ..., 1};
/// ties go to the smallest t_bin, then the smallest t_cls.
BaselineTrainResult baseline_train(std::span<const Counts> histograms, std::span<const Label> labels,
                                   int cls_steps = 1000);

/// Text record: "pdl1-baseline <version>\n<t_bin> <t_cls>\n".
void save_baseline(const BaselineThresholds& th, const std::filesystem::path& path);
BaselineThresholds load_baseline(const std::filesystem::path& path);

}  // namespace pdl1::hist
