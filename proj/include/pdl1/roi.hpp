#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "pdl1/slide.hpp"

namespace pdl1::roi {

struct RoiConfig {
    double f_roi = 0.85;             // tiles with near-white fraction strictly below are inside
    double near_white = 5.0;         // distance-to-white cutoff for a near-white pixel
    double outlier_sigma = 3.0;      // |d - mean| > sigma * std marks an outlier pixel
    double artifact_fraction = 0.8;  // tile is an artifact when outliers exceed this fraction
    int structuring_element = 3;     // odd square side, in tiles
    int iterations = 1;
};

/// Mean and population standard deviation of per-pixel distance to white.
struct WhiteStats {
    double mean = 0;
    double std = 0;
    std::uint64_t count = 0;
};

/// Running mean/variance accumulator with an associative merge.
class StatsAccumulator {
public:
    void add(double x);
    void merge(const StatsAccumulator& other);
    WhiteStats stats() const;

private:
    std::uint64_t n_ = 0;
    double mean_ = 0;
    double m2_ = 0;
};

struct TileScore {
    bool is_artifact = false;
    double fraction = 0;  // NaN for artifact tiles
};

struct RoiFloatMask {
    int rows = 0;
    int cols = 0;
    std::vector<TileScore> tiles;
};

struct RoiBinaryMask {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> inside;

    RoiBinaryMask() = default;
    RoiBinaryMask(int r, int c, bool fill = false);

    bool at(int r, int c) const { return inside[static_cast<std::size_t>(r) * cols + c] != 0; }
    std::size_t count() const;
    bool operator==(const RoiBinaryMask&) const = default;
};

using TileDistances = std::vector<double>;

/// Distance to white of every pixel of a downsampled tile.
TileDistances white_distances(const slide::DownTile& tile);

/// First pass: statistics over every pixel of every tile. Throws on no tiles.
WhiteStats compute_white_stats(std::span<const slide::DownTile> tiles);
WhiteStats compute_white_stats(std::span<const TileDistances> distances);

/// Second pass for one tile.
TileScore score_tile(const TileDistances& d, const WhiteStats& stats, const RoiConfig& cfg = {});
TileScore score_tile(const slide::DownTile& tile, const WhiteStats& stats, const RoiConfig& cfg = {});

/// inside = not artifact, not excluded, fraction < f_roi. `excluded` may be
/// empty (no external mask).
RoiBinaryMask binarize(const RoiFloatMask& m, double f_roi, const std::vector<bool>& excluded = {});

/// Cells outside the grid count as outside the ROI. closing() works on a
/// zero-padded canvas so its dilation is not clipped at the grid edge.
RoiBinaryMask dilate(const RoiBinaryMask& m, int se = 3);
RoiBinaryMask erode(const RoiBinaryMask& m, int se = 3);
RoiBinaryMask closing(const RoiBinaryMask& m, int se = 3, int iterations = 1);
RoiBinaryMask opening(const RoiBinaryMask& m, int se = 3, int iterations = 1);
RoiBinaryMask morph_close_open(const RoiBinaryMask& m, int se = 3, int iterations = 1);

struct RoiResult {
    WhiteStats stats;
    RoiFloatMask float_mask;
    RoiBinaryMask pre_morphology;
    RoiBinaryMask mask;  // final; artifact and externally masked tiles forced outside
};

RoiResult identify_roi(std::span<const slide::DownTile> tiles, const slide::TileGrid& grid, const RoiConfig& cfg = {},
                       const std::vector<bool>& excluded = {});
RoiResult identify_roi(const slide::SlideRaster& s, const RoiConfig& cfg = {},
                       const std::optional<slide::GrayImage>& artifact_mask = std::nullopt);

/// Tile-resolution PGM, 255 = inside.
void save_roi_mask(const RoiBinaryMask& m, const std::filesystem::path& path);
RoiBinaryMask load_roi_mask(const std::filesystem::path& path);

/// Text grid, one row per line, space-separated fractions; artifacts as "nan".
void save_float_mask(const RoiFloatMask& m, const std::filesystem::path& path);

}  // namespace pdl1::roi
