#include "pdl1/roi.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include "pdl1/color.hpp"
#include "pdl1/common.hpp"
#include "pdl1/parallel.hpp"

namespace pdl1::roi {

void StatsAccumulator::add(double x)
{
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
}

void StatsAccumulator::merge(const StatsAccumulator& o)
{
    if (o.n_ == 0) return;
    if (n_ == 0) {
        *this = o;
        return;
    }
    const double n = static_cast<double>(n_ + o.n_);
    const double delta = o.mean_ - mean_;
    mean_ += delta * static_cast<double>(o.n_) / n;
    m2_ += o.m2_ + delta * delta * static_cast<double>(n_) * static_cast<double>(o.n_) / n;
    n_ += o.n_;
}

WhiteStats StatsAccumulator::stats() const
{
    WhiteStats s;
    s.count = n_;
    s.mean = mean_;
    s.std = n_ > 0 ? std::sqrt(std::max(0.0, m2_ / static_cast<double>(n_))) : 0.0;
    return s;
}

RoiBinaryMask::RoiBinaryMask(int r, int c, bool fill) : rows(r), cols(c)
{
    inside.assign(static_cast<std::size_t>(r) * c, fill ? 1 : 0);
}

std::size_t RoiBinaryMask::count() const
{
    return static_cast<std::size_t>(std::count(inside.begin(), inside.end(), 1));
}

TileDistances white_distances(const slide::DownTile& tile)
{
    TileDistances d(slide::down_size * slide::down_size);
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = color::distance_to_white(tile[3 * i], tile[3 * i + 1], tile[3 * i + 2]);
    }
    return d;
}

WhiteStats compute_white_stats(std::span<const TileDistances> distances)
{
    if (distances.empty()) throw InputDomainError("compute_white_stats: slide has no tiles");
    std::vector<StatsAccumulator> partial(distances.size());
    parallel_for(distances.size(), [&](std::size_t i) {
        for (double d : distances[i]) partial[i].add(d);
    });
    StatsAccumulator total;
    for (const auto& p : partial) total.merge(p);
    return total.stats();
}

WhiteStats compute_white_stats(std::span<const slide::DownTile> tiles)
{
    if (tiles.empty()) throw InputDomainError("compute_white_stats: slide has no tiles");
    std::vector<TileDistances> d(tiles.size());
    parallel_for(tiles.size(), [&](std::size_t i) { d[i] = white_distances(tiles[i]); });
    return compute_white_stats(d);
}

TileScore score_tile(const TileDistances& d, const WhiteStats& stats, const RoiConfig& cfg)
{
    std::size_t outliers = 0;
    std::size_t near_white = 0;
    const double band = cfg.outlier_sigma * stats.std;
    for (double x : d) {
        // a degenerate band (std == 0) flags nothing
        if (stats.std > 0 && std::abs(x - stats.mean) > band) ++outliers;
        if (x < cfg.near_white) ++near_white;
    }
    const double n = static_cast<double>(d.size());
    TileScore s;
    if (static_cast<double>(outliers) / n > cfg.artifact_fraction) {
        s.is_artifact = true;
        s.fraction = std::numeric_limits<double>::quiet_NaN();
    } else {
        s.fraction = static_cast<double>(near_white) / n;
    }
    return s;
}

TileScore score_tile(const slide::DownTile& tile, const WhiteStats& stats, const RoiConfig& cfg)
{
    return score_tile(white_distances(tile), stats, cfg);
}

RoiBinaryMask binarize(const RoiFloatMask& m, double f_roi, const std::vector<bool>& excluded)
{
    if (!(f_roi >= 0.0 && f_roi <= 1.0)) throw InputDomainError("F_ROI must lie in [0,1]");
    if (!excluded.empty() && excluded.size() != m.tiles.size()) {
        throw InputDomainError("exclusion mask size does not match tile grid");
    }
    RoiBinaryMask out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.tiles.size(); ++i) {
        const auto& t = m.tiles[i];
        const bool ext = !excluded.empty() && excluded[i];
        out.inside[i] = (!t.is_artifact && !ext && t.fraction < f_roi) ? 1 : 0;
    }
    return out;
}

namespace {

RoiBinaryMask morph(const RoiBinaryMask& m, int se, bool dilation)
{
    if (se < 1 || se % 2 == 0) throw InputDomainError("structuring element must be a positive odd size");
    const int r = se / 2;
    RoiBinaryMask out(m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y) {
        for (int x = 0; x < m.cols; ++x) {
            bool v = !dilation;
            for (int dy = -r; dy <= r; ++dy) {
                for (int dx = -r; dx <= r; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    const bool in = yy >= 0 && yy < m.rows && xx >= 0 && xx < m.cols && m.at(yy, xx);
                    if (dilation && in) v = true;
                    if (!dilation && !in) v = false;
                }
            }
            out.inside[static_cast<std::size_t>(y) * m.cols + x] = v ? 1 : 0;
        }
    }
    return out;
}

RoiBinaryMask pad(const RoiBinaryMask& m, int p)
{
    RoiBinaryMask out(m.rows + 2 * p, m.cols + 2 * p);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) out.inside[static_cast<std::size_t>(y + p) * out.cols + x + p] = m.at(y, x);
    return out;
}

RoiBinaryMask crop(const RoiBinaryMask& m, int p)
{
    RoiBinaryMask out(m.rows - 2 * p, m.cols - 2 * p);
    for (int y = 0; y < out.rows; ++y)
        for (int x = 0; x < out.cols; ++x) out.inside[static_cast<std::size_t>(y) * out.cols + x] = m.at(y + p, x + p);
    return out;
}

}  // namespace

RoiBinaryMask dilate(const RoiBinaryMask& m, int se) { return morph(m, se, true); }

RoiBinaryMask erode(const RoiBinaryMask& m, int se) { return morph(m, se, false); }

RoiBinaryMask closing(const RoiBinaryMask& m, int se, int iterations)
{
    // on a canvas wide enough that the dilation is never clipped
    const int p = std::max(0, se / 2) * std::max(0, iterations);
    RoiBinaryMask out = pad(m, p);
    for (int i = 0; i < iterations; ++i) out = dilate(out, se);
    for (int i = 0; i < iterations; ++i) out = erode(out, se);
    return crop(out, p);
}

RoiBinaryMask opening(const RoiBinaryMask& m, int se, int iterations)
{
    RoiBinaryMask out = m;
    for (int i = 0; i < iterations; ++i) out = erode(out, se);
    for (int i = 0; i < iterations; ++i) out = dilate(out, se);
    return out;
}

RoiBinaryMask morph_close_open(const RoiBinaryMask& m, int se, int iterations)
{
    return opening(closing(m, se, iterations), se, iterations);
}

RoiResult identify_roi(std::span<const slide::DownTile> tiles, const slide::TileGrid& grid, const RoiConfig& cfg,
                       const std::vector<bool>& excluded)
{
    if (tiles.size() != static_cast<std::size_t>(grid.count())) {
        throw InputDomainError("identify_roi: tile count does not match grid");
    }
    if (!excluded.empty() && excluded.size() != tiles.size()) {
        throw InputDomainError("identify_roi: exclusion mask does not match grid");
    }
    std::vector<TileDistances> dist(tiles.size());
    parallel_for(tiles.size(), [&](std::size_t i) { dist[i] = white_distances(tiles[i]); });

    RoiResult res;
    res.stats = compute_white_stats(dist);
    res.float_mask.rows = grid.rows;
    res.float_mask.cols = grid.cols;
    res.float_mask.tiles.resize(tiles.size());
    parallel_for(tiles.size(), [&](std::size_t i) { res.float_mask.tiles[i] = score_tile(dist[i], res.stats, cfg); });

    res.pre_morphology = binarize(res.float_mask, cfg.f_roi, excluded);
    res.mask = morph_close_open(res.pre_morphology, cfg.structuring_element, cfg.iterations);
    // closing may refill excluded holes; exclusions always win
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        if (res.float_mask.tiles[i].is_artifact || (!excluded.empty() && excluded[i])) res.mask.inside[i] = 0;
    }
    return res;
}

RoiResult identify_roi(const slide::SlideRaster& s, const RoiConfig& cfg,
                       const std::optional<slide::GrayImage>& artifact_mask)
{
    const auto grid = slide::make_grid(s);
    const auto tiles = slide::downsample_all(s, grid);
    std::vector<bool> excluded;
    if (artifact_mask) excluded = slide::apply_artifact_mask(grid, *artifact_mask);
    return identify_roi(tiles, grid, cfg, excluded);
}

void save_roi_mask(const RoiBinaryMask& m, const std::filesystem::path& path)
{
    slide::GrayImage img(m.cols, m.rows);
    for (std::size_t i = 0; i < m.inside.size(); ++i) img.pixels[i] = m.inside[i] ? 255 : 0;
    slide::save_mask(img, path);
}

RoiBinaryMask load_roi_mask(const std::filesystem::path& path)
{
    const auto img = slide::load_mask(path);
    RoiBinaryMask m(img.height, img.width);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) m.inside[i] = img.pixels[i] != 0 ? 1 : 0;
    return m;
}

void save_float_mask(const RoiFloatMask& m, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) {
            const auto& t = m.tiles[static_cast<std::size_t>(r) * m.cols + c];
            if (c) out << ' ';
            if (t.is_artifact) {
                out << "nan";
            } else {
                char buf[32];
                const auto res = std::to_chars(buf, buf + sizeof buf, t.fraction);
                out.write(buf, res.ptr - buf);
            }
        }
        out << '\n';
    }
}

}  // namespace pdl1::roi
