#include "pdl1/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "pdl1/color.hpp"
#include "pdl1/parallel.hpp"
#include "pdl1/random.hpp"

namespace pdl1::synth {

namespace {

using Color = std::array<std::uint8_t, 3>;

std::uint8_t clamp8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

// Colors drawn around the centers with +-spread per channel, kept when
// accept(color) holds.
template <typename Accept>
std::vector<Color> build_palette(Rng& rng, std::span<const Color> centers, int spread, std::size_t size, Accept accept)
{
    std::vector<Color> out;
    for (std::size_t attempt = 0; out.size() < size; ++attempt) {
        if (attempt > 100000) throw InputDomainError("synth: palette constraints cannot be met");
        const Color& c = centers[rng.below(centers.size())];
        Color p;
        for (int k = 0; k < 3; ++k) p[k] = clamp8(c[k] + rng.uniform(-spread, spread));
        if (accept(p)) out.push_back(p);
    }
    return out;
}

double dw(const Color& c) { return color::distance_to_white(c[0], c[1], c[2]); }
double db(const Color& c) { return color::distance_to_brown(c[0], c[1], c[2]); }

struct Palettes {
    std::vector<Color> background, tissue, brown, dark;
};

Palettes make_palettes(Rng& rng, const SynthConfig& cfg)
{
    Palettes p;
    const Color white{238, 238, 238};
    p.background = build_palette(rng, std::span(&white, 1), cfg.background_jitter, 16,
                                 [](const Color& c) { return dw(c) < 4.0; });
    static constexpr std::array<Color, 3> internal{{{214, 178, 206}, {205, 170, 200}, {222, 190, 208}}};
    static constexpr std::array<Color, 3> external{{{218, 186, 196}, {210, 180, 190}, {224, 194, 200}}};
    p.tissue = build_palette(rng, cfg.palette == Palette::internal ? std::span(internal) : std::span(external), 8, 32,
                             [](const Color& c) { return dw(c) >= 12.0 && db(c) > 25.0; });
    const Color brown{117, 89, 67};
    p.brown = build_palette(rng, std::span(&brown, 1), 4, 16, [](const Color& c) { return db(c) <= 4.0; });
    const Color dark{18, 16, 20};
    p.dark = build_palette(rng, std::span(&dark, 1), 8, 16, [](const Color& c) { return dw(c) > 80.0; });
    return p;
}

struct Canvas {
    slide::SlideRaster& raster;
    Rng& rng;

    void paint(int x, int y, const std::vector<Color>& pal)
    {
        const Color& c = pal[rng.below(pal.size())];
        raster.set(x, y, c[0], c[1], c[2]);
    }
};

bool inside_shape(const Shape& s, int x, int y)
{
    if (x < s.x || y < s.y || x >= s.x + s.width || y >= s.y + s.height) return false;
    if (s.kind == Shape::Kind::rectangle) return true;
    const double rx = s.width / 2.0, ry = s.height / 2.0;
    const double u = (x + 0.5 - s.x - rx) / rx, v = (y + 0.5 - s.y - ry) / ry;
    return u * u + v * v <= 1.0;
}

struct TileBox {
    int r0, c0, r1, c1;  // inclusive tile range
};

// One rectangle of 3..5 tiles a side, plus an overlapping second one half the time.
std::vector<TileBox> random_tissue(Rng& rng, int rows, int cols)
{
    auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); };
    std::vector<TileBox> boxes;
    const int h = std::min(rows, pick(3, 5)), w = std::min(cols, pick(3, 5));
    const int r0 = pick(0, rows - h), c0 = pick(0, cols - w);
    boxes.push_back({r0, c0, r0 + h - 1, c0 + w - 1});
    if (rng.uniform() < 0.5) {
        const int h2 = std::min(rows, pick(3, 4)), w2 = std::min(cols, pick(3, 4));
        // anchor a tile of the first box inside the second so they overlap
        const int ar = pick(r0, r0 + h - 1), ac = pick(c0, c0 + w - 1);
        const int rr = std::clamp(ar - pick(0, h2 - 1), 0, rows - h2);
        const int cc = std::clamp(ac - pick(0, w2 - 1), 0, cols - w2);
        boxes.push_back({rr, cc, rr + h2 - 1, cc + w2 - 1});
    }
    return boxes;
}

}  // namespace

Label label_for(std::size_t stain_pixels, std::size_t tissue_pixels)
{
    return tissue_pixels > 0 && 100 * stain_pixels >= tissue_pixels ? Label::positive : Label::negative;
}

SynthSlide generate_slide(const SynthConfig& cfg, const std::string& slide_id)
{
    if (cfg.width < 1 || cfg.height < 1 || cfg.tile_size < 64 || cfg.tile_size % 64 != 0) {
        throw InputDomainError("synth: bad canvas or tile size");
    }
    if (!(cfg.stain_fraction >= 0 && cfg.stain_fraction <= 1)) throw InputDomainError("synth: stain_fraction outside [0,1]");
    if (cfg.dark_artifacts < 0 || cfg.brown_artifacts < 0) throw InputDomainError("synth: negative artifact count");
    if (cfg.stain_blob_min_radius < 1 || cfg.stain_blob_max_radius < cfg.stain_blob_min_radius) {
        throw InputDomainError("synth: bad stain blob radii");
    }
    if (cfg.brown_patch_min < 1 || cfg.brown_patch_max < cfg.brown_patch_min || cfg.brown_patch_max > cfg.tile_size) {
        throw InputDomainError("synth: bad brown patch size");
    }
    for (const auto& s : cfg.tissue) {
        if (s.width < 1 || s.height < 1 || s.x < 0 || s.y < 0 || s.x + s.width > cfg.width || s.y + s.height > cfg.height) {
            throw InputDomainError("synth: tissue shape does not fit the canvas");
        }
    }

    Rng rng(derive_seed(cfg.seed, "synth/" + slide_id));
    const Palettes pal = make_palettes(rng, cfg);
    const auto grid = slide::make_grid(cfg.width, cfg.height, cfg.tile_size);
    const int ts = cfg.tile_size;

    SynthSlide out;
    out.raster = slide::SlideRaster(cfg.width, cfg.height, slide_id);
    auto& truth = out.truth;
    truth.tissue = slide::GrayImage(cfg.width, cfg.height, 0);
    truth.artifact_mask = slide::GrayImage(cfg.width, cfg.height, 0);
    Canvas canvas{out.raster, rng};

    // tissue shapes
    std::vector<Shape> shapes = cfg.tissue;
    std::vector<std::uint8_t> tissue_tile(static_cast<std::size_t>(grid.count()), 0);
    if (shapes.empty()) {
        for (const auto& b : random_tissue(rng, grid.rows, grid.cols)) {
            auto jit = [&] { return static_cast<int>(rng.below(2 * cfg.edge_jitter + 1)) - cfg.edge_jitter; };
            const int x0 = std::clamp(b.c0 * ts + jit(), 0, cfg.width);
            const int y0 = std::clamp(b.r0 * ts + jit(), 0, cfg.height);
            const int x1 = std::clamp((b.c1 + 1) * ts + jit(), 0, cfg.width);
            const int y1 = std::clamp((b.r1 + 1) * ts + jit(), 0, cfg.height);
            shapes.push_back({Shape::Kind::rectangle, x0, y0, x1 - x0, y1 - y0});
            for (int r = b.r0; r <= b.r1; ++r)
                for (int c = b.c0; c <= b.c1; ++c) tissue_tile[grid.index(r, c)] = 1;
        }
    }
    for (int y = 0; y < cfg.height; ++y) {
        for (int x = 0; x < cfg.width; ++x) {
            bool t = false;
            for (const auto& s : shapes) t = t || inside_shape(s, x, y);
            if (t) {
                truth.tissue.at(x, y) = 255;
                ++truth.tissue_pixels;
                canvas.paint(x, y, pal.tissue);
            } else {
                canvas.paint(x, y, pal.background);
            }
        }
    }

    // tile coverage
    std::vector<double> coverage(static_cast<std::size_t>(grid.count()), 0.0);
    for (int i = 0; i < grid.count(); ++i) {
        const auto t = grid.tile(i);
        std::size_t n = 0;
        for (int y = t.y; y < t.y + t.height; ++y)
            for (int x = t.x; x < t.x + t.width; ++x) n += truth.tissue.at(x, y) != 0;
        coverage[i] = static_cast<double>(n) / (static_cast<double>(ts) * ts);
        tissue_tile[i] = coverage[i] >= 0.5;
    }

    // stain: blobs of base_brown-like pixels until exactly the target count
    const auto target = static_cast<std::size_t>(std::llround(cfg.stain_fraction * static_cast<double>(truth.tissue_pixels)));
    if (target > truth.tissue_pixels) throw InputDomainError("synth: stain exceeds tissue");
    std::vector<std::uint8_t> stained(static_cast<std::size_t>(cfg.width) * cfg.height, 0);
    if (target > 0) {
        std::vector<std::pair<int, int>> tissue_px;
        tissue_px.reserve(truth.tissue_pixels);
        for (int y = 0; y < cfg.height; ++y)
            for (int x = 0; x < cfg.width; ++x)
                if (truth.tissue.at(x, y)) tissue_px.emplace_back(x, y);
        std::size_t painted = 0;
        std::size_t guard = 0;
        while (painted < target) {
            if (++guard > 10 * target + 1000) throw InputDomainError("synth: cannot place stain");
            const auto [cx, cy] = tissue_px[rng.below(tissue_px.size())];
            const int rad = cfg.stain_blob_min_radius +
                            static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.stain_blob_max_radius - cfg.stain_blob_min_radius + 1)));
            for (int y = std::max(0, cy - rad); y <= std::min(cfg.height - 1, cy + rad) && painted < target; ++y) {
                for (int x = std::max(0, cx - rad); x <= std::min(cfg.width - 1, cx + rad) && painted < target; ++x) {
                    const int dx = x - cx, dy = y - cy;
                    if (dx * dx + dy * dy > rad * rad) continue;
                    const std::size_t k = static_cast<std::size_t>(y) * cfg.width + x;
                    if (!truth.tissue.at(x, y) || stained[k]) continue;
                    stained[k] = 1;
                    ++painted;
                    canvas.paint(x, y, pal.brown);
                }
            }
        }
        truth.stain_pixels = painted;
    }
    truth.label = label_for(truth.stain_pixels, truth.tissue_pixels);

    auto chebyshev_to_tissue = [&](int r, int c) {
        int best = 1 << 20;
        for (int i = 0; i < grid.count(); ++i) {
            if (!tissue_tile[i] && coverage[i] == 0) continue;
            const auto t = grid.tile(i);
            best = std::min(best, std::max(std::abs(t.row - r), std::abs(t.col - c)));
        }
        return best;
    };
    std::vector<std::uint8_t> used(static_cast<std::size_t>(grid.count()), 0);
    for (int i = 0; i < grid.count(); ++i) used[i] = tissue_tile[i];

    // brown artifacts: a strip of tiles running along one side of the tissue
    if (cfg.brown_artifacts > 0) {
        struct Strip {
            std::vector<int> tiles;
        };
        std::vector<Strip> options;
        // the longest strip that fits, up to the requested length
        for (int len = cfg.brown_artifacts; len > 0 && options.empty(); --len) {
            for (int r = 0; r < grid.rows; ++r) {
                for (int c = 0; c < grid.cols; ++c) {
                    for (int dir = 0; dir < 2; ++dir) {  // 0 horizontal, 1 vertical
                        for (int side : {-1, 1}) {
                            Strip s;
                            bool ok = true;
                            for (int k = 0; k < len && ok; ++k) {
                                const int rr = dir ? r + k : r, cc = dir ? c : c + k;
                                const int tr = dir ? rr : rr + side, tc = dir ? cc + side : cc;
                                ok = rr < grid.rows && cc < grid.cols && tr >= 0 && tc >= 0 && tr < grid.rows &&
                                     tc < grid.cols && !used[grid.index(rr, cc)] && tissue_tile[grid.index(tr, tc)];
                                if (ok) s.tiles.push_back(grid.index(rr, cc));
                            }
                            if (ok) options.push_back(std::move(s));
                        }
                    }
                }
            }
        }
        if (!options.empty()) {
            const auto& strip = options[rng.below(options.size())];
            for (int idx : strip.tiles) {
                used[idx] = 1;
                truth.brown_artifact_tiles.push_back(idx);
                const auto t = grid.tile(idx);
                const int size = cfg.brown_patch_min +
                                 static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.brown_patch_max - cfg.brown_patch_min + 1)));
                const int w = std::min(size, t.width), h = std::min(size, t.height);
                const int px = t.x + static_cast<int>(rng.below(static_cast<std::uint64_t>(t.width - w + 1)));
                const int py = t.y + static_cast<int>(rng.below(static_cast<std::uint64_t>(t.height - h + 1)));
                for (int y = py; y < py + h; ++y)
                    for (int x = px; x < px + w; ++x)
                        if (!truth.tissue.at(x, y)) canvas.paint(x, y, pal.brown);
                // rough hand-drawn outline: the patch box widened by the margin, clipped to the tile
                const int m = cfg.mask_margin;
                for (int y = std::max(t.y, py - m); y < std::min(t.y + t.height, py + h + m); ++y)
                    for (int x = std::max(t.x, px - m); x < std::min(t.x + t.width, px + w + m); ++x)
                        truth.artifact_mask.at(x, y) = 255;
            }
        }
    }

    // dark artifacts: whole tiles two tiles away from tissue, one tile when nothing is that far
    {
        std::vector<int> candidates;
        for (int gap = 2; gap >= 1 && candidates.empty(); --gap) {
            for (int i = 0; i < grid.count(); ++i) {
                const auto t = grid.tile(i);
                if (used[i] || t.width != ts || t.height != ts) continue;
                if (chebyshev_to_tissue(t.row, t.col) < gap) continue;
                bool near_strip = false;
                for (int b : truth.brown_artifact_tiles) {
                    const auto bt = grid.tile(b);
                    near_strip = near_strip || std::max(std::abs(bt.row - t.row), std::abs(bt.col - t.col)) < 2;
                }
                if (!near_strip) candidates.push_back(i);
            }
        }
        rng.shuffle(candidates);
        for (int i : candidates) {
            if (static_cast<int>(truth.dark_artifact_tiles.size()) >= cfg.dark_artifacts) break;
            const auto t = grid.tile(i);
            bool isolated = true;
            for (int d : truth.dark_artifact_tiles) {
                const auto dt = grid.tile(d);
                isolated = isolated && std::max(std::abs(dt.row - t.row), std::abs(dt.col - t.col)) >= 2;
            }
            if (!isolated) continue;
            truth.dark_artifact_tiles.push_back(i);
            for (int y = t.y; y < t.y + t.height; ++y)
                for (int x = t.x; x < t.x + t.width; ++x) canvas.paint(x, y, pal.dark);
        }
        std::sort(truth.dark_artifact_tiles.begin(), truth.dark_artifact_tiles.end());
    }

    truth.roi = roi::RoiBinaryMask(grid.rows, grid.cols, false);
    for (int i = 0; i < grid.count(); ++i) truth.roi.inside[i] = tissue_tile[i];
    for (int i : truth.dark_artifact_tiles) truth.roi.inside[i] = 0;
    for (int i : truth.brown_artifact_tiles) truth.roi.inside[i] = 0;
    return out;
}

DatasetManifest generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out)
{
    if (spec.n_pos < 0 || spec.n_neg < 0) throw InputDomainError("generate_corpus: negative counts");
    namespace fs = std::filesystem;
    std::error_code ec;
    for (const char* sub : {"slides", "truth", "masks"}) {
        fs::create_directories(out / sub, ec);
        if (ec) throw IoError("cannot create " + (out / sub).string() + ": " + ec.message());
    }
    const std::string prefix = spec.prefix.empty() ? std::string(to_string(spec.dataset)) : spec.prefix;

    std::vector<Label> labels;
    labels.insert(labels.end(), static_cast<std::size_t>(spec.n_pos), Label::positive);
    labels.insert(labels.end(), static_cast<std::size_t>(spec.n_neg), Label::negative);
    Rng order(derive_seed(spec.seed, "corpus/" + prefix));
    order.shuffle(labels);

    std::vector<ManifestEntry> entries(labels.size());
    parallel_for(labels.size(), [&](std::size_t i) {
        char id[64];
        std::snprintf(id, sizeof id, "%s_%03zu", prefix.c_str(), i);
        Rng rng(derive_seed(spec.seed, std::string("params/") + id));
        SynthConfig cfg = spec.base;
        cfg.seed = derive_seed(spec.seed, id);
        cfg.palette = spec.dataset == DatasetId::internal ? Palette::internal : Palette::external;
        cfg.stain_fraction = labels[i] == Label::positive ? rng.uniform(spec.pos_stain_min, spec.pos_stain_max)
                                                          : rng.uniform(spec.neg_stain_min, spec.neg_stain_max);
        cfg.dark_artifacts = spec.dark_artifacts_min +
                             static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.dark_artifacts_max - spec.dark_artifacts_min + 1)));
        const bool brown = rng.uniform() < spec.brown_artifact_probability;
        const int n_brown = spec.brown_artifacts_min +
                            static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.brown_artifacts_max - spec.brown_artifacts_min + 1)));
        cfg.brown_artifacts = brown ? n_brown : 0;
        const SynthSlide s = generate_slide(cfg, id);

        ManifestEntry e;
        e.slide_id = id;
        e.path = fs::path("slides") / (std::string(id) + ".ppm");
        e.label = s.truth.label;
        e.dataset = spec.dataset;
        slide::save_slide(s.raster, out / e.path);
        slide::save_mask(s.truth.tissue, out / "truth" / (std::string(id) + "_tissue.pgm"));
        roi::save_roi_mask(s.truth.roi, out / "truth" / (std::string(id) + "_roi.pgm"));
        if (!s.truth.brown_artifact_tiles.empty()) {
            e.artifact_mask = fs::path("masks") / (std::string(id) + ".pgm");
            slide::save_mask(s.truth.artifact_mask, out / *e.artifact_mask);
        }
        entries[i] = std::move(e);
    });

    DatasetManifest m;
    m.base_dir = out;
    for (auto& e : entries) m.add(std::move(e));
    write_manifest(m, out / "manifest.tsv");
    return m;
}

void generate_paperlike(const std::filesystem::path& out, std::uint64_t seed, double brown_artifact_probability)
{
    CorpusSpec internal;
    internal.n_pos = 20;
    internal.n_neg = 19;
    internal.dataset = DatasetId::internal;
    internal.seed = derive_seed(seed, "internal");
    internal.brown_artifact_probability = brown_artifact_probability;
    generate_corpus(internal, out / "internal");

    CorpusSpec external = internal;
    external.n_pos = 4;
    external.n_neg = 21;
    external.dataset = DatasetId::external;
    external.seed = derive_seed(seed, "external");
    generate_corpus(external, out / "external");
}

}  // namespace pdl1::synth
