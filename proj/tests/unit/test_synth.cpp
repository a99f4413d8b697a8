#include <doctest.h>

#include <cmath>

#include "pdl1/common.hpp"
#include "pdl1//color.hpp"
#include "pdl1/manifest.hpp"
#include "pdl1/roi.hpp"
#include "pdl1/synth.hpp"
#include "support.hpp"

using namespace pdl1;
using namespace pdl1::synth;

namespace {

std::size_t count_label(const DatasetManifest& m, Label l)
{
    return static_cast<std::size_t>(
        std::count_if(m.entries.begin(), m.entries.end(), [&](const auto& e) { return e.label == l; }));
}

}  // namespace

TEST_SUITE("synthgen")
{
    TEST_CASE("label rule")
    {
        CHECK(label_for(0, 1000) == Label::negative);
        CHECK(label_for(9, 1000) == Label::negative);
        CHECK(label_for(10, 1000) == Label::positive);
        CHECK(label_for(500, 1000) == Label::positive);
    }

    TEST_CASE("stain fraction drives the label")
    {
        SynthConfig cfg;
        cfg.seed = 1;
        auto s = generate_slide(cfg);
        CHECK(s.truth.label == Label::negative);
        CHECK(s.truth.stain_pixels == 0);
        cfg.stain_fraction = 0.05;
        s = generate_slide(cfg);
        CHECK(s.truth.label == Label::positive);
    }

    TEST_CASE("same seed gives the same raster")
    {
        SynthConfig cfg;
        cfg.seed = 2;
        cfg.stain_fraction = 0.03;
        cfg.brown_artifacts = 3;
        const auto a = generate_slide(cfg), b = generate_slide(cfg);
        CHECK(a.raster.pixels == b.raster.pixels);
        CHECK(a.truth.artifact_mask.pixels == b.truth.artifact_mask.pixels);
        cfg.seed = 3;
        CHECK(generate_slide(cfg).raster.pixels != a.raster.pixels);
    }

    TEST_CASE("painted stain matches the request and the pixels")
    {
        for (std::uint64_t seed = 0; seed < 6; ++seed) {
            SynthConfig cfg;
            cfg.seed = seed;
            cfg.stain_fraction = 0.004 * static_cast<double>(seed + 1);
            cfg.brown_artifacts = seed % 2 ? 4 : 0;
            const auto s = generate_slide(cfg);
            const auto& t = s.truth;
            const double want = cfg.stain_fraction * static_cast<double>(t.tissue_pixels);
            CHECK(std::abs(static_cast<double>(t.stain_pixels) - want) <= 1.0);
            CHECK(t.label == label_for(t.stain_pixels, t.tissue_pixels));

            std::size_t tissue = 0, brown = 0;
            for (int y = 0; y < s.raster.height; ++y) {
                for (int x = 0; x < s.raster.width; ++x) {
                    if (!t.tissue.at(x, y)) continue;
                    ++tissue;
                    const auto* p = s.raster.at(x, y);
                    brown += color::distance_to_brown(p[0], p[1], p[2]) <= 4.0;
                }
            }
            CHECK(tissue == t.tissue_pixels);
            CHECK(brown == t.stain_pixels);
        }
    }

    TEST_CASE("dark artifact pixels clear the outlier band")
    {
        for (std::uint64_t seed = 0; seed < 4; ++seed) {
            SynthConfig cfg;
            cfg.seed = seed;
            cfg.dark_artifacts = 3;
            const auto s = generate_slide(cfg);
            const auto grid = slide::make_grid(s.raster);
            const auto tiles = slide::downsample_all(s.raster, grid);
            const auto stats = roi::compute_white_stats(tiles);
            REQUIRE(s.truth.dark_artifact_tiles.size() == 3);
            for (int t : s.truth.dark_artifact_tiles) {
                CHECK(s.truth.roi.inside[t] == 0);
                const auto d = roi::white_distances(tiles[t]);
                for (double v : d) CHECK(v > stats.mean + 3 * stats.std);
            }
        }
    }

    TEST_CASE("brown artifacts sit outside the tissue and under the mask")
    {
        for (std::uint64_t seed = 0; seed < 8; ++seed) {
            SynthConfig cfg;
            cfg.seed = seed;
            cfg.brown_artifacts = 4;
            const auto n = generate_slide(cfg).truth.brown_artifact_tiles.size();
            CHECK(n >= 1);
            CHECK(n <= 4);
        }
        SynthConfig cfg;
        cfg.seed = 5;
        cfg.brown_artifacts = 4;
        cfg.tissue = {{Shape::Kind::rectangle, 512, 512, 1024, 1024}};
        const auto s = generate_slide(cfg);
        const auto& t = s.truth;
        REQUIRE(t.brown_artifact_tiles.size() == 4);
        const auto grid = slide::make_grid(s.raster);
        const auto excluded = slide::apply_artifact_mask(grid, t.artifact_mask);
        for (int i : t.brown_artifact_tiles) {
            CHECK(excluded[i]);
            CHECK(t.roi.inside[i] == 0);
        }
        for (int y = 0; y < s.raster.height; ++y)
            for (int x = 0; x < s.raster.width; ++x)
                if (t.artifact_mask.at(x, y)) CHECK_FALSE(t.tissue.at(x, y));
    }

    TEST_CASE("explicit shapes and infeasible configs")
    {
        SynthConfig cfg;
        cfg.tissue = {{Shape::Kind::ellipse, 400, 400, 1200, 900}};
        cfg.dark_artifacts = 0;
        const auto s = generate_slide(cfg);
        CHECK(s.truth.tissue.at(1000, 850) == 255);
        CHECK(s.truth.tissue.at(410, 410) == 0);
        cfg.width = 0;
        CHECK_THROWS_AS(generate_slide(cfg), InputDomainError);
        cfg = SynthConfig{};
        cfg.stain_fraction = 1.5;
        CHECK_THROWS_AS(generate_slide(cfg), InputDomainError);
    }

    TEST_CASE("corpus shapes")
    {
        testing::TempDir dir("corpus");
        CorpusSpec spec;
        spec.base.width = spec.base.height = 1536;
        spec.n_pos = 20;
        spec.n_neg = 19;
        spec.seed = 4;
        spec.brown_artifact_probability = 0.5;
        auto m = generate_corpus(spec, dir / "internal");
        CHECK(m.entries.size() == 39);
        CHECK(count_label(m, Label::positive) == 20);
        const auto back = read_manifest(dir / "internal" / "manifest.tsv");
        CHECK(back.entries == m.entries);
        for (const auto& e : back.entries) {
            const auto sl = slide::load_slide(back.resolve(e.path));
            CHECK(sl.width == 1536);
            CHECK(std::filesystem::exists(dir / "internal" / "truth" / (e.slide_id + "_roi.pgm")));
            if (e.artifact_mask) CHECK(std::filesystem::exists(back.resolve(*e.artifact_mask)));
        }

        spec.n_pos = 4;
        spec.n_neg = 21;
        spec.dataset = DatasetId::external;
        spec.base.palette = Palette::external;
        m = generate_corpus(spec, dir / "external");
        CHECK(m.entries.size() == 25);
        CHECK(count_label(m, Label::positive) == 4);
        CHECK(std::all_of(m.entries.begin(), m.entries.end(),
                          [](const auto& e) { return e.dataset == DatasetId::external; }));

        spec.n_pos = spec.n_neg = 0;
        CHECK(generate_corpus(spec, dir / "empty").entries.empty());
    }
}
