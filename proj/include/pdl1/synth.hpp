#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pdl1/manifest.hpp"
#include "pdl1/roi.hpp"
#include "pdl1/slide.hpp"

namespace pdl1::synth {

enum class Palette : std::uint8_t { internal, external };

struct Shape {
    enum class Kind : std::uint8_t { rectangle, ellipse } kind = Kind::rectangle;
    int x = 0, y = 0, width = 0, height = 0;  // bounding box in pixels
};

struct SynthConfig {
    std::uint64_t seed = 0;
    int width = 2048;
    int height = 2048;
    int tile_size = 256;
    /// Explicit tissue shapes; when empty one or two tile-aligned rectangles of
    /// at least 3x3 tiles are drawn at random.
    std::vector<Shape> tissue;
    int edge_jitter = 16;  // px, random offset of each generated rectangle edge
    double stain_fraction = 0;
    int stain_blob_min_radius = 6;
    int stain_blob_max_radius = 28;
    int dark_artifacts = 2;   // whole tiles away from tissue; fewer when the canvas has no room
    int brown_artifacts = 0;  // strip along the tissue, outside it; shortened when the tissue is narrower
    int brown_patch_min = 180;
    int brown_patch_max = 220;
    int mask_margin = 24;  // px added around each brown patch in the hand-style mask
    int background_jitter = 2;
    Palette palette = Palette::internal;
};

struct SynthGroundTruth {
    slide::GrayImage tissue;     // pixel level, 255 = tissue
    roi::RoiBinaryMask roi;      // tile level: tissue coverage >= 1/2, artifacts removed
    slide::GrayImage artifact_mask;  // hand-style brown-artifact mask, 255 = artifact
    std::size_t tissue_pixels = 0;
    std::size_t stain_pixels = 0;
    Label label = Label::negative;
    std::vector<int> dark_artifact_tiles;
    std::vector<int> brown_artifact_tiles;
};

struct SynthSlide {
    slide::SlideRaster raster;
    SynthGroundTruth truth;
};

/// Positive iff stain covers at least 1% of the tissue.
Label label_for(std::size_t stain_pixels, std::size_t tissue_pixels);

/// Deterministic per config. Throws InputDomainError on an infeasible config.
SynthSlide generate_slide(const SynthConfig& cfg, const std::string& slide_id = "synth");

struct CorpusSpec {
    int n_pos = 0;
    int n_neg = 0;
    DatasetId dataset = DatasetId::internal;
    std::uint64_t seed = 0;
    std::string prefix;  // slide id prefix; defaults to the dataset name
    double pos_stain_min = 0.03, pos_stain_max = 0.08;
    double neg_stain_min = 0.0, neg_stain_max = 0.002;
    double brown_artifact_probability = 0;
    int brown_artifacts_min = 3, brown_artifacts_max = 5;
    int dark_artifacts_min = 1, dark_artifacts_max = 3;
    SynthConfig base;  // canvas, palette and drawing parameters
};

/// Writes <out>/slides/<id>.ppm, <out>/truth/<id>_tissue.pgm and <id>_roi.pgm,
/// <out>/masks/<id>.pgm for slides with brown artifacts, and <out>/manifest.tsv.
/// Slides are shuffled so labels interleave.
DatasetManifest generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out);

/// Internal 20/19 and external 4/21 corpora under <out>/internal and <out>/external.
void generate_paperlike(const std::filesystem::path& out, std::uint64_t seed, double brown_artifact_probability = 0.5);

}  // namespace pdl1::synth
