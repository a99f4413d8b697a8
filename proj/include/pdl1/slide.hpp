#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pdl1/color.hpp"

namespace pdl1::slide {

inline constexpr int down_size = 64;
inline constexpr int default_tile_size = 256;

/// 8-bit RGB raster, row-major, interleaved channels.
struct SlideRaster {
    std::string slide_id;
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    SlideRaster() = default;
    SlideRaster(int w, int h, std::string id = {});

    std::uint8_t* at(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const std::uint8_t* at(int x, int y) const
    {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
    void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

/// Single-channel 8-bit raster (masks).
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    GrayImage() = default;
    GrayImage(int w, int h, std::uint8_t fill = 0);

    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// Reads a binary PPM (P6, maxval 255). slide_id defaults to the file stem.
SlideRaster load_slide(const std::filesystem::path& path);
void save_slide(const SlideRaster& slide, const std::filesystem::path& path);

/// Reads a binary PGM (P5, maxval 255).
GrayImage load_mask(const std::filesystem::path& path);
void save_mask(const GrayImage& mask, const std::filesystem::path& path);

struct TileRect {
    int row = 0;
    int col = 0;
    int x = 0;
    int y = 0;
    int width = 0;   // may be < tile_size on the right edge
    int height = 0;  // may be < tile_size on the bottom edge
};

/// Row-major partition of a raster into tile_size squares; edge tiles may be partial.
struct TileGrid {
    int tile_size = default_tile_size;
    int width = 0;
    int height = 0;
    int rows = 0;
    int cols = 0;

    int count() const { return rows * cols; }
    int index(int row, int col) const { return row * cols + col; }
    TileRect tile(int index) const;
};

TileGrid make_grid(int width, int height, int tile_size = default_tile_size);
TileGrid make_grid(const SlideRaster& s, int tile_size = default_tile_size);

/// A downsampled 64x64x3 tile, row-major interleaved.
using DownTile = std::array<std::uint8_t, down_size * down_size * 3>;

/// Copies one tile at native resolution, padding partial tiles to
/// tile_size x tile_size with the reference white.
std::vector<std::uint8_t> extract_tile(const SlideRaster& s, const TileGrid& g, int index);

/// Box-average downsample of a padded square tile to 64x64, rounding half up.
/// tile_size must be a positive multiple of 64.
DownTile downsample_tile(std::span<const std::uint8_t> native, int tile_size);

/// Every tile of the slide, downsampled, in row-major grid order.
std::vector<DownTile> downsample_all(const SlideRaster& s, const TileGrid& g);

/// Tiles excluded by an externally supplied artifact mask (nonzero = masked).
/// The mask is either one value per tile (rows x cols) or one per pixel
/// (width x height); per-pixel masks exclude a tile when more than half of its
/// in-raster pixels are masked. Returns a per-tile flag vector.
std::vector<bool> apply_artifact_mask(const TileGrid& g, const GrayImage& mask);

}  // namespace pdl1::slide
