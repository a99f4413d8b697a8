#include "pdl1/slide.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "pdl1/common.hpp"
#include "pdl1/parallel.hpp"

namespace pdl1::slide {

SlideRaster::SlideRaster(int w, int h, std::string id) : slide_id(std::move(id)), width(w), height(h)
{
    if (w < 1 || h < 1) throw InputDomainError("raster dimensions must be >= 1");
    pixels.assign(static_cast<std::size_t>(w) * h * 3, 0);
}

void SlideRaster::set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b)
{
    auto* p = at(x, y);
    p[0] = r;
    p[1] = g;
    p[2] = b;
}

GrayImage::GrayImage(int w, int h, std::uint8_t fill) : width(w), height(h)
{
    if (w < 1 || h < 1) throw InputDomainError("mask dimensions must be >= 1");
    pixels.assign(static_cast<std::size_t>(w) * h, fill);
}

namespace {

struct NetpbmHeader {
    int width = 0;
    int height = 0;
};

// Reads one whitespace-delimited header integer, skipping '#' comments.
int read_header_int(std::istream& in, const std::string& name)
{
    int c = in.get();
    while (true) {
        while (c != EOF && std::isspace(c)) c = in.get();
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
            continue;
        }
        break;
    }
    if (c == EOF || !std::isdigit(c)) throw FormatError("corrupt image header: " + name);
    long v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        if (v > (1L << 30)) throw FormatError("corrupt image header: " + name);
        c = in.get();
    }
    // exactly one whitespace byte separates the header from the raster
    if (c == EOF || !std::isspace(c)) throw FormatError("corrupt image header: " + name);
    return static_cast<int>(v);
}

NetpbmHeader read_header(std::istream& in, const std::filesystem::path& path, std::string_view magic)
{
    char m[2] = {0, 0};
    in.read(m, 2);
    if (in.gcount() != 2) throw FormatError("corrupt image (empty): " + path.string());
    if (m[0] != magic[0] || m[1] != magic[1]) {
        throw FormatError("unsupported image format in " + path.string() + ", expected " + std::string(magic));
    }
    NetpbmHeader h;
    h.width = read_header_int(in, path.string());
    h.height = read_header_int(in, path.string());
    const int maxval = read_header_int(in, path.string());
    if (h.width < 1 || h.height < 1) throw FormatError("corrupt image dimensions: " + path.string());
    if (maxval != 255) throw FormatError("unsupported maxval (need 255): " + path.string());
    return h;
}

std::ifstream open_in(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

void read_body(std::istream& in, std::vector<std::uint8_t>& buf, const std::filesystem::path& path)
{
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
        throw FormatError("corrupt image (truncated pixel data): " + path.string());
    }
}

void write_netpbm(const std::filesystem::path& path, std::string_view magic, int w, int h,
                  const std::vector<std::uint8_t>& data)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << magic << '\n' << w << ' ' << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

SlideRaster load_slide(const std::filesystem::path& path)
{
    auto in = open_in(path);
    const auto h = read_header(in, path, "P6");
    SlideRaster s(h.width, h.height, path.stem().string());
    read_body(in, s.pixels, path);
    return s;
}

void save_slide(const SlideRaster& slide, const std::filesystem::path& path)
{
    write_netpbm(path, "P6", slide.width, slide.height, slide.pixels);
}

GrayImage load_mask(const std::filesystem::path& path)
{
    auto in = open_in(path);
    const auto h = read_header(in, path, "P5");
    GrayImage m(h.width, h.height);
    read_body(in, m.pixels, path);
    return m;
}

void save_mask(const GrayImage& mask, const std::filesystem::path& path)
{
    write_netpbm(path, "P5", mask.width, mask.height, mask.pixels);
}

TileRect TileGrid::tile(int index) const
{
    TileRect r;
    r.row = index / cols;
    r.col = index % cols;
    r.x = r.col * tile_size;
    r.y = r.row * tile_size;
    r.width = std::min(tile_size, width - r.x);
    r.height = std::min(tile_size, height - r.y);
    return r;
}

TileGrid make_grid(int width, int height, int tile_size)
{
    if (tile_size < 1) throw InputDomainError("tile_size must be >= 1");
    if (width < 1 || height < 1) throw InputDomainError("raster dimensions must be >= 1");
    TileGrid g;
    g.tile_size = tile_size;
    g.width = width;
    g.height = height;
    g.rows = (height + tile_size - 1) / tile_size;
    g.cols = (width + tile_size - 1) / tile_size;
    return g;
}

TileGrid make_grid(const SlideRaster& s, int tile_size) { return make_grid(s.width, s.height, tile_size); }

std::vector<std::uint8_t> extract_tile(const SlideRaster& s, const TileGrid& g, int index)
{
    const auto r = g.tile(index);
    const auto pad_r = static_cast<std::uint8_t>(color::reference_white.r);
    const auto pad_g = static_cast<std::uint8_t>(color::reference_white.g);
    const auto pad_b = static_cast<std::uint8_t>(color::reference_white.b);
    const auto ts = static_cast<std::size_t>(g.tile_size);
    std::vector<std::uint8_t> out(ts * ts * 3);
    for (std::size_t i = 0; i < ts * ts; ++i) {
        out[3 * i] = pad_r;
        out[3 * i + 1] = pad_g;
        out[3 * i + 2] = pad_b;
    }
    for (int y = 0; y < r.height; ++y) {
        const auto* src = s.at(r.x, r.y + y);
        std::copy(src, src + static_cast<std::size_t>(r.width) * 3, out.data() + y * ts * 3);
    }
    return out;
}

DownTile downsample_tile(std::span<const std::uint8_t> native, int tile_size)
{
    if (tile_size < down_size || tile_size % down_size != 0) {
        throw InputDomainError("tile_size must be a positive multiple of 64 to downsample");
    }
    const auto ts = static_cast<std::size_t>(tile_size);
    if (native.size() != ts * ts * 3) throw InputDomainError("downsample_tile: buffer size mismatch");
    const int f = tile_size / down_size;
    const unsigned area = static_cast<unsigned>(f * f);
    DownTile out{};
    for (int oy = 0; oy < down_size; ++oy) {
        for (int ox = 0; ox < down_size; ++ox) {
            unsigned sum[3] = {0, 0, 0};
            for (int dy = 0; dy < f; ++dy) {
                const auto* row = native.data() + ((oy * f + dy) * ts + static_cast<std::size_t>(ox) * f) * 3;
                for (int dx = 0; dx < f; ++dx) {
                    sum[0] += row[3 * dx];
                    sum[1] += row[3 * dx + 1];
                    sum[2] += row[3 * dx + 2];
                }
            }
            auto* o = out.data() + (oy * down_size + ox) * 3;
            // round half up: floor(sum/area + 1/2)
            for (int c = 0; c < 3; ++c) o[c] = static_cast<std::uint8_t>((2 * sum[c] + area) / (2 * area));
        }
    }
    return out;
}

std::vector<DownTile> downsample_all(const SlideRaster& s, const TileGrid& g)
{
    std::vector<DownTile> tiles(static_cast<std::size_t>(g.count()));
    parallel_for(tiles.size(), [&](std::size_t i) {
        const auto native = extract_tile(s, g, static_cast<int>(i));
        tiles[i] = downsample_tile(native, g.tile_size);
    });
    return tiles;
}

std::vector<bool> apply_artifact_mask(const TileGrid& g, const GrayImage& mask)
{
    std::vector<bool> excluded(static_cast<std::size_t>(g.count()), false);
    if (mask.width == g.cols && mask.height == g.rows) {
        for (int i = 0; i < g.count(); ++i) excluded[i] = mask.pixels[i] != 0;
        return excluded;
    }
    if (mask.width != g.width || mask.height != g.height) {
        throw InputDomainError("artifact mask is " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                               ", expected tile grid " + std::to_string(g.cols) + "x" + std::to_string(g.rows) +
                               " or raster " + std::to_string(g.width) + "x" + std::to_string(g.height));
    }
    for (int i = 0; i < g.count(); ++i) {
        const auto r = g.tile(i);
        std::size_t masked = 0;
        for (int y = r.y; y < r.y + r.height; ++y) {
            for (int x = r.x; x < r.x + r.width; ++x) masked += mask.at(x, y) != 0;
        }
        const std::size_t area = static_cast<std::size_t>(r.width) * r.height;
        excluded[i] = 2 * masked > area;
    }
    return excluded;
}

}  // namespace pdl1::slide
