#include "pdl1/common.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "pdl1/binio.hpp"
#include "pdl1/parallel.hpp"
#include "pdl1/random.hpp"

namespace pdl1 {

std::string_view to_string(Label label)
{
    return label == Label::positive ? "positive" : "negative";
}

std::string_view to_string(DatasetId id)
{
    return id == DatasetId::external ? "external" : "internal";
}

Label parse_label(std::string_view text)
{
    if (text == "positive" || text == "pos" || text == "1") return Label::positive;
    if (text == "negative" || text == "neg" || text == "0") return Label::negative;
    throw InputDomainError("unknown label '" + std::string(text) + "'");
}

DatasetId parse_dataset_id(std::string_view text)
{
    if (text == "internal") return DatasetId::internal;
    if (text == "external") return DatasetId::external;
    throw InputDomainError("unknown dataset id '" + std::string(text) + "'");
}

FormatError::FormatError(const std::string& what, std::size_t line)
    : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line)
{
}

// ---------------------------------------------------------------------------
// parallel

namespace {

std::atomic<std::size_t> g_worker_override{0};

std::size_t default_workers()
{
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("PDL1_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end != env && cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
    }
    return n;
}

}  // namespace

std::size_t worker_count()
{
    const std::size_t o = g_worker_override.load();
    return o != 0 ? o : default_workers();
}

void set_worker_count(std::size_t n)
{
    g_worker_override.store(n);
}

// ---------------------------------------------------------------------------
// random

std::uint64_t Rng::below(std::uint64_t n)
{
    if (n == 0) throw InputDomainError("Rng::below(0)");
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

double Rng::normal()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view stage)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : stage) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t z = base ^ h;
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// binio

namespace binio {

namespace {

template <typename T>
T to_little(T v)
{
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
    return v;
}

}  // namespace

Writer::Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary)
{
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
}

void Writer::raw(const void* data, std::size_t n)
{
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write failed: " + path_.string());
}

void Writer::magic(std::string_view tag) { raw(tag.data(), tag.size()); }

void Writer::u32(std::uint32_t v)
{
    v = to_little(v);
    raw(&v, sizeof v);
}

void Writer::u64(std::uint64_t v)
{
    v = to_little(v);
    raw(&v, sizeof v);
}

void Writer::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void Writer::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void Writer::str(std::string_view s)
{
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
}

void Writer::f32s(std::span<const float> v)
{
    for (float x : v) f32(x);
}

void Writer::f64s(std::span<const double> v)
{
    for (double x : v) f64(x);
}

void Writer::close()
{
    out_.close();
    if (!out_) throw IoError("close failed: " + path_.string());
}

Reader::Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary)
{
    if (!in_) throw IoError("cannot open " + path.string());
}

void Reader::raw(void* data, std::size_t n)
{
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
        throw FormatError("unexpected end of file in " + path_.string());
    }
}

void Reader::expect_magic(std::string_view tag)
{
    std::string got(tag.size(), '\0');
    raw(got.data(), got.size());
    if (got != tag) throw FormatError(path_.string() + ": bad magic, expected " + std::string(tag));
}

std::uint32_t Reader::u32()
{
    std::uint32_t v;
    raw(&v, sizeof v);
    return to_little(v);
}

std::uint64_t Reader::u64()
{
    std::uint64_t v;
    raw(&v, sizeof v);
    return to_little(v);
}

float Reader::f32() { return std::bit_cast<float>(u32()); }

double Reader::f64() { return std::bit_cast<double>(u64()); }

std::string Reader::str()
{
    const std::uint32_t n = u32();
    if (n > (1u << 20)) throw FormatError(path_.string() + ": implausible string length");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
}

std::vector<float> Reader::f32s(std::size_t n)
{
    std::vector<float> v(n);
    for (auto& x : v) x = f32();
    return v;
}

std::vector<double> Reader::f64s(std::size_t n)
{
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
}

bool Reader::at_end()
{
    return in_.peek() == std::char_traits<char>::eof();
}

}  // namespace binio

}  // namespace pdl1
