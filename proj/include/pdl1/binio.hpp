#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "pdl1/common.hpp"

// Little-endian binary records used by the weight, cluster, embedding and
// classifier model files.
namespace pdl1::binio {

class Writer {
public:
    explicit Writer(const std::filesystem::path& path);

    void magic(std::string_view tag);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);
    void f64(double v);
    void str(std::string_view s);
    void f32s(std::span<const float> v);
    void f64s(std::span<const double> v);
    void close();

private:
    void raw(const void* data, std::size_t n);
    std::filesystem::path path_;
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path);

    /// Throws FormatError unless the next bytes equal `tag`.
    void expect_magic(std::string_view tag);
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    double f64();
    std::string str();
    std::vector<float> f32s(std::size_t n);
    std::vector<double> f64s(std::size_t n);
    bool at_end();

private:
    void raw(void* data, std::size_t n);
    std::filesystem::path path_;
    std::ifstream in_;
};

}  // namespace pdl1::binio
