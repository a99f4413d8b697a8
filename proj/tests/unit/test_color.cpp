#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pdl1/color.hpp"
#include "pdl1/common.hpp"
#include "pdl1/random.hpp"

using namespace pdl1;
using namespace pdl1::color;

namespace {

// Frozen from tests/oracles/color_oracle.py (scikit-image).
struct LabFixture {
    Rgb rgb;
    Lab lab;
};

const LabFixture lab_fixtures[] = {
    {{238, 238, 238}, {94.0978, 0, 0}},
    {{255, 255, 255}, {100.0, 0, 0}},
    {{117.3, 88.9, 67.3}, {40.1480, 8.5589, 17.0112}},
    {{0, 0, 0}, {0, 0, 0}},
    {{128, 128, 128}, {53.5850, 0, 0}},
};

struct Pair {
    Lab x, y;
    double de;
};

std::vector<Pair> load_pairs()
{
    std::ifstream in(std::string(PDL1_TEST_DATA) + "/ciede2000_pairs.txt");
    REQUIRE(in);
    std::vector<Pair> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        Pair p;
        ss >> p.x.L >> p.x.a >> p.x.b >> p.y.L >> p.y.a >> p.y.b >> p.de;
        out.push_back(p);
    }
    return out;
}

Lab random_lab(Rng& rng)
{
    return {rng.uniform(0, 100), rng.uniform(-128, 128), rng.uniform(-128, 128)};
}

}  // namespace

TEST_SUITE("colorspace")
{
    TEST_CASE("srgb_to_lab matches oracle fixtures")
    {
        for (const auto& f : lab_fixtures) {
            const Lab got = srgb_to_lab(f.rgb);
            CHECK(std::abs(got.L - f.lab.L) < 1e-4);
            CHECK(std::abs(got.a - f.lab.a) < 1e-4);
            CHECK(std::abs(got.b - f.lab.b) < 1e-4);
        }
    }

    TEST_CASE("white and black land on the axes exactly")
    {
        const Lab w = srgb_to_lab({255, 255, 255});
        CHECK(std::abs(w.L - 100) < 1e-12);
        CHECK(std::abs(w.a) < 1e-12);
        CHECK(std::abs(w.b) < 1e-12);
        const Lab k = srgb_to_lab({0, 0, 0});
        CHECK(k.L == 0);
        CHECK(k.a == 0);
        CHECK(k.b == 0);
    }

    TEST_CASE("out of range channels are rejected")
    {
        CHECK_THROWS_AS(srgb_to_lab({-0.5, 0, 0}), InputDomainError);
        CHECK_THROWS_AS(srgb_to_lab({0, 255.01, 0}), InputDomainError);
        CHECK_THROWS_AS(srgb_to_lab({0, 0, std::nan("")}), InputDomainError);
    }

    TEST_CASE("gray ramp is strictly increasing in L")
    {
        double prev = -1;
        for (int v = 0; v <= 255; ++v) {
            const double L = srgb_to_lab({double(v), double(v), double(v)}).L;
            CHECK(L > prev);
            prev = L;
        }
    }

    TEST_CASE("published verification pairs")
    {
        const auto pairs = load_pairs();
        CHECK(pairs.size() == 34);
        for (const auto& p : pairs) {
            CHECK(std::abs(ciede2000(p.x, p.y) - p.de) < 1e-4);
            CHECK(std::abs(ciede2000(p.y, p.x) - p.de) < 1e-4);
        }
    }

    TEST_CASE("symmetry, identity and non-negativity on random pairs")
    {
        Rng rng(42);
        for (int i = 0; i < 10000; ++i) {
            const Lab x = random_lab(rng);
            const Lab y = random_lab(rng);
            const double d = ciede2000(x, y);
            CHECK(d >= 0);
            CHECK(d == ciede2000(y, x));
            CHECK(std::abs(ciede2000(x, x)) < 1e-12);
        }
    }

    TEST_CASE("distance to white and brown")
    {
        CHECK(distance_to_white(reference_white) == 0);
        CHECK(std::abs(distance_to_white(Rgb{255, 255, 255}) - 3.4666) < 1e-4);
        CHECK(std::abs(distance_to_white(base_brown) - 45.5365) < 1e-4);
        CHECK(distance_to_white(base_brown) > 5);
        CHECK(distance_to_brown(base_brown) == 0);
        CHECK(distance_to_brown(reference_white) == distance_to_white(base_brown));
        CHECK(std::abs(distance_to_brown(Rgb{0, 0, 0}) - 31.2955) < 1e-4);
        CHECK(std::abs(distance_to_white(Rgb{0, 0, 0}) - 91.8583) < 1e-4);
    }

    TEST_CASE("8-bit overloads agree with the real-valued ones")
    {
        for (int v = 0; v < 256; v += 5) {
            for (int w = 0; w < 256; w += 51) {
                const auto r = std::uint8_t(v), g = std::uint8_t(w), b = std::uint8_t(255 - v);
                const Rgb c{double(r), double(g), double(b)};
                CHECK(distance_to_white(r, g, b) == distance_to_white(c));
                CHECK(distance_to_brown(r, g, b) == distance_to_brown(c));
            }
        }
    }
}
