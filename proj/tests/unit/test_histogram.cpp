#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "pdl1/common.hpp"
#include "pdl1//color.hpp"
#include "pdl1/histogram.hpp"
#include "pdl1/random.hpp"
#include "support.hpp"

using namespace pdl1;
using namespace pdl1::hist;
using slide::DownTile;

namespace {

DownTile uniform_tile(std::uint8_t r, std::uint8_t g, std::uint8_t b)
{
    DownTile t{};
    for (std::size_t i = 0; i < t.size(); i += 3) {
        t[i] = r;
        t[i + 1] = g;
        t[i + 2] = b;
    }
    return t;
}

Counts random_counts(Rng& rng)
{
    Counts c{};
    for (auto& v : c) v = rng.below(4) == 0 ? rng.below(1000) : 0;
    c[rng.below(num_bins)] += 1;
    return c;
}

}  // namespace

TEST_SUITE("hist_features")
{
    TEST_CASE("bins")
    {
        CHECK(bin_of(0) == 0);
        CHECK(bin_of(0.999) == 0);
        CHECK(bin_of(1) == 1);
        CHECK(bin_of(99.5) == 99);
        CHECK(bin_of(250) == 99);
        CHECK_THROWS_AS(bin_of(-1e-9), InputDomainError);
    }

    TEST_CASE("uniform tiles fill a single bin")
    {
        const std::vector<DownTile> white(2, uniform_tile(238, 238, 238));
        roi::RoiBinaryMask both(1, 2, true);
        auto c = brown_histogram(white, both);
        // oracle: distance_to_brown(white) = 45.5365
        CHECK(c[45] == 2 * 64 * 64);
        CHECK(std::accumulate(c.begin(), c.end(), std::uint64_t{0}) == 2 * 64 * 64);

        // base_brown itself is fractional; the nearest 8-bit color still lands in bin 0
        CHECK(color::distance_to_brown(117, 89, 67) < 1);
        const std::vector<DownTile> brown(1, uniform_tile(117, 89, 67));
        c = brown_histogram(brown, roi::RoiBinaryMask(1, 1, true));
        CHECK(c[0] == 64 * 64);
    }

    TEST_CASE("half brown, half white is bimodal and only ROI tiles count")
    {
        std::vector<DownTile> tiles{uniform_tile(117, 89, 67), uniform_tile(238, 238, 238), uniform_tile(0, 0, 0)};
        roi::RoiBinaryMask m(1, 3);
        m.inside = {1, 1, 0};
        const auto c = brown_histogram(tiles, m);
        CHECK(std::count_if(c.begin(), c.end(), [](auto v) { return v > 0; }) == 2);
        CHECK(c[0] == 4096);
        CHECK(c[45] == 4096);
        CHECK_THROWS_AS(brown_histogram(tiles, roi::RoiBinaryMask(1, 3)), EmptyRoiError);
    }

    TEST_CASE("log normalization")
    {
        Counts c{};
        c[7] = 500;
        auto f = log_normalize(c);
        CHECK(f[7] == 1.0);
        CHECK(f[0] == 0.0);

        Rng rng(5);
        for (int trial = 0; trial < 100; ++trial) {
            c = random_counts(rng);
            f = log_normalize(c);
            const double total = std::accumulate(c.begin(), c.end(), 0.0);
            for (int i = 0; i < num_bins; ++i) {
                CHECK(f[i] == doctest::Approx(std::log(1 + double(c[i])) / std::log(1 + total)).epsilon(1e-12));
                for (int j = 0; j < num_bins; ++j)
                    if (c[i] > c[j]) CHECK(f[i] > f[j]);
            }
        }
        CHECK_THROWS_AS(log_normalize(Counts{}), InputDomainError);
    }

    TEST_CASE("baseline ratio")
    {
        Counts c{};
        c[0] = 10;
        for (int t = 0; t < num_bins; ++t) CHECK(baseline_ratio(c, t) == 1.0);
        c.fill(3);
        CHECK(baseline_ratio(c, 49) == 0.5);

        Rng rng(6);
        for (int trial = 0; trial < 50; ++trial) {
            c = random_counts(rng);
            double prev = 0;
            const double total = std::accumulate(c.begin(), c.end(), 0.0);
            for (int t = 0; t < num_bins; ++t) {
                double below = 0;
                for (int b = 0; b <= t; ++b) below += c[b];
                const double r = baseline_ratio(c, t);
                CHECK(r == doctest::Approx(below / total).epsilon(1e-15));
                CHECK(r >= prev);
                prev = r;
            }
        }
        CHECK_THROWS_AS(baseline_ratio(c, 100), InputDomainError);
    }

    TEST_CASE("baseline prediction is strict")
    {
        Counts c{};
        c[0] = 1;
        CHECK(baseline_predict(c, {0, 0.01}) == Label::positive);
        c = Counts{};
        c[80] = 5;
        CHECK(baseline_predict(c, {10, 0.0}) == Label::negative);
        c[0] = 5;  // r = 0.5 at t_bin 10
        CHECK(baseline_predict(c, {10, 0.5}) == Label::negative);
        CHECK(baseline_predict(c, {10, 0.499}) == Label::positive);
    }

    TEST_CASE("baseline training on separated data")
    {
        std::vector<Counts> h;
        std::vector<Label> y;
        for (int i = 0; i < 6; ++i) {
            Counts c{};
            c[5] = 90;
            c[60] = 10;
            h.push_back(c);
            y.push_back(Label::positive);
            Counts n{};
            n[60] = 100;
            h.push_back(n);
            y.push_back(Label::negative);
        }
        const auto res = baseline_train(h, y);
        CHECK(res.training_accuracy == 1.0);
        for (std::size_t i = 0; i < h.size(); ++i) CHECK(baseline_predict(h[i], res.thresholds) == y[i]);
    }

    TEST_CASE("single-class training sets take the first optimal cell")
    {
        Counts c{};
        c[50] = 10;
        const std::vector<Counts> h(3, c);
        auto res = baseline_train(h, std::vector<Label>(3, Label::negative));
        CHECK(res.training_accuracy == 1.0);
        CHECK(res.thresholds == BaselineThresholds{0, 0.0});
        Counts p{};
        p[0] = 10;
        res = baseline_train(std::vector<Counts>(3, p), std::vector<Label>(3, Label::positive));
        CHECK(res.training_accuracy == 1.0);
        CHECK(res.thresholds == BaselineThresholds{0, 0.0});
    }

    TEST_CASE("baseline training matches a brute-force grid and beats the majority rate")
    {
        Rng rng(12);
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<Counts> h;
            std::vector<Label> y;
            std::size_t pos = 0;
            for (int i = 0; i < 15; ++i) {
                h.push_back(random_counts(rng));
                y.push_back(rng.below(2) ? Label::positive : Label::negative);
                pos += y.back() == Label::positive;
            }
            const int steps = 200;
            std::size_t best = 0;
            BaselineThresholds best_th{-1, 0};
            for (int t = 0; t < num_bins; ++t) {
                for (int k = 0; k <= steps; ++k) {
                    std::size_t ok = 0;
                    for (std::size_t i = 0; i < h.size(); ++i)
                        ok += (baseline_ratio(h[i], t) > double(k) / steps ? Label::positive : Label::negative) == y[i];
                    if (best_th.t_bin < 0 || ok > best) {
                        best = ok;
                        best_th = {t, double(k) / steps};
                    }
                }
            }
            const auto res = baseline_train(h, y, steps);
            CHECK(res.thresholds == best_th);
            CHECK(res.training_accuracy == doctest::Approx(double(best) / h.size()));
            CHECK(res.training_accuracy >= double(std::max(pos, h.size() - pos)) / h.size());
        }
    }

    TEST_CASE("baseline file round trip")
    {
        testing::TempDir dir("baseline");
        const BaselineThresholds th{17, 0.123};
        save_baseline(th, dir / "b.txt");
        CHECK(load_baseline(dir / "b.txt") == th);
        std::ofstream(dir / "bad.txt") << "pdl1-baseline 1\n120 0.5\n";
        CHECK_THROWS_AS(load_baseline(dir / "bad.txt"), FormatError);
    }
}
