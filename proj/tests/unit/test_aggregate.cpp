#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "pdl1/common.hpp"
#include "pdl1//aggregate.hpp"
#include "pdl1/random.hpp"
#include "support.hpp"

using namespace pdl1;
using namespace pdl1::agg;

namespace {

PointSet cloud(Rng& rng, int n, int dim, double cx, double spread)
{
    PointSet p(dim);
    for (int i = 0; i < n; ++i)
        for (int d = 0; d < dim; ++d) p.values.push_back(cx + spread * rng.normal());
    return p;
}

PointSet concat(const PointSet& a, const PointSet& b)
{
    PointSet out(a.dim);
    out.values = a.values;
    out.values.insert(out.values.end(), b.values.begin(), b.values.end());
    return out;
}

std::vector<std::vector<double>> rows(const PointSet& p)
{
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < p.size(); ++i) out.emplace_back(p.row(i), p.row(i) + p.dim);
    return out;
}

}  // namespace

TEST_SUITE("aggregate")
{
    TEST_CASE("average aggregation")
    {
        PointSet p(3);
        p.push(std::vector<double>{1, -2, 3});
        CHECK(average_aggregate(p) == std::vector<double>{1, -2, 3});
        p.push(std::vector<double>{-1, 2, -3});
        CHECK(average_aggregate(p) == std::vector<double>{0, 0, 0});
        CHECK_THROWS(average_aggregate(PointSet(3)));

        Rng rng(1);
        const auto q = cloud(rng, 17, 5, 0.3, 2);
        const auto mean = average_aggregate(q);
        for (int d = 0; d < 5; ++d) {
            double s = 0;
            for (std::size_t i = 0; i < q.size(); ++i) s += q.row(i)[d];
            CHECK(mean[d] == doctest::Approx(s / 17).epsilon(1e-12));
        }
    }

    TEST_CASE("two separated clouds give their means")
    {
        Rng rng(2);
        const auto a = cloud(rng, 40, 4, -10, 1), b = cloud(rng, 40, 4, 10, 1);
        const auto all = concat(a, b);
        KMeansConfig cfg;
        cfg.k = 2;
        const auto res = kmeans_fit(all, cfg);
        const auto ma = average_aggregate(a), mb = average_aggregate(b);
        const int ca = res.assignment[0];
        for (int i = 0; i < 40; ++i) CHECK(res.assignment[i] == ca);
        for (int i = 40; i < 80; ++i) CHECK(res.assignment[i] == 1 - ca);
        for (int d = 0; d < 4; ++d) {
            CHECK(res.centroids.row(ca)[d] == doctest::Approx(ma[d]).epsilon(1e-9));
            CHECK(res.centroids.row(1 - ca)[d] == doctest::Approx(mb[d]).epsilon(1e-9));
        }
    }

    TEST_CASE("K equal to the number of points")
    {
        Rng rng(3);
        const auto p = cloud(rng, 12, 3, 0, 5);
        KMeansConfig cfg;
        cfg.k = 12;
        const auto res = kmeans_fit(p, cfg);
        CHECK(res.inertia == 0);
        std::vector<int> seen(12, 0);
        for (int a : res.assignment) ++seen[a];
        CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
        cfg.k = 13;
        CHECK_THROWS_AS(kmeans_fit(p, cfg), InputDomainError);
    }

    TEST_CASE("k-means agrees with a brute-force Lloyd oracle")
    {
        Rng rng(4);
        int compared = 0;
        for (int trial = 0; trial < 30; ++trial) {
            const int n = 20 + static_cast<int>(rng.below(81));
            const int k = 2 + static_cast<int>(rng.below(5));
            PointSet p(3);
            for (int i = 0; i < n; ++i)
                for (int d = 0; d < 3; ++d) p.values.push_back(rng.uniform(-5, 5));
            KMeansConfig cfg;
            cfg.k = k;
            cfg.seed = trial;
            cfg.tolerance = 0;
            cfg.max_iterations = 0;
            const auto init = kmeans_fit(p, cfg);
            const auto expect = oracle::lloyd(rows(p), rows(init.centroids));
            if (!expect) continue;
            cfg.max_iterations = 1000;
            const auto got = kmeans_fit(p, cfg);
            CHECK(got.assignment == *expect);
            CHECK(kmeans_fit(p, cfg).centroids.values == got.centroids.values);
            ++compared;
        }
        CHECK(compared >= 20);
    }

    TEST_CASE("retention count")
    {
        CHECK(retained_count(10, 90) == 9);
        CHECK(retained_count(11, 90) == 10);
        CHECK(retained_count(10, 100) == 10);
        CHECK(retained_count(1, 1) == 1);
        CHECK_THROWS_AS(retained_count(10, 0), InputDomainError);
        CHECK_THROWS_AS(retained_count(10, 101), InputDomainError);
    }

    TEST_CASE("radii match a brute-force recomputation")
    {
        Rng rng(5);
        std::vector<PointSet> slides;
        for (int s = 0; s < 4; ++s) slides.push_back(cloud(rng, 10 + s, 2, s, 2));
        PointSet cent(2);
        for (int c = 0; c < 3; ++c) cent.push(std::vector<double>{double(c), double(-c)});
        for (double t_op : {50.0, 90.0, 100.0}) {
            std::vector<double> expect(3, 0.0);
            for (const auto& s : slides) {
                std::vector<std::pair<double, int>> d;
                for (std::size_t i = 0; i < s.size(); ++i) {
                    double best = 1e300;
                    int arg = 0;
                    for (int c = 0; c < 3; ++c) {
                        const double dd = std::hypot(s.row(i)[0] - cent.row(c)[0], s.row(i)[1] - cent.row(c)[1]);
                        if (dd < best) {
                            best = dd;
                            arg = c;
                        }
                    }
                    d.push_back({best, arg});
                }
                std::sort(d.begin(), d.end());
                const auto keep = static_cast<std::size_t>(std::ceil(t_op * s.size() / 100.0 - 1e-9));
                for (std::size_t i = 0; i < keep; ++i) expect[d[i].second] = std::max(expect[d[i].second], d[i].first);
            }
            const auto got = prune_and_radii(slides, cent, t_op);
            for (int c = 0; c < 3; ++c) CHECK(got[c] == doctest::Approx(expect[c]).epsilon(1e-12));
        }
    }

    TEST_CASE("distribution edge cases")
    {
        ClusterModel m;
        m.centroids = PointSet(2);
        m.centroids.push(std::vector<double>{0, 0});
        m.centroids.push(std::vector<double>{5, 5});
        m.radii = {1, 1};
        PointSet at0(2);
        for (int i = 0; i < 4; ++i) at0.push(std::vector<double>{0, 0});
        CHECK(cluster_distribution(at0, m) == std::vector<double>{1, 0, 0});
        PointSet far(2);
        far.push(std::vector<double>{100, 100});
        far.push(std::vector<double>{-50, 3});
        CHECK(cluster_distribution(far, m) == std::vector<double>{0, 0, 1});
        PointSet mixed(2);
        mixed.push(std::vector<double>{0.5, 0});
        mixed.push(std::vector<double>{5, 5.9});
        mixed.push(std::vector<double>{3.5, 5});
        mixed.push(std::vector<double>{2.5, 2.5});
        CHECK(cluster_distribution(mixed, m) == std::vector<double>{0.25, 0.25, 0.5});
    }

    TEST_CASE("aggregations ignore tile order and leave the model untouched")
    {
        Rng rng(6);
        std::vector<PointSet> train;
        for (int s = 0; s < 5; ++s) train.push_back(cloud(rng, 30, 4, s % 2 ? 1 : -1, 1));
        KMeansConfig cfg;
        cfg.k = 6;
        const auto model = fit_cluster_model(train, cfg, 90);
        const auto copy = model;
        auto slide = cloud(rng, 25, 4, 0, 1.5);
        const auto dist = cluster_distribution(slide, model);
        const auto mean = average_aggregate(slide);
        CHECK(std::accumulate(dist.begin(), dist.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));

        std::vector<std::size_t> order(slide.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        PointSet shuffled(4);
        for (auto i : order) shuffled.values.insert(shuffled.values.end(), slide.row(i), slide.row(i) + 4);
        CHECK(cluster_distribution(shuffled, model) == dist);
        for (int d = 0; d < 4; ++d) CHECK(average_aggregate(shuffled)[d] == doctest::Approx(mean[d]).epsilon(1e-12));
        CHECK(model.centroids.values == copy.centroids.values);
        CHECK(model.radii == copy.radii);
    }

    TEST_CASE("cluster model file round trip")
    {
        testing::TempDir dir("clu");
        Rng rng(7);
        std::vector<PointSet> train{cloud(rng, 20, 3, 0, 1), cloud(rng, 20, 3, 2, 1)};
        KMeansConfig cfg;
        cfg.k = 4;
        cfg.seed = 99;
        const auto m = fit_cluster_model(train, cfg, 70);
        save_cluster_model(m, dir / "c.bin");
        const auto back = load_cluster_model(dir / "c.bin");
        CHECK(back.centroids.values == m.centroids.values);
        CHECK(back.radii == m.radii);
        CHECK(back.t_op == 70);
        CHECK(back.seed == 99);
        std::filesystem::resize_file(dir / "c.bin", 30);
        CHECK_THROWS(load_cluster_model(dir / "c.bin"));
    }
}
