#include "pdl1/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pdl1/binio.hpp"
#include "pdl1/common.hpp"
#include "pdl1/parallel.hpp"
#include "pdl1/random.hpp"

namespace pdl1::agg {

void PointSet::push(std::span<const double> p)
{
    if (static_cast<int>(p.size()) != dim) throw InputDomainError("point width mismatch");
    values.insert(values.end(), p.begin(), p.end());
}

double squared_distance(const double* a, const double* b, int dim)
{
    double s = 0;
    for (int i = 0; i < dim; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

std::vector<double> average_aggregate(const PointSet& e)
{
    const std::size_t n = e.size();
    if (n == 0) throw InputDomainError("average_aggregate: no embeddings");
    std::vector<double> mean(static_cast<std::size_t>(e.dim), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = e.row(i);
        for (int d = 0; d < e.dim; ++d) mean[d] += r[d];
    }
    for (auto& m : mean) m /= static_cast<double>(n);
    return mean;
}

std::pair<int, double> nearest(const PointSet& centroids, const double* p)
{
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = squared_distance(p, centroids.row(c), centroids.dim);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return {best, std::sqrt(best_d)};
}

namespace {

PointSet kmeanspp_init(const PointSet& pts, int k, Rng& rng)
{
    const std::size_t n = pts.size();
    PointSet c(pts.dim);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::size_t first = rng.below(n);
    c.push({pts.row(first), static_cast<std::size_t>(pts.dim)});
    for (int j = 1; j < k; ++j) {
        const double* last = c.row(static_cast<std::size_t>(j - 1));
        double total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(pts.row(i), last, pts.dim));
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total > 0) {
            double target = rng.uniform() * total;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                target -= d2[i];
                if (target < 0 && d2[i] > 0) {
                    pick = i;
                    break;
                }
            }
        } else {
            // all remaining points coincide with chosen centers
            pick = rng.below(n);
        }
        c.push({pts.row(pick), static_cast<std::size_t>(pts.dim)});
    }
    return c;
}

}  // namespace

KMeansResult kmeans_fit(const PointSet& pts, const KMeansConfig& cfg)
{
    const std::size_t n = pts.size();
    if (cfg.k < 1) throw InputDomainError("kmeans: K must be >= 1");
    if (n < static_cast<std::size_t>(cfg.k)) {
        throw InputDomainError("kmeans: " + std::to_string(n) + " points is fewer than K=" + std::to_string(cfg.k));
    }
    Rng rng(cfg.seed);
    KMeansResult res;
    res.centroids = kmeanspp_init(pts, cfg.k, rng);
    res.assignment.assign(n, 0);
    const int dim = pts.dim;
    std::vector<double> dist(n);

    for (int it = 0; it < cfg.max_iterations; ++it) {
        parallel_for(n, [&](std::size_t i) {
            const auto [c, d] = nearest(res.centroids, pts.row(i));
            res.assignment[i] = c;
            dist[i] = d;
        });
        std::vector<double> sums(static_cast<std::size_t>(cfg.k) * dim, 0.0);
        std::vector<std::size_t> counts(static_cast<std::size_t>(cfg.k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const int c = res.assignment[i];
            ++counts[c];
            const double* r = pts.row(i);
            for (int d = 0; d < dim; ++d) sums[static_cast<std::size_t>(c) * dim + d] += r[d];
        }
        PointSet next(dim);
        next.values.resize(sums.size());
        std::vector<char> taken(n, 0);
        for (int c = 0; c < cfg.k; ++c) {
            double* out = next.values.data() + static_cast<std::size_t>(c) * dim;
            if (counts[c] > 0) {
                for (int d = 0; d < dim; ++d) out[d] = sums[static_cast<std::size_t>(c) * dim + d] / counts[c];
                continue;
            }
            // empty cluster: re-seed from the farthest point not already used
            std::size_t far = 0;
            double far_d = -1;
            for (std::size_t i = 0; i < n; ++i) {
                if (!taken[i] && dist[i] > far_d) {
                    far_d = dist[i];
                    far = i;
                }
            }
            taken[far] = 1;
            dist[far] = 0;
            std::copy_n(pts.row(far), dim, out);
        }
        double max_move = 0;
        for (int c = 0; c < cfg.k; ++c) {
            max_move = std::max(max_move, std::sqrt(squared_distance(next.row(c), res.centroids.row(c), dim)));
        }
        res.centroids = std::move(next);
        res.iterations = it + 1;
        if (max_move < cfg.tolerance) break;
    }
    res.inertia = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto [c, d] = nearest(res.centroids, pts.row(i));
        res.assignment[i] = c;
        res.inertia += d * d;
    }
    return res;
}

std::size_t retained_count(std::size_t n, double t_op)
{
    if (!(t_op > 0.0 && t_op <= 100.0)) throw InputDomainError("t_op must lie in (0, 100]");
    // t_op * n / 100 computed in integers where exact, avoiding 0.9 * 10 = 9.000000000000002
    const double exact = t_op * static_cast<double>(n) / 100.0;
    const double rounded = std::round(exact);
    const double kept = std::abs(exact - rounded) < 1e-9 ? rounded : std::ceil(exact);
    return std::min(n, static_cast<std::size_t>(kept));
}

std::vector<double> prune_and_radii(std::span<const PointSet> slides, const PointSet& centroids, double t_op)
{
    std::vector<double> radii(centroids.size(), 0.0);
    for (const auto& s : slides) {
        const std::size_t n = s.size();
        std::vector<std::pair<double, int>> tiles(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto [c, d] = nearest(centroids, s.row(i));
            tiles[i] = {d, c};
        }
        std::stable_sort(tiles.begin(), tiles.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        const std::size_t keep = retained_count(n, t_op);
        for (std::size_t i = 0; i < keep; ++i) {
            radii[tiles[i].second] = std::max(radii[tiles[i].second], tiles[i].first);
        }
    }
    return radii;
}

ClusterModel fit_cluster_model(std::span<const PointSet> training_slides, const KMeansConfig& cfg, double t_op)
{
    if (training_slides.empty()) throw InputDomainError("fit_cluster_model: no training slides");
    PointSet all(training_slides.front().dim);
    for (const auto& s : training_slides) {
        if (s.dim != all.dim) throw InputDomainError("fit_cluster_model: embedding width mismatch");
        all.values.insert(all.values.end(), s.values.begin(), s.values.end());
    }
    ClusterModel m;
    m.centroids = kmeans_fit(all, cfg).centroids;
    m.radii = prune_and_radii(training_slides, m.centroids, t_op);
    m.t_op = t_op;
    m.seed = cfg.seed;
    return m;
}

std::vector<double> cluster_distribution(const PointSet& slide, const ClusterModel& model)
{
    const std::size_t n = slide.size();
    if (n == 0) throw InputDomainError("cluster_distribution: no embeddings");
    if (slide.dim != model.centroids.dim) throw InputDomainError("cluster_distribution: embedding width mismatch");
    const int k = model.k();
    std::vector<std::size_t> counts(static_cast<std::size_t>(k) + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto [c, d] = nearest(model.centroids, slide.row(i));
        if (d <= model.radii[c]) {
            ++counts[c];
        } else {
            ++counts[k];
        }
    }
    std::vector<double> out(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) out[i] = static_cast<double>(counts[i]) / static_cast<double>(n);
    return out;
}

namespace {
constexpr std::string_view cluster_magic{"PDL1CLU\0", 8};
constexpr std::uint32_t cluster_version = 1;
}  // namespace

void save_cluster_model(const ClusterModel& m, const std::filesystem::path& path)
{
    binio::Writer w(path);
    w.magic(cluster_magic);
    w.u32(cluster_version);
    w.u32(static_cast<std::uint32_t>(m.k()));
    w.u32(static_cast<std::uint32_t>(m.centroids.dim));
    w.f64(m.t_op);
    w.u64(m.seed);
    w.f64s(m.centroids.values);
    w.f64s(m.radii);
    w.close();
}

ClusterModel load_cluster_model(const std::filesystem::path& path)
{
    binio::Reader r(path);
    r.expect_magic(cluster_magic);
    if (r.u32() != cluster_version) throw FormatError(path.string() + ": unsupported cluster model version");
    ClusterModel m;
    const std::uint32_t k = r.u32();
    const std::uint32_t dim = r.u32();
    if (k == 0 || dim == 0 || k > (1u << 20) || dim > (1u << 16)) throw FormatError(path.string() + ": bad header");
    m.t_op = r.f64();
    m.seed = r.u64();
    m.centroids = PointSet(static_cast<int>(dim));
    m.centroids.values = r.f64s(static_cast<std::size_t>(k) * dim);
    m.radii = r.f64s(k);
    return m;
}

}  // namespace pdl1::agg
