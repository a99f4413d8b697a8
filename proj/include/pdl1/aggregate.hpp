#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pdl1::agg {

/// Row-major set of equal-width points.
struct PointSet {
    int dim = 0;
    std::vector<double> values;

    PointSet() = default;
    explicit PointSet(int d) : dim(d) {}
    std::size_t size() const { return dim == 0 ? 0 : values.size() / static_cast<std::size_t>(dim); }
    const double* row(std::size_t i) const { return values.data() + i * static_cast<std::size_t>(dim); }
    void push(std::span<const double> p);
    template <typename Range>
    void push_range(const Range& p)
    {
        for (auto v : p) values.push_back(static_cast<double>(v));
    }
};

double squared_distance(const double* a, const double* b, int dim);

/// Component-wise mean. Throws on an empty set.
std::vector<double> average_aggregate(const PointSet& embeddings);

struct KMeansConfig {
    int k = 256;
    int max_iterations = 300;
    double tolerance = 1e-6;  // stop when no centroid moves farther than this
    std::uint64_t seed = 0;
};

struct KMeansResult {
    PointSet centroids;
    std::vector<int> assignment;
    double inertia = 0;
    int iterations = 0;
};

/// Seeded k-means++ initialization followed by Lloyd iterations. An empty
/// cluster is re-seeded with the point farthest from its current centroid.
KMeansResult kmeans_fit(const PointSet& points, const KMeansConfig& cfg);

/// Index of the nearest centroid (lowest index on ties) and its distance.
std::pair<int, double> nearest(const PointSet& centroids, const double* p);

struct ClusterModel {
    PointSet centroids;
    std::vector<double> radii;
    double t_op = 90;
    std::uint64_t seed = 0;

    int k() const { return static_cast<int>(centroids.size()); }
};

/// Number of a slide's tiles kept during pruning: ceil(t_op / 100 * n).
std::size_t retained_count(std::size_t n, double t_op);

/// For each slide, keeps the closest t_op percent of its tiles (by distance to
/// their nearest centroid); a cluster's radius is the largest distance among
/// the retained tiles assigned to it, 0 when none are.
std::vector<double> prune_and_radii(std::span<const PointSet> slides, const PointSet& centroids, double t_op);

/// Fits centroids on every training tile and derives the radii.
ClusterModel fit_cluster_model(std::span<const PointSet> training_slides, const KMeansConfig& cfg, double t_op);

/// K+1 fractions: clusters 0..K-1, then the outlier bin. A tile belongs to its
/// nearest centroid when within that cluster's radius, otherwise to the outlier bin.
std::vector<double> cluster_distribution(const PointSet& slide, const ClusterModel& model);

/// "PDL1CLU\0", u32 version, u32 K, u32 dim, f64 t_op, u64 seed, K*dim f64
/// centroids, K f64 radii; little-endian.
void save_cluster_model(const ClusterModel& m, const std::filesystem::path& path);
ClusterModel load_cluster_model(const std::filesystem::path& path);

}  // namespace pdl1::agg
