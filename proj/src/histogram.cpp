#include "pdl1/histogram.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pdl1/color.hpp"
#include "pdl1/parallel.hpp"

namespace pdl1::hist {

namespace {
constexpr int baseline_version = 1;
}

int bin_of(double distance)
{
    if (!(distance >= 0.0)) throw InputDomainError("histogram distance must be non-negative");
    if (distance >= num_bins) return num_bins - 1;
    return static_cast<int>(distance);
}

Counts brown_histogram(std::span<const slide::DownTile> tiles, const roi::RoiBinaryMask& mask)
{
    if (mask.inside.size() != tiles.size()) throw InputDomainError("ROI mask does not match tile count");
    std::vector<std::size_t> selected;
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        if (mask.inside[i]) selected.push_back(i);
    }
    if (selected.empty()) throw EmptyRoiError("empty ROI: slide cannot be featurized");

    std::vector<Counts> partial(selected.size(), Counts{});
    parallel_for(selected.size(), [&](std::size_t k) {
        const auto& t = tiles[selected[k]];
        for (std::size_t p = 0; p < t.size(); p += 3) {
            ++partial[k][bin_of(color::distance_to_brown(t[p], t[p + 1], t[p + 2]))];
        }
    });
    Counts total{};
    for (const auto& c : partial) {
        for (int b = 0; b < num_bins; ++b) total[b] += c[b];
    }
    return total;
}

Features log_normalize(const Counts& counts)
{
    const std::uint64_t total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    if (total == 0) throw InputDomainError("log_normalize: empty histogram");
    const double denom = std::log1p(static_cast<double>(total));
    Features f{};
    for (int b = 0; b < num_bins; ++b) f[b] = std::log1p(static_cast<double>(counts[b])) / denom;
    return f;
}

HistogramFeature featurize(std::span<const slide::DownTile> tiles, const roi::RoiBinaryMask& mask)
{
    HistogramFeature h;
    h.counts = brown_histogram(tiles, mask);
    h.total_pixels = std::accumulate(h.counts.begin(), h.counts.end(), std::uint64_t{0});
    h.features = log_normalize(h.counts);
    return h;
}

double baseline_ratio(const Counts& counts, int t_bin)
{
    if (t_bin < 0 || t_bin >= num_bins) throw InputDomainError("t_bin out of range");
    std::uint64_t below = 0, total = 0;
    for (int b = 0; b < num_bins; ++b) {
        total += counts[b];
        if (b <= t_bin) below += counts[b];
    }
    if (total == 0) throw InputDomainError("baseline_ratio: empty histogram");
    return static_cast<double>(below) / static_cast<double>(total);
}

Label baseline_predict(const Counts& counts, const BaselineThresholds& th)
{
    if (!(th.t_cls >= 0.0 && th.t_cls <= 1.0)) throw InputDomainError("t_cls out of [0,1]");
    return baseline_ratio(counts, th.t_bin) > th.t_cls ? Label::positive : Label::negative;
}

BaselineTrainResult baseline_train(std::span<const Counts> histograms, std::span<const Label> labels, int cls_steps)
{
    if (histograms.empty()) throw InputDomainError("baseline_train: empty training set");
    if (histograms.size() != labels.size()) throw InputDomainError("baseline_train: label count mismatch");
    if (cls_steps < 1) throw InputDomainError("baseline_train: cls_steps must be >= 1");

    const std::size_t n = histograms.size();
    struct RowBest {
        std::size_t correct = 0;
        int cls_index = 0;
    };
    std::vector<RowBest> rows(num_bins);
    parallel_for(num_bins, [&](std::size_t t_bin) {
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n; ++i) r[i] = baseline_ratio(histograms[i], static_cast<int>(t_bin));
        RowBest best;
        bool first = true;
        for (int k = 0; k <= cls_steps; ++k) {
            const double t_cls = static_cast<double>(k) / cls_steps;
            std::size_t correct = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const Label pred = r[i] > t_cls ? Label::positive : Label::negative;
                correct += pred == labels[i];
            }
            if (first || correct > best.correct) {
                best = {correct, k};
                first = false;
            }
        }
        rows[t_bin] = best;
    });

    BaselineTrainResult out;
    std::size_t best_correct = 0;
    bool first = true;
    for (int t_bin = 0; t_bin < num_bins; ++t_bin) {
        if (first || rows[t_bin].correct > best_correct) {
            best_correct = rows[t_bin].correct;
            out.thresholds = {t_bin, static_cast<double>(rows[t_bin].cls_index) / cls_steps};
            first = false;
        }
    }
    out.training_accuracy = static_cast<double>(best_correct) / static_cast<double>(n);
    return out;
}

void save_baseline(const BaselineThresholds& th, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, th.t_cls);
    out << "pdl1-baseline " << baseline_version << '\n' << th.t_bin << ' ' << std::string(buf, res.ptr) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

BaselineThresholds load_baseline(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string tag;
    int version = 0;
    BaselineThresholds th;
    if (!(in >> tag >> version) || tag != "pdl1-baseline") throw FormatError("not a baseline model file", 1);
    if (version != baseline_version) throw FormatError("unsupported baseline model version", 1);
    std::string t_cls;
    if (!(in >> th.t_bin >> t_cls)) throw FormatError("missing thresholds", 2);
    const auto res = std::from_chars(t_cls.data(), t_cls.data() + t_cls.size(), th.t_cls);
    if (res.ec != std::errc{} || res.ptr != t_cls.data() + t_cls.size()) throw FormatError("bad t_cls", 2);
    if (th.t_bin < 0 || th.t_bin >= num_bins || !(th.t_cls >= 0.0 && th.t_cls <= 1.0)) {
        throw FormatError("thresholds out of range", 2);
    }
    return th;
}

}  // namespace pdl1::hist
