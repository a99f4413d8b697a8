#include "pdl1/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pdl1/random.hpp"

namespace pdl1::clf {

const TreeNode& DecisionTree::leaf_for(std::span<const double> x) const
{
    const TreeNode* n = &nodes.front();
    while (!n->is_leaf()) n = &nodes[x[n->feature] <= n->threshold ? n->left : n->right];
    return *n;
}

Label DecisionTree::predict(std::span<const double> x) const
{
    const auto& v = leaf_for(x).votes;
    return v[1] > v[0] ? Label::positive : Label::negative;
}

Label RandomForestModel::predict(std::span<const double> x) const
{
    if (static_cast<int>(x.size()) != dim) throw InputDomainError("forest: feature width mismatch");
    std::size_t pos = 0;
    for (const auto& t : trees) pos += t.predict(x) == Label::positive;
    return 2 * pos > trees.size() ? Label::positive : Label::negative;
}

namespace {

double gini(std::uint32_t neg, std::uint32_t pos)
{
    const double n = static_cast<double>(neg) + pos;
    if (n == 0) return 0;
    const double p = pos / n;
    return 2.0 * p * (1.0 - p);
}

class TreeBuilder {
public:
    TreeBuilder(const LabeledFeatureSet& data, const ForestParams& p, int max_features, Rng& rng)
        : data_(data), params_(p), max_features_(max_features), rng_(rng)
    {
    }

    DecisionTree build(std::vector<std::size_t> samples)
    {
        tree_.nodes.clear();
        grow(std::move(samples), 0);
        return std::move(tree_);
    }

private:
    int grow(std::vector<std::size_t> samples, int depth)
    {
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        std::array<std::uint32_t, 2> votes{};
        for (std::size_t s : samples) ++votes[data_[s].label == Label::positive];
        tree_.nodes[id].votes = votes;

        const bool depth_ok = params_.max_depth == 0 || depth < params_.max_depth;
        const bool pure = votes[0] == 0 || votes[1] == 0;
        if (!depth_ok || pure || samples.size() < 2 * static_cast<std::size_t>(params_.min_leaf)) return id;

        const auto split = best_split(samples, votes);
        if (!split) return id;

        std::vector<std::size_t> left, right;
        for (std::size_t s : samples) {
            (data_[s].values[split->feature] <= split->threshold ? left : right).push_back(s);
        }
        samples.clear();
        samples.shrink_to_fit();
        tree_.nodes[id].feature = split->feature;
        tree_.nodes[id].threshold = split->threshold;
        const int l = grow(std::move(left), depth + 1);
        tree_.nodes[id].left = l;
        const int r = grow(std::move(right), depth + 1);
        tree_.nodes[id].right = r;
        return id;
    }

    struct Split {
        int feature;
        double threshold;
    };

    std::optional<Split> best_split(const std::vector<std::size_t>& samples, const std::array<std::uint32_t, 2>& votes)
    {
        const int d = data_.dim();
        std::vector<int> features(static_cast<std::size_t>(d));
        std::iota(features.begin(), features.end(), 0);
        // partial Fisher-Yates: the first max_features entries are the candidates
        for (int i = 0; i < max_features_; ++i) {
            const auto j = i + static_cast<int>(rng_.below(static_cast<std::uint64_t>(d - i)));
            std::swap(features[i], features[j]);
        }

        const double n = static_cast<double>(samples.size());
        double best = gini(votes[0], votes[1]) - 1e-12;
        std::optional<Split> out;
        std::vector<std::pair<double, int>> col(samples.size());
        for (int fi = 0; fi < max_features_; ++fi) {
            const int f = features[fi];
            for (std::size_t i = 0; i < samples.size(); ++i) {
                col[i] = {data_[samples[i]].values[f], data_[samples[i]].label == Label::positive};
            }
            std::sort(col.begin(), col.end());
            std::array<std::uint32_t, 2> left{};
            for (std::size_t i = 0; i + 1 < col.size(); ++i) {
                ++left[col[i].second];
                if (col[i].first == col[i + 1].first) continue;
                const std::size_t nl = i + 1, nr = col.size() - nl;
                if (nl < static_cast<std::size_t>(params_.min_leaf) || nr < static_cast<std::size_t>(params_.min_leaf)) {
                    continue;
                }
                const std::array<std::uint32_t, 2> right{votes[0] - left[0], votes[1] - left[1]};
                const double impurity = (nl * gini(left[0], left[1]) + nr * gini(right[0], right[1])) / n;
                if (impurity < best) {
                    best = impurity;
                    double mid = 0.5 * (col[i].first + col[i + 1].first);
                    // guard against the midpoint rounding onto the upper value
                    if (!(mid < col[i + 1].first)) mid = col[i].first;
                    out = Split{f, mid};
                }
            }
        }
        return out;
    }

    const LabeledFeatureSet& data_;
    const ForestParams& params_;
    int max_features_;
    Rng& rng_;
    DecisionTree tree_;
};

}  // namespace

RandomForestModel rf_train(const LabeledFeatureSet& data, const ForestParams& params, std::uint64_t seed)
{
    if (data.empty()) throw InputDomainError("rf_train: empty data");
    if (data.count(Label::positive) == 0 || data.count(Label::negative) == 0) {
        throw InputDomainError("rf_train: both classes must be present");
    }
    if (params.trees < 1 || params.min_leaf < 1 || params.max_depth < 0 || params.max_features < 0) {
        throw InputDomainError("rf_train: bad hyperparameters");
    }
    RandomForestModel m;
    m.params = params;
    m.seed = seed;
    m.dim = data.dim();
    const int max_features =
        params.max_features > 0
            ? std::min(params.max_features, data.dim())
            : std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(data.dim())))));
    const std::size_t n = data.size();
    m.trees.resize(static_cast<std::size_t>(params.trees));
    m.in_bag.resize(m.trees.size());
    for (std::size_t t = 0; t < m.trees.size(); ++t) {
        Rng rng(derive_seed(seed, "tree" + std::to_string(t)));
        std::vector<std::size_t> sample(n);
        m.in_bag[t].assign(n, 0);
        for (auto& s : sample) {
            s = rng.below(n);
            m.in_bag[t][s] = 1;
        }
        TreeBuilder b(data, params, max_features, rng);
        m.trees[t] = b.build(std::move(sample));
    }
    return m;
}

std::vector<std::optional<Label>> oob_predictions(const RandomForestModel& model, const LabeledFeatureSet& data)
{
    std::vector<std::optional<Label>> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::size_t pos = 0, votes = 0;
        for (std::size_t t = 0; t < model.trees.size(); ++t) {
            if (model.in_bag[t][i]) continue;
            ++votes;
            pos += model.trees[t].predict(data[i].values) == Label::positive;
        }
        if (votes > 0) out[i] = 2 * pos > votes ? Label::positive : Label::negative;
    }
    return out;
}

}  // namespace pdl1::clf
