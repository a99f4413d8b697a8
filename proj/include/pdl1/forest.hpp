#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pdl1/features.hpp"

namespace pdl1::clf {

struct ForestParams {
    int trees = 100;
    int max_depth = 0;     // 0 = unbounded
    int min_leaf = 1;      // minimum bootstrap samples per leaf
    int max_features = 0;  // 0 = floor(sqrt(d)), at least 1
    bool operator==(const ForestParams&) const = default;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0;
    int left = -1;
    int right = -1;
    std::array<std::uint32_t, 2> votes{};  // negative, positive bootstrap counts

    bool is_leaf() const { return feature < 0; }
};

/// Binary tree; a sample goes left when x[feature] <= threshold.
struct DecisionTree {
    std::vector<TreeNode> nodes;  // root at 0

    const TreeNode& leaf_for(std::span<const double> x) const;
    /// Majority class of the leaf; ties go negative.
    Label predict(std::span<const double> x) const;
};

struct RandomForestModel {
    ForestParams params;
    std::uint64_t seed = 0;
    int dim = 0;
    std::vector<DecisionTree> trees;
    std::vector<std::vector<std::uint8_t>> in_bag;  // per tree, per training row

    /// Majority vote over trees; ties go negative.
    Label predict(std::span<const double> x) const;
};

/// Bootstrap-sampled Gini trees. Throws on empty or single-class data.
RandomForestModel rf_train(const LabeledFeatureSet& data, const ForestParams& params, std::uint64_t seed);

/// Out-of-bag vote for each training row; rows in every bootstrap get nullopt.
std::vector<std::optional<Label>> oob_predictions(const RandomForestModel& model, const LabeledFeatureSet& data);

}  // namespace pdl1::clf
