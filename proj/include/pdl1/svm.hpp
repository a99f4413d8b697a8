#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pdl1/features.hpp"

namespace pdl1::clf {

enum class KernelType : std::uint8_t { linear, rbf };

/// Gamma for the RBF kernel: a literal value or one of the data-derived rules.
enum class GammaRule : std::uint8_t { value, inverse_dim, inverse_dim_var };

struct SvmParams {
    double c = 1.0;
    KernelType kernel = KernelType::linear;
    GammaRule gamma_rule = GammaRule::inverse_dim;
    double gamma = 0;  // used when gamma_rule == value
    bool standardize = true;
    double tolerance = 1e-3;
    std::size_t max_iterations = 0;  // 0 = max(10^6, 100 n)
    bool operator==(const SvmParams&) const = default;
};

struct SvmModel {
    SvmParams params;
    double gamma = 0;  // resolved
    int dim = 0;
    std::vector<double> mean;   // standardization, empty when disabled
    std::vector<double> scale;
    std::vector<double> support_vectors;  // rows of dim, standardized space
    std::vector<double> dual_coef;        // alpha_i * y_i, within [-C, C]
    std::vector<std::size_t> support_indices;  // training rows of the support vectors
    double bias = 0;                      // decision = sum coef K(sv, x) + bias

    double decision(std::span<const double> x) const;
    /// positive iff decision > 0.
    Label predict(std::span<const double> x) const;
};

struct SvmTrainInfo {
    std::size_t iterations = 0;
    double kkt_gap = 0;  // max violating pair gap at exit
};

/// Soft-margin dual solved by SMO with maximal violating pair selection until
/// the KKT gap drops below params.tolerance. Throws on single-class data and
/// ConvergenceError when max_iterations is exhausted.
SvmModel svm_train(const LabeledFeatureSet& data, const SvmParams& params, std::uint64_t seed,
                   SvmTrainInfo* info = nullptr);

/// Largest KKT violation of the model's dual solution on its training data,
/// recomputed from scratch: max over i in I_up of -y G minus min over I_low.
double kkt_violation(const SvmModel& model, const LabeledFeatureSet& data);

double kernel_value(const SvmModel& m, const double* a, const double* b);

}  // namespace pdl1::clf
