#include "pdl1/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pdl1::clf {

namespace {

constexpr double tau = 1e-12;

struct Prepared {
    std::vector<double> x;  // n x d, standardized
    std::vector<double> y;  // +1 / -1
    std::size_t n = 0;
    int d = 0;
};

Prepared prepare(const LabeledFeatureSet& data, SvmModel& m)
{
    Prepared p;
    p.n = data.size();
    p.d = data.dim();
    p.x.resize(p.n * static_cast<std::size_t>(p.d));
    p.y.resize(p.n);
    m.mean.clear();
    m.scale.clear();
    if (m.params.standardize) {
        m.mean.assign(static_cast<std::size_t>(p.d), 0.0);
        m.scale.assign(static_cast<std::size_t>(p.d), 1.0);
        for (std::size_t i = 0; i < p.n; ++i) {
            for (int k = 0; k < p.d; ++k) m.mean[k] += data[i].values[k];
        }
        for (auto& v : m.mean) v /= static_cast<double>(p.n);
        std::vector<double> var(static_cast<std::size_t>(p.d), 0.0);
        for (std::size_t i = 0; i < p.n; ++i) {
            for (int k = 0; k < p.d; ++k) {
                const double dv = data[i].values[k] - m.mean[k];
                var[k] += dv * dv;
            }
        }
        for (int k = 0; k < p.d; ++k) {
            const double sd = std::sqrt(var[k] / static_cast<double>(p.n));
            m.scale[k] = sd > 0 ? 1.0 / sd : 1.0;
        }
    }
    for (std::size_t i = 0; i < p.n; ++i) {
        for (int k = 0; k < p.d; ++k) {
            double v = data[i].values[k];
            if (!m.mean.empty()) v = (v - m.mean[k]) * m.scale[k];
            p.x[i * p.d + k] = v;
        }
        p.y[i] = data[i].label == Label::positive ? 1.0 : -1.0;
    }
    return p;
}

double resolve_gamma(const SvmParams& params, const Prepared& p)
{
    switch (params.gamma_rule) {
    case GammaRule::value:
        if (!(params.gamma > 0)) throw InputDomainError("svm: gamma must be positive");
        return params.gamma;
    case GammaRule::inverse_dim:
        return 1.0 / p.d;
    case GammaRule::inverse_dim_var: {
        double mean = 0;
        for (double v : p.x) mean += v;
        mean /= static_cast<double>(p.x.size());
        double var = 0;
        for (double v : p.x) var += (v - mean) * (v - mean);
        var /= static_cast<double>(p.x.size());
        return var > 0 ? 1.0 / (p.d * var) : 1.0 / p.d;
    }
    }
    return 1.0 / p.d;
}

std::vector<double> gram(const SvmModel& m, const Prepared& p)
{
    std::vector<double> k(p.n * p.n);
    for (std::size_t i = 0; i < p.n; ++i) {
        for (std::size_t j = i; j < p.n; ++j) {
            const double v = kernel_value(m, &p.x[i * p.d], &p.x[j * p.d]);
            k[i * p.n + j] = v;
            k[j * p.n + i] = v;
        }
    }
    return k;
}

bool in_up(double y, double a, double c) { return (y > 0 && a < c) || (y < 0 && a > 0); }
bool in_low(double y, double a, double c) { return (y < 0 && a < c) || (y > 0 && a > 0); }

// Max violating pair gap m - M for the given alphas and gradient.
double violation_gap(const std::vector<double>& y, const std::vector<double>& alpha, const std::vector<double>& g,
                     double c, std::size_t* up_idx = nullptr, std::size_t* low_idx = nullptr)
{
    double m = -std::numeric_limits<double>::infinity();
    double M = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < y.size(); ++t) {
        const double v = -y[t] * g[t];
        if (in_up(y[t], alpha[t], c) && v > m) {
            m = v;
            if (up_idx) *up_idx = t;
        }
        if (in_low(y[t], alpha[t], c) && v < M) {
            M = v;
            if (low_idx) *low_idx = t;
        }
    }
    if (!std::isfinite(m) || !std::isfinite(M)) return 0;
    return m - M;
}

}  // namespace

double kernel_value(const SvmModel& m, const double* a, const double* b)
{
    double s = 0;
    if (m.params.kernel == KernelType::linear) {
        for (int k = 0; k < m.dim; ++k) s += a[k] * b[k];
        return s;
    }
    for (int k = 0; k < m.dim; ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return std::exp(-m.gamma * s);
}

double SvmModel::decision(std::span<const double> x) const
{
    if (static_cast<int>(x.size()) != dim) throw InputDomainError("svm: feature width mismatch");
    std::vector<double> z(x.begin(), x.end());
    if (!mean.empty()) {
        for (int k = 0; k < dim; ++k) z[k] = (z[k] - mean[k]) * scale[k];
    }
    double f = bias;
    for (std::size_t i = 0; i < dual_coef.size(); ++i) {
        f += dual_coef[i] * kernel_value(*this, &support_vectors[i * dim], z.data());
    }
    return f;
}

Label SvmModel::predict(std::span<const double> x) const
{
    return decision(x) > 0 ? Label::positive : Label::negative;
}

SvmModel svm_train(const LabeledFeatureSet& data, const SvmParams& params, std::uint64_t, SvmTrainInfo* info)
{
    if (data.empty()) throw InputDomainError("svm_train: empty data");
    if (data.count(Label::positive) == 0 || data.count(Label::negative) == 0) {
        throw InputDomainError("svm_train: both classes must be present");
    }
    if (!(params.c > 0) || !(params.tolerance > 0)) throw InputDomainError("svm_train: C and tolerance must be > 0");

    SvmModel m;
    m.params = params;
    m.dim = data.dim();
    const Prepared p = prepare(data, m);
    m.gamma = params.kernel == KernelType::rbf ? resolve_gamma(params, p) : 0.0;
    const auto K = gram(m, p);
    const std::size_t n = p.n;
    const double C = params.c;
    auto Q = [&](std::size_t i, std::size_t j) { return p.y[i] * p.y[j] * K[i * n + j]; };

    std::vector<double> alpha(n, 0.0), G(n, -1.0);
    const std::size_t max_iter = params.max_iterations ? params.max_iterations : std::max<std::size_t>(1000000, 100 * n);
    std::size_t iter = 0;
    double gap = 0;
    for (;; ++iter) {
        std::size_t i = 0, j = 0;
        gap = violation_gap(p.y, alpha, G, C, &i, &j);
        if (gap < params.tolerance) break;
        if (iter >= max_iter) {
            throw ConvergenceError("svm_train: KKT gap " + std::to_string(gap) + " after " + std::to_string(iter) +
                                   " iterations (C=" + std::to_string(C) + ")");
        }
        const double ai = alpha[i], aj = alpha[j];
        if (p.y[i] != p.y[j]) {
            double quad = Q(i, i) + Q(j, j) + 2 * Q(i, j);
            if (quad <= 0) quad = tau;
            const double delta = (-G[i] - G[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0) {
                if (alpha[j] < 0) {
                    alpha[j] = 0;
                    alpha[i] = diff;
                }
            } else if (alpha[i] < 0) {
                alpha[i] = 0;
                alpha[j] = -diff;
            }
            if (diff > 0) {
                if (alpha[i] > C) {
                    alpha[i] = C;
                    alpha[j] = C - diff;
                }
            } else if (alpha[j] > C) {
                alpha[j] = C;
                alpha[i] = C + diff;
            }
        } else {
            double quad = Q(i, i) + Q(j, j) - 2 * Q(i, j);
            if (quad <= 0) quad = tau;
            const double delta = (G[i] - G[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > C) {
                if (alpha[i] > C) {
                    alpha[i] = C;
                    alpha[j] = sum - C;
                }
            } else if (alpha[j] < 0) {
                alpha[j] = 0;
                alpha[i] = sum;
            }
            if (sum > C) {
                if (alpha[j] > C) {
                    alpha[j] = C;
                    alpha[i] = sum - C;
                }
            } else if (alpha[i] < 0) {
                alpha[i] = 0;
                alpha[j] = sum;
            }
        }
        const double dai = alpha[i] - ai, daj = alpha[j] - aj;
        for (std::size_t k = 0; k < n; ++k) G[k] += Q(i, k) * dai + Q(j, k) * daj;
    }

    // bias from free vectors, else midpoint of the feasible interval
    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = p.y[t] * G[t];
        if (alpha[t] >= C) {
            if (p.y[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else if (alpha[t] <= 0) {
            if (p.y[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
    m.bias = -rho;

    for (std::size_t t = 0; t < n; ++t) {
        if (alpha[t] <= 0) continue;
        m.support_indices.push_back(t);
        m.dual_coef.push_back(alpha[t] * p.y[t]);
        m.support_vectors.insert(m.support_vectors.end(), p.x.begin() + static_cast<std::ptrdiff_t>(t * p.d),
                                 p.x.begin() + static_cast<std::ptrdiff_t>((t + 1) * p.d));
    }
    if (info) {
        info->iterations = iter;
        info->kkt_gap = gap;
    }
    return m;
}

double kkt_violation(const SvmModel& model, const LabeledFeatureSet& data)
{
    SvmModel scratch = model;
    const Prepared p = prepare(data, scratch);
    const std::size_t n = p.n;
    std::vector<double> alpha(n, 0.0);
    for (std::size_t s = 0; s < model.support_indices.size(); ++s) {
        alpha.at(model.support_indices[s]) = std::abs(model.dual_coef[s]);
    }
    scratch.gamma = model.gamma;
    std::vector<double> G(n, -1.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (alpha[j] == 0) continue;
            G[i] += p.y[i] * p.y[j] * kernel_value(scratch, &p.x[i * p.d], &p.x[j * p.d]) * alpha[j];
        }
    }
    return std::max(0.0, violation_gap(p.y, alpha, G, model.params.c));
}

}  // namespace pdl1::clf
