#include <doctest.h>

#include <cmath>
#include <fstream>

#include "oracles.hpp"
#include "pdl1/common.hpp"
#include "pdl1//forest.hpp"
#include "pdl1/model_selection.hpp"
#include "pdl1/random.hpp"
#include "pdl1/svm.hpp"
#include "support.hpp"

using namespace pdl1;
using namespace pdl1::clf;

namespace {

LabeledFeatureSet make_set(const std::vector<std::vector<double>>& x, const std::vector<int>& y)
{
    LabeledFeatureSet s(static_cast<int>(x.front().size()));
    for (std::size_t i = 0; i < x.size(); ++i)
        s.add({"r" + std::to_string(i), x[i], y[i] ? Label::positive : Label::negative});
    return s;
}

// Points on either side of the line 0.6 x - 0.8 y = 0.3 with a gap of at least `margin`.
LabeledFeatureSet separable(int n, std::uint64_t seed, double margin = 0.2)
{
    Rng rng(seed);
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    while (static_cast<int>(x.size()) < n) {
        const double a = rng.uniform(-3, 3), b = rng.uniform(-3, 3);
        const double s = 0.6 * a - 0.8 * b - 0.3;
        if (std::abs(s) < margin) continue;
        x.push_back({a, b});
        y.push_back(s > 0);
    }
    return make_set(x, y);
}

// Exhaustive search over directions and offsets for a separating line.
bool line_search_separable(const LabeledFeatureSet& s)
{
    for (int deg = 0; deg < 360; ++deg) {
        const double t = deg * M_PI / 180, u = std::cos(t), v = std::sin(t);
        double max_neg = -1e300, min_pos = 1e300;
        for (const auto& r : s.rows()) {
            const double p = u * r.values[0] + v * r.values[1];
            if (r.label == Label::positive) min_pos = std::min(min_pos, p);
            else max_neg = std::max(max_neg, p);
        }
        if (max_neg < min_pos) return true;
    }
    return false;
}

double accuracy(const Model& m, const LabeledFeatureSet& s) { return evaluate(m, s).accuracy(); }

Grid two_cell_svm()
{
    Grid g{Family::svm, {}};
    SvmParams a;
    a.c = 0.01;
    SvmParams b;
    b.c = 10;
    b.kernel = KernelType::rbf;
    g.cells = {a, b};
    return g;
}

}  // namespace

TEST_SUITE("classifiers")
{
    TEST_CASE("forest separates 1-d data")
    {
        std::vector<std::vector<double>> x;
        std::vector<int> y;
        for (int i = -10; i <= 10; ++i) {
            if (i == 0) continue;
            x.push_back({i * 0.5});
            y.push_back(i > 0);
        }
        const auto s = make_set(x, y);
        const auto m = rf_train(s, {}, 1);
        CHECK(accuracy(m, s) == 1.0);
        CHECK(m.predict(std::vector<double>{7.0}) == Label::positive);
        CHECK(m.predict(std::vector<double>{-7.0}) == Label::negative);
    }

    TEST_CASE("forest on copies of one row predicts the majority label everywhere")
    {
        std::vector<std::vector<double>> x(7, {1.0, 2.0});
        const auto s = make_set(x, {1, 1, 1, 1, 1, 0, 0});
        const auto m = rf_train(s, {}, 2);
        for (const auto& t : m.trees) CHECK(t.nodes.size() == 1);
        Rng rng(3);
        for (int i = 0; i < 50; ++i)
            CHECK(m.predict(std::vector<double>{rng.uniform(-9, 9), rng.uniform(-9, 9)}) == Label::positive);
    }

    TEST_CASE("forest rejects unusable data")
    {
        CHECK_THROWS_AS(rf_train(LabeledFeatureSet(2), {}, 0), InputDomainError);
        CHECK_THROWS_AS(rf_train(make_set({{1.0}, {2.0}}, {1, 1}), {}, 0), InputDomainError);
    }

    TEST_CASE("out-of-bag predictions match a brute-force traversal")
    {
        const auto s = separable(60, 4, 0.0);
        ForestParams p;
        p.trees = 25;
        const auto m = rf_train(s, p, 5);
        const auto oob = oob_predictions(m, s);
        for (std::size_t i = 0; i < s.size(); ++i) {
            int pos = 0, votes = 0;
            for (std::size_t t = 0; t < m.trees.size(); ++t) {
                if (m.in_bag[t][i]) continue;
                const auto& nodes = m.trees[t].nodes;
                int k = 0;
                while (nodes[k].feature >= 0)
                    k = s[i].values[nodes[k].feature] <= nodes[k].threshold ? nodes[k].left : nodes[k].right;
                ++votes;
                pos += nodes[k].votes[1] > nodes[k].votes[0];
            }
            if (votes == 0) {
                CHECK_FALSE(oob[i].has_value());
            } else {
                REQUIRE(oob[i].has_value());
                CHECK(*oob[i] == (2 * pos > votes ? Label::positive : Label::negative));
            }
        }
    }

    TEST_CASE("forest prediction does not depend on tree order")
    {
        const auto s = separable(80, 6, 0.0);
        auto m = rf_train(s, {}, 7);
        std::vector<Label> before;
        Rng rng(8);
        std::vector<std::vector<double>> probes;
        for (int i = 0; i < 100; ++i) probes.push_back({rng.uniform(-3, 3), rng.uniform(-3, 3)});
        for (const auto& p : probes) before.push_back(m.predict(p));
        std::reverse(m.trees.begin(), m.trees.end());
        std::swap(m.trees[0], m.trees[m.trees.size() / 2]);
        for (std::size_t i = 0; i < probes.size(); ++i) CHECK(m.predict(probes[i]) == before[i]);
    }

    TEST_CASE("svm on two points is the perpendicular bisector")
    {
        const auto s = make_set({{0.0, 3.0}, {2.0, 3.0}}, {0, 1});
        for (bool standardize : {true, false}) {
            SvmParams p;
            p.standardize = standardize;
            const auto m = svm_train(s, p, 0);
            for (double y : {-5.0, 0.0, 3.0, 10.0}) {
                CHECK(std::abs(m.decision(std::vector<double>{1.0, y})) < 1e-9);
                CHECK(m.predict(std::vector<double>{0.999, y}) == Label::negative);
                CHECK(m.predict(std::vector<double>{1.001, y}) == Label::positive);
            }
        }
    }

    TEST_CASE("svm separates a separable set and satisfies KKT")
    {
        const auto s = separable(200, 9);
        REQUIRE(line_search_separable(s));
        for (auto kernel : {KernelType::linear, KernelType::rbf}) {
            SvmParams p;
            p.c = 100;
            p.kernel = kernel;
            SvmTrainInfo info;
            const auto m = svm_train(s, p, 0, &info);
            CHECK(accuracy(m, s) == 1.0);
            CHECK(info.kkt_gap <= p.tolerance);
            CHECK(kkt_violation(m, s) <= 1e-3);
            for (double a : m.dual_coef) CHECK(std::abs(a) <= p.c + 1e-12);
        }
    }

    TEST_CASE("svm gamma rules")
    {
        const auto s = separable(40, 10);
        SvmParams p;
        p.kernel = KernelType::rbf;
        p.gamma_rule = GammaRule::inverse_dim;
        CHECK(svm_train(s, p, 0).gamma == 0.5);
        p.gamma_rule = GammaRule::value;
        p.gamma = 0.25;
        CHECK(svm_train(s, p, 0).gamma == 0.25);
        p.gamma_rule = GammaRule::inverse_dim_var;
        CHECK(svm_train(s, p, 0).gamma == doctest::Approx(0.5));  // standardized data has unit variance
        p.c = -1;
        CHECK_THROWS_AS(svm_train(s, p, 0), InputDomainError);
        CHECK_THROWS_AS(svm_train(make_set({{1.0}, {2.0}}, {0, 0}), {}, 0), InputDomainError);
    }

    TEST_CASE("duplicating a support vector keeps training predictions")
    {
        const auto s = separable(60, 11, 0.0);
        SvmParams p;
        p.c = 1;
        p.kernel = KernelType::rbf;
        p.tolerance = 1e-6;
        const auto m = svm_train(s, p, 0);
        REQUIRE_FALSE(m.support_indices.empty());
        const auto& dup = s[m.support_indices.front()];
        auto s2 = s;
        s2.add({"dup", dup.values, dup.label});
        const auto m2 = svm_train(s2, p, 0);
        for (const auto& r : s.rows()) CHECK(m2.predict(r.values) == m.predict(r.values));
    }

    TEST_CASE("stratified folds")
    {
        std::vector<std::vector<double>> x;
        std::vector<int> y;
        for (int i = 0; i < 12; ++i) {
            x.push_back({double(i)});
            y.push_back(i < 5);
        }
        const auto s = make_set(x, y);
        const auto f = stratified_folds(s, 6, 1);
        std::vector<int> size(6, 0), pos(6, 0);
        for (std::size_t i = 0; i < 12; ++i) {
            ++size[f[i]];
            pos[f[i]] += y[i];
        }
        for (int k = 0; k < 6; ++k) {
            CHECK(size[k] == 2);
            CHECK(pos[k] <= 1);
        }
        CHECK(f == stratified_folds(s, 6, 1));
        CHECK_THROWS_AS(stratified_folds(s, 13, 1), InputDomainError);
    }

    TEST_CASE("grid search matches an exhaustive recomputation")
    {
        const auto s = separable(12, 12, 0.0);
        for (const auto& grid : {two_cell_svm(), default_grid(Family::rf)}) {
            const auto res = grid_search_cv(s, grid, 6, 13);
            const auto o = oracle::cross_validate(s, grid, res.report.fold_of, 6, 13);
            CHECK(res.report.chosen == o.chosen);
            for (std::size_t c = 0; c < grid.cells.size(); ++c) {
                CHECK(res.report.cells[c].fold_accuracy == o.fold_accuracy[c]);
                CHECK(res.report.cells[res.report.chosen].mean_accuracy >= res.report.cells[c].mean_accuracy);
            }
            const auto again = grid_search_cv(s, grid, 6, 13);
            CHECK(again.report.chosen == res.report.chosen);
            CHECK(again.report.fold_of == res.report.fold_of);
        }
    }

    TEST_CASE("grid of one cell")
    {
        const auto s = separable(24, 14);
        Grid g{Family::rf, {ForestParams{}}};
        const auto res = grid_search_cv(s, g, 6, 0);
        CHECK(res.report.cells.size() == 1);
        CHECK(res.report.chosen == 0);
        CHECK(std::holds_alternative<RandomForestModel>(res.model));
    }

    TEST_CASE("single-class training folds fall back to a constant predictor")
    {
        // one positive among 12: five of six training folds still see it, one does not
        std::vector<std::vector<double>> x;
        std::vector<int> y;
        for (int i = 0; i < 12; ++i) {
            x.push_back({double(i)});
            y.push_back(i == 0);
        }
        const auto s = make_set(x, y);
        const auto res = grid_search_cv(s, Grid{Family::rf, {ForestParams{}}}, 6, 0);
        CHECK_FALSE(res.report.flags.empty());
    }

    TEST_CASE("default grids and grid files")
    {
        CHECK(default_grid(Family::rf).cells.size() == 12);
        CHECK(default_grid(Family::svm).cells.size() == 12);
        auto g = parse_grid("family = svm\nc = 1, 10\nkernel = linear, rbf\ngamma = inverse_dim, 0.05\n");
        CHECK(g.family == Family::svm);
        CHECK(g.cells.size() == 6);
        g = parse_grid("# forest\nfamily = rf\ntrees = 50\nmax_depth = none, 4\nmin_leaf = 2\n");
        REQUIRE(g.cells.size() == 2);
        CHECK(std::get<ForestParams>(g.cells[1]).max_depth == 4);
        CHECK(std::get<ForestParams>(g.cells[0]).trees == 50);
        CHECK_THROWS_AS(parse_grid("family = rf\nbogus = 1\n"), ConfigError);
        CHECK_THROWS_AS(parse_grid("family = tree\n"), ConfigError);
    }

    TEST_CASE("metrics")
    {
        CHECK(render_metrics({4, 1, 7, 0}) == "91.67% (tp:4 fn:1 tn:7 fp:0)");
        CHECK(render_metrics({3, 0, 3, 0}) == "100.00% (tp:3 fn:0 tn:3 fp:0)");
        CHECK(render_metrics({0, 0, 1, 0}) == "100.00% (tp:0 fn:0 tn:1 fp:0)");
        const std::vector<Label> t{Label::positive, Label::negative, Label::positive};
        const std::vector<Label> flipped{Label::negative, Label::positive, Label::negative};
        auto m = metrics_from(t, t);
        CHECK(m.accuracy() == 1.0);
        CHECK(m.fn + m.fp == 0);
        m = metrics_from(t, flipped);
        CHECK(m.accuracy() == 0.0);
        CHECK(m.total() == 3);
        CHECK_THROWS_AS(Metrics{}.accuracy(), InputDomainError);
    }

    TEST_CASE("model files round trip")
    {
        testing::TempDir dir("models");
        const auto s = separable(50, 15);
        const Model rf = rf_train(s, {}, 1);
        SvmParams p;
        p.kernel = KernelType::rbf;
        const Model svm = svm_train(s, p, 1);
        Rng rng(16);
        for (const auto& [name, m] : {std::pair{"rf.bin", rf}, std::pair{"svm.bin", svm}}) {
            save_model(m, dir / name);
            const auto back = load_model(dir / name);
            CHECK(back.index() == m.index());
            for (int i = 0; i < 50; ++i) {
                const std::vector<double> x{rng.uniform(-3, 3), rng.uniform(-3, 3)};
                CHECK(predict(back, x) == predict(m, x));
            }
        }
        std::ofstream(dir / "junk.bin") << "PDL1XYZ\0garbage";
        CHECK_THROWS_AS(load_model(dir / "junk.bin"), FormatError);
        std::filesystem::resize_file(dir / "svm.bin", 40);
        CHECK_THROWS_AS(load_model(dir / "svm.bin"), FormatError);
    }
}
