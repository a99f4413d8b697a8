#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pdl1/common.hpp"

namespace pdl1 {

struct FeatureRow {
    std::string slide_id;
    std::vector<double> values;
    Label label = Label::negative;
};

/// Rows of equal width with unique slide ids.
class LabeledFeatureSet {
public:
    LabeledFeatureSet() = default;
    explicit LabeledFeatureSet(int dim) : dim_(dim) {}

    int dim() const { return dim_; }
    std::size_t size() const { return rows_.size(); }
    bool empty() const { return rows_.empty(); }
    const FeatureRow& operator[](std::size_t i) const { return rows_[i]; }
    const std::vector<FeatureRow>& rows() const { return rows_; }

    /// Throws InputDomainError on a width mismatch or duplicate slide id.
    void add(FeatureRow row);
    std::size_t count(Label label) const;
    LabeledFeatureSet subset(const std::vector<std::size_t>& indices) const;

private:
    int dim_ = 0;
    std::vector<FeatureRow> rows_;
};

/// Feature file: one tab-separated line per slide,
///
///     slide_id <TAB> label <TAB> v_1 <TAB> ... <TAB> v_d
///
/// '#' lines are comments. Values are written in shortest round-trip form.
void write_features(const LabeledFeatureSet& set, const std::filesystem::path& path);
LabeledFeatureSet read_features(const std::filesystem::path& path);

std::string format_real(double v);

}  // namespace pdl1
