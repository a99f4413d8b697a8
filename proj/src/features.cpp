#include "pdl1/features.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <unordered_set>

namespace pdl1 {

void LabeledFeatureSet::add(FeatureRow row)
{
    if (rows_.empty() && dim_ == 0) dim_ = static_cast<int>(row.values.size());
    if (static_cast<int>(row.values.size()) != dim_) {
        throw InputDomainError("feature row '" + row.slide_id + "' has width " + std::to_string(row.values.size()) +
                               ", expected " + std::to_string(dim_));
    }
    for (const auto& r : rows_) {
        if (r.slide_id == row.slide_id) throw InputDomainError("duplicate slide_id '" + row.slide_id + "'");
    }
    rows_.push_back(std::move(row));
}

std::size_t LabeledFeatureSet::count(Label label) const
{
    return static_cast<std::size_t>(
        std::count_if(rows_.begin(), rows_.end(), [&](const FeatureRow& r) { return r.label == label; }));
}

LabeledFeatureSet LabeledFeatureSet::subset(const std::vector<std::size_t>& indices) const
{
    LabeledFeatureSet out(dim_);
    for (std::size_t i : indices) out.add(rows_.at(i));
    return out;
}

std::string format_real(double v)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_features(const LabeledFeatureSet& set, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "# slide_id\tlabel\t" << set.dim() << " values\n";
    for (const auto& r : set.rows()) {
        out << r.slide_id << '\t' << to_string(r.label);
        for (double v : r.values) out << '\t' << format_real(v);
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

LabeledFeatureSet read_features(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open feature file " + path.string());
    LabeledFeatureSet set;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string_view> f;
        std::string_view rest(line);
        while (true) {
            const auto pos = rest.find('\t');
            f.push_back(rest.substr(0, pos));
            if (pos == std::string_view::npos) break;
            rest.remove_prefix(pos + 1);
        }
        if (f.size() < 3) throw FormatError("feature line needs slide_id, label and values", lineno);
        FeatureRow row;
        row.slide_id = std::string(f[0]);
        try {
            row.label = parse_label(f[1]);
        } catch (const InputDomainError& e) {
            throw FormatError(e.what(), lineno);
        }
        for (std::size_t i = 2; i < f.size(); ++i) {
            double v = 0;
            const auto res = std::from_chars(f[i].data(), f[i].data() + f[i].size(), v);
            if (res.ec != std::errc{} || res.ptr != f[i].data() + f[i].size()) {
                throw FormatError("bad number '" + std::string(f[i]) + "'", lineno);
            }
            row.values.push_back(v);
        }
        try {
            set.add(std::move(row));
        } catch (const InputDomainError& e) {
            throw FormatError(e.what(), lineno);
        }
    }
    return set;
}

}  // namespace pdl1
