#include "pdl1/manifest.hpp"

#include <fstream>
#include <sstream>

namespace pdl1 {

namespace {

std::vector<std::string> split_tabs(const std::string& line)
{
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        fields.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return fields;
}

}  // namespace

std::filesystem::path DatasetManifest::resolve(const std::filesystem::path& p) const
{
    return p.is_absolute() ? p : base_dir / p;
}

const ManifestEntry& DatasetManifest::find(const std::string& slide_id) const
{
    for (const auto& e : entries) {
        if (e.slide_id == slide_id) return e;
    }
    throw InputDomainError("slide_id not in manifest: " + slide_id);
}

void DatasetManifest::add(ManifestEntry e)
{
    for (const auto& other : entries) {
        if (other.slide_id == e.slide_id) throw FormatError("duplicate slide_id '" + e.slide_id + "'");
    }
    entries.push_back(std::move(e));
}

DatasetManifest read_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    DatasetManifest m;
    m.base_dir = path.parent_path();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto f = split_tabs(line);
        if (f.size() < 4 || f.size() > 5) {
            throw FormatError("expected 4 or 5 tab-separated fields, got " + std::to_string(f.size()), lineno);
        }
        ManifestEntry e;
        e.slide_id = f[0];
        if (e.slide_id.empty()) throw FormatError("empty slide_id", lineno);
        if (f[1].empty()) throw FormatError("empty path", lineno);
        e.path = f[1];
        try {
            e.label = parse_label(f[2]);
            e.dataset = parse_dataset_id(f[3]);
        } catch (const InputDomainError& err) {
            throw FormatError(err.what(), lineno);
        }
        if (f.size() == 5 && !f[4].empty() && f[4] != "-") e.artifact_mask = f[4];
        try {
            m.add(std::move(e));
        } catch (const FormatError& err) {
            throw FormatError(err.what(), lineno);
        }
    }
    return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "# slide_id\tpath\tlabel\tdataset_id\tartifact_mask\n";
    for (const auto& e : m.entries) {
        out << e.slide_id << '\t' << e.path.generic_string() << '\t' << to_string(e.label) << '\t'
            << to_string(e.dataset) << '\t' << (e.artifact_mask ? e.artifact_mask->generic_string() : "-") << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace pdl1
