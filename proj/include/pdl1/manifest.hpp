#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pdl1/common.hpp"

namespace pdl1 {

struct ManifestEntry {
    std::string slide_id;
    std::filesystem::path path;
    Label label = Label::negative;
    DatasetId dataset = DatasetId::internal;
    std::optional<std::filesystem::path> artifact_mask;

    bool operator==(const ManifestEntry&) const = default;
};

/// Slide list. On disk: one tab-separated record per line,
///
///     slide_id <TAB> path <TAB> label <TAB> dataset_id [<TAB> artifact_mask_path]
///
/// label is positive|negative, dataset_id internal|external. Blank lines and
/// lines starting with '#' are ignored. Relative paths are kept as written and
/// resolved against the manifest's directory by resolve().
struct DatasetManifest {
    std::filesystem::path base_dir;
    std::vector<ManifestEntry> entries;

    std::filesystem::path resolve(const std::filesystem::path& p) const;
    const ManifestEntry& find(const std::string& slide_id) const;
    /// Throws FormatError on a duplicate slide_id.
    void add(ManifestEntry e);
};

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);

}  // namespace pdl1
