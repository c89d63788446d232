#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace wafertopo {

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the manifest's directory
  std::string label;
  std::string split = "all";  // train | test | all
  bool operator==(const ManifestEntry&) const = default;
};

/// CSV with header `id,path,label,split` (UTF-8, LF line endings).
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;  // directory paths are resolved against

  std::filesystem::path resolve(const ManifestEntry& e) const { return base_dir / e.path; }
  std::vector<std::string> ids() const;
  std::vector<std::string> labels() const;
};

// Throws ValidationError on a malformed header, an unknown split or a duplicate id.
DatasetManifest read_manifest(const std::filesystem::path& csv);
std::string format_manifest(const DatasetManifest& m);
void write_manifest(const std::filesystem::path& csv, const DatasetManifest& m);

}  // namespace wafertopo
