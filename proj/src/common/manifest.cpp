#include "wafertopo/manifest.hpp"

#include <unordered_set>

#include "wafertopo/error.hpp"
#include "wafertopo/io.hpp"

namespace wafertopo {

std::vector<std::string> DatasetManifest::ids() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.id);
  return out;
}

std::vector<std::string> DatasetManifest::labels() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.label);
  return out;
}

DatasetManifest read_manifest(const std::filesystem::path& csv) {
  const auto bytes = read_file(csv);
  const auto rows = parse_csv({reinterpret_cast<const char*>(bytes.data()), bytes.size()});
  if (rows.empty() || rows[0] != CsvRow{"id", "path", "label", "split"})
    throw ValidationError("manifest " + csv.string() + ": expected header id,path,label,split");
  DatasetManifest m;
  m.base_dir = csv.parent_path();
  std::unordered_set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 4)
      throw ValidationError("manifest " + csv.string() + " line " + std::to_string(r + 1) + ": expected 4 fields");
    ManifestEntry e{row[0], row[1], row[2], row[3]};
    if (e.split != "train" && e.split != "test" && e.split != "all")
      throw ValidationError("manifest line " + std::to_string(r + 1) + ": unknown split '" + e.split + "'");
    if (!seen.insert(e.id).second) throw ValidationError("manifest: duplicate id '" + e.id + "'");
    m.entries.push_back(std::move(e));
  }
  return m;
}

std::string format_manifest(const DatasetManifest& m) {
  std::string out = format_csv_row({"id", "path", "label", "split"});
  for (const auto& e : m.entries) out += format_csv_row({e.id, e.path, e.label, e.split});
  return out;
}

void write_manifest(const std::filesystem::path& csv, const DatasetManifest& m) {
  write_text_atomic(csv, format_manifest(m));
}

}  // namespace wafertopo
