#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace toposeg {

struct ManifestEntry {
  std::string id;
  std::filesystem::path image;
  std::filesystem::path mask;
};

/// Reads a tab-separated `id<TAB>image_path<TAB>mask_path` manifest.
///
/// Blank lines and lines starting with '#' are skipped. Relative paths are
/// resolved against the manifest's directory. Missing files and duplicate ids
/// raise an error naming the line.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

}  // namespace toposeg
