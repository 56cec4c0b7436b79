#include "toposeg/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "toposeg/error.hpp"

namespace toposeg {

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  const std::filesystem::path base = path.parent_path();

  std::vector<ManifestEntry> entries;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);

    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 3 || fields[0].empty()) {
      throw FormatError(where + ": expected 3 tab-separated fields (id, image, mask)");
    }
    if (!ids.insert(fields[0]).second) throw FormatError(where + ": duplicate id '" + fields[0] + "'");

    ManifestEntry entry{fields[0], std::filesystem::path(fields[1]), std::filesystem::path(fields[2])};
    for (auto* p : {&entry.image, &entry.mask}) {
      if (p->is_relative()) *p = base / *p;
      if (!std::filesystem::exists(*p)) {
        throw IoError(where + ": referenced file '" + p->string() + "' does not exist");
      }
    }
    entries.push_back(std::move(entry));
  }
  if (in.bad()) throw IoError("read failure on manifest '" + path.string() + "'");
  return entries;
}

}  // namespace toposeg
