#include "batchens/csv.hpp"

#include <cstdio>
#include <fstream>

#include "batchens/error.hpp"

namespace batchens {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv(const std::string& path, const std::string& schema,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);  // binary: no platform newline translation
  if (!out) throw IoError("cannot open " + path + " for writing");

  out << "# schema: " << schema << " v1\n";
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i > 0) out << ',';
    out << header[i];
  }
  out << '\n';
  for (const auto& row : rows) {
    if (row.size() != header.size()) {
      throw ArgumentError("csv row width " + std::to_string(row.size()) +
                          " does not match header width " +
                          std::to_string(header.size()));
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i > 0) out << ',';
      out << row[i];
    }
    out << '\n';
  }
  if (!out.good()) throw IoError("write failed for " + path);
}

}  // namespace batchens
