#pragma once

#include <string>
#include <vector>

namespace batchens {

// Shortest round-trippable decimal representation (%.17g); the single
// formatting used for every double that reaches an output file, so reruns
// are byte-identical.
std::string format_double(double v);

// Writes "# schema: <schema> v1", the header row, then the data rows.
// Callers pre-format every cell (numerics via format_double). Rows must all
// match the header width. Throws IoError on filesystem failure.
void write_csv(const std::string& path, const std::string& schema,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace batchens
