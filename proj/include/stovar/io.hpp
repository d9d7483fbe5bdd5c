#pragma once

#include <string>

#include <json.hpp>

#include "stovar/gridmodel.hpp"

namespace stovar::io {

/// Parse a system description document. Resolves bus ids and noise tags to
/// indices, validates the schema, and freezes the layout (build_layout).
grid::SystemModel parse_system(const nlohmann::json& doc);

/// Load and parse a system description file.
grid::SystemModel load_system(const std::string& path);

/// Serialize a model back to its document form. parse(serialize(parse(f)))
/// equals parse(f) on every field.
nlohmann::json serialize_system(const grid::SystemModel& model);

/// Multiply the stationary sigma of every noise process by `factor`:
/// OU diffusion b scales linearly; Weibull scales its lambda (which scales
/// sigma and the implied mean together).
void scale_noise(grid::SystemModel& model, double factor);

/// Round-trippable decimal form of a double: 17 significant digits, trailing
/// zeros stripped by the %g conversion.
std::string format_double(double v);

/// Write one CSV file: a fixed header line, then rows of pre-formatted cells.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// Write a JSON document with stable key order and a trailing newline.
void write_json(const std::string& path, const nlohmann::json& doc);

/// Read a whole JSON file.
nlohmann::json read_json(const std::string& path);

/// Read a CSV written by write_csv back into header + cell rows.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
CsvTable read_csv(const std::string& path);

}  // namespace stovar::io
