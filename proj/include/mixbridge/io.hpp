#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "mixbridge/gmm.hpp"

namespace mixbridge {

using Json = nlohmann::ordered_json;

Json to_json(const Vector& v);
Json to_json(const Matrix& m);
Vector vector_from_json(const Json& j);
Matrix matrix_from_json(const Json& j);

/// {"weights": [...], "means": [[...]], "covs": [[[...]]]}
Json to_json(const GaussianMixture& mixture);
GaussianMixture mixture_from_json(const Json& j);

/// One point per line, comma separated, no header.
PointSet read_points_csv(const std::filesystem::path& path);
void write_points_csv(const std::filesystem::path& path, const PointSet& points);

Json read_json_file(const std::filesystem::path& path);
/// Write to a sibling temp file, then rename over the target.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_json_atomic(const std::filesystem::path& path, const Json& j);

/// Locale-independent shortest round-trip decimal formatting.
std::string format_double(double value);

}  // namespace mixbridge
