#pragma once

#include "vrkg/tensor.hpp"

#include <json.hpp>

namespace vrkg {

/// {"rows": r, "cols": c, "data": [row-major values]}. Doubles round-trip
/// exactly through nlohmann's shortest representation.
nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace vrkg
