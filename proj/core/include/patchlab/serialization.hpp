#pragma once

// JSON round-trips for configs, models and reports. Parsing is strict:
// unknown keys are rejected with ConfigError naming the offending key.
// nlohmann::json keeps object keys sorted, so dumps are stable.

#include <initializer_list>
#include <string>

#include <json.hpp>

#include "patchlab/das.hpp"
#include "patchlab/illusion.hpp"
#include "patchlab/rome.hpp"
#include "patchlab/separability.hpp"

namespace patchlab {

using Json = nlohmann::json;

/// Throws ConfigError if `j` is not an object or has a key outside `allowed`.
void require_keys(const Json& j, std::initializer_list<const char*> allowed,
                  const std::string& context);

Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j, const std::string& context);
/// Row-major list of rows.
Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j, const std::string& context);

Json to_json(const SyntheticModelConfig& c);
SyntheticModelConfig model_config_from_json(const Json& j);

Json to_json(const SyntheticPathwayModel& m);
SyntheticPathwayModel model_from_json(const Json& j);

Json to_json(const InterventionSpec& s);
InterventionSpec intervention_from_json(const Json& j);

Json to_json(const DasConfig& c);
DasConfig das_config_from_json(const Json& j);

Json to_json(const FlddSummary& s);
Json to_json(const ProjectionSpread& s);
Json to_json(const IllusionReport& r);

Json to_json(const SubspaceApproxResult& r);
Json to_json(const RegressionFit& f);
Json to_json(const HeldOutFit& f);
Json to_json(const LemmaCheck& c);

/// "%.17g".
std::string format_real(double x);

}  // namespace patchlab
