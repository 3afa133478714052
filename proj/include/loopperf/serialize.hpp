#pragma once

// JSON forms of programs, transformations and feature configs.

#include <string>

#include <json.hpp>

#include "loopperf/featurize.hpp"
#include "loopperf/loop_ir.hpp"
#include "loopperf/transform.hpp"

namespace loopperf {

using Json = nlohmann::json;

Json program_to_json(const Program& p);
Program program_from_json(const Json& j);

Json transformation_to_json(const Transformation& t);
Transformation transformation_from_json(const Json& j);

Json sequence_to_json(const TransformationSequence& s);
TransformationSequence sequence_from_json(const Json& j);

// Compact one-line form; also the deterministic tie-break key.
std::string sequence_key(const TransformationSequence& s);

Json feature_config_to_json(const FeatureConfig& c);
FeatureConfig feature_config_from_json(const Json& j);

}  // namespace loopperf
