#pragma once

// JSON (de)serialization for configuration and result types. Readers reject
// unknown keys and report the dotted path of the offending field.

#include <json.hpp>
#include <string>

#include "esotune/control.hpp"
#include "esotune/plant.hpp"
#include "esotune/sim.hpp"

namespace esotune {

using Json = nlohmann::ordered_json;

/// Typed accessors that throw ConfigError naming `path.key`.
double json_number(const Json& obj, const std::string& key, const std::string& path);
double json_number_or(const Json& obj, const std::string& key, const std::string& path, double fallback);
std::string json_string_or(const Json& obj, const std::string& key, const std::string& path,
                           const std::string& fallback);
State2 json_state2(const Json& v, const std::string& path);
void json_require_object(const Json& v, const std::string& path);
void json_reject_unknown(const Json& obj, const std::string& path, std::initializer_list<const char*> known);

Json to_json(const PlantSpec& spec);
PlantSpec plant_spec_from_json(const Json& j, const std::string& path = "plant");

Json to_json(const SimConfig& cfg);
/// Missing fields keep the values of `base`.
SimConfig sim_config_from_json(const Json& j, const std::string& path = "sim", SimConfig base = {});

Json to_json(const EigenTriple& l);
EigenTriple eigen_triple_from_json(const Json& j, const std::string& path);

Json to_json(const ObserverGains& g);
Json to_json(const CriteriaVector& c);
CriteriaVector criteria_from_json(const Json& j, const std::string& path);

Json to_json(const CriterionWeights& w);
CriterionWeights weights_from_json(const Json& j, const std::string& path);

/// Observer section: {"omega_o": w} or {"lambda": [l1, l2, l3]}.
ObserverGains observer_from_json(const Json& j, const std::string& path = "observer");

}  // namespace esotune
