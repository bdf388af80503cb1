#pragma once
#include <optional>
#include <string>

#include <json.hpp>

#include "dynbp/model.hpp"
#include "dynbp/region_graph.hpp"
#include "dynbp/temporal.hpp"

namespace dynbp {

// one model document: static factors, transition factors, optional regions
struct LoadedModel {
  std::vector<Variable> variables;
  std::vector<FactorTable> factors;
  std::vector<TemporalFactor> temporal_factors;
  std::optional<RegionGraph> regions;  // counting numbers left for the caller
};

LoadedModel parse_model_json(const std::string& text);
LoadedModel load_model_file(const std::string& path);

// deterministic serialization: sorted keys, no whitespace, 17-significant-digit
// table entries; canonical text is a fixed point of load-then-save
std::string model_to_canonical_json(const LoadedModel& m);
void save_model_file(const std::string& path, const LoadedModel& m);

// same canonical rules applied to any document (used for run manifests)
std::string canonical_json_text(const nlohmann::json& j);
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace dynbp
