#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "meanviab/approx.hpp"
#include "meanviab/bench.hpp"
#include "meanviab/validate.hpp"

namespace meanviab {

using json = nlohmann::ordered_json;

// CSV writers. Numbers are printed with 17 significant digits so files
// round-trip doubles exactly and are byte-stable across runs.
std::string format_full(double v);

std::string path_to_csv(const Path& p);
std::string ensemble_to_csv(const PathEnsemble& e);
std::string deviation_profile_to_csv(const DeviationProfile& prof);
std::string comparison_to_csv(const ComparisonReport& rep);

json to_json(const ValidationReport& rep);
json to_json(const MomentBoundReport& rep);
json to_json(const TangencyCertificate& cert);
json to_json(const TangencyResult& res);
json to_json(const DerivativeEstimate& est);
json to_json(const EquivalenceReport& rep);
json to_json(const DeviationProfile& prof);
json to_json(const ViabilityScore& score);
json to_json(const NecessityReport& rep);
json to_json(const ConditionReport& rep);
json to_json(const ApproximateSolution& sol);  // without the ensemble payload
json to_json(const GapReport& rep);
json to_json(const ValueEstimate& est);
json to_json(const DppReport& rep);
json to_json(const SemisolutionReport& rep);
json to_json(const ComparisonReport& rep);
json to_json(const OracleConsistencyReport& rep);

/// Envelope every CLI report is wrapped in; validated against the shipped
/// schema (docs/report.schema.json).
json report_envelope(const std::string& command, std::uint64_t seed, bool pass, json body);

/// Minimal structural JSON-schema check (type / required / properties /
/// items); enough to hold reports to the shipped schema.
bool validate_against_schema(const json& doc, const json& schema, std::string* error = nullptr);

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace meanviab
