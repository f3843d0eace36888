#include "meanviab/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace meanviab {

std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string path_to_csv(const Path& p) {
  std::ostringstream os;
  os << "t";
  for (Index r = 0; r < p.dim(); ++r) os << ",x" << (r + 1);
  os << "\n";
  for (Index i = 0; i <= p.grid.num_steps(); ++i) {
    os << format_full(p.grid.time(i));
    for (Index r = 0; r < p.dim(); ++r) os << "," << format_full(p.values(r, i));
    os << "\n";
  }
  return os.str();
}

std::string ensemble_to_csv(const PathEnsemble& e) {
  std::ostringstream os;
  os << "t";
  for (std::size_t j = 0; j < e.size(); ++j)
    for (Index r = 0; r < e.dimension; ++r) os << ",x" << (r + 1) << "_p" << j;
  os << "\n";
  for (Index i = 0; i <= e.grid.num_steps(); ++i) {
    os << format_full(e.grid.time(i));
    for (std::size_t j = 0; j < e.size(); ++j)
      for (Index r = 0; r < e.dimension; ++r)
        os << "," << format_full(e.paths[j].values(r, i));
    os << "\n";
  }
  return os.str();
}

std::string deviation_profile_to_csv(const DeviationProfile& prof) {
  std::ostringstream os;
  os << "s,deviation,stderr\n";
  for (std::size_t i = 0; i < prof.times.size(); ++i)
    os << format_full(prof.times[i]) << "," << format_full(prof.deviations[i]) << ","
       << format_full(prof.mc_standard_errors[i]) << "\n";
  return os.str();
}

std::string comparison_to_csv(const ComparisonReport& rep) {
  std::ostringstream os;
  os << "t,x_t,v_minus,value,stderr,v_plus\n";
  for (const auto& r : rep.rows)
    os << format_full(r.t) << "," << format_full(r.x_at_t) << "," << format_full(r.v_minus)
       << "," << format_full(r.value) << "," << format_full(r.stderr_) << ","
       << format_full(r.v_plus) << "\n";
  return os.str();
}

json to_json(const ValidationReport& rep) {
  return json{{"check", rep.check},
              {"pass", rep.pass},
              {"samples", rep.samples},
              {"max_lipschitz_ratio", rep.max_lipschitz_ratio},
              {"max_magnitude", rep.max_magnitude},
              {"max_time_ratio", rep.max_time_ratio},
              {"threshold", rep.threshold},
              {"witness", rep.witness}};
}

json to_json(const MomentBoundReport& rep) {
  return json{{"deltas", rep.deltas},       {"moments", rep.moments},
              {"stderrs", rep.stderrs},     {"slope", rep.slope},
              {"fitted_C", rep.fitted_C},   {"sigma_degenerate", rep.sigma_degenerate},
              {"pass", rep.pass}};
}

json to_json(const TangencyCertificate& cert) {
  return json{{"epsilon", cert.epsilon},
              {"delta", cert.delta},
              {"control_index", cert.control_index},
              {"achieved_distance", cert.achieved_distance},
              {"perturbation_energy", cert.perturbation_energy},
              {"mc_stderr", cert.mc_stderr}};
}

json to_json(const TangencyResult& res) {
  json trace = json::array();
  for (const auto& a : res.trace)
    trace.push_back(json{{"delta", a.delta},
                         {"direction", a.direction_index},
                         {"pert", a.pert_index},
                         {"distance", a.distance},
                         {"stderr", a.stderr_},
                         {"energy", a.energy},
                         {"success", a.success}});
  return json{{"found", res.found}, {"certificate", to_json(res.certificate)},
              {"trace", trace}};
}

json to_json(const DerivativeEstimate& est) {
  json ladder = json::array();
  for (const auto& e : est.ladder)
    ladder.push_back(json{{"epsilon", e.epsilon},
                          {"value", e.value},
                          {"stderr", e.stderr_},
                          {"delta", e.delta},
                          {"direction", e.direction_index},
                          {"pert", e.pert_index}});
  return json{{"value", est.value}, {"mc_stderr", est.mc_stderr}, {"ladder", ladder}};
}

json to_json(const EquivalenceReport& rep) {
  return json{{"epi_estimate", rep.epi_estimate},
              {"epi_stderr", rep.epi_stderr},
              {"derivative_nonpositive", rep.derivative_nonpositive},
              {"tangency_found", rep.tangency_found},
              {"tol_used", rep.tol_used},
              {"agree", rep.agree},
              {"derivative", to_json(rep.derivative)},
              {"tangency", to_json(rep.tangency)}};
}

json to_json(const DeviationProfile& prof) {
  return json{{"times", prof.times},
              {"deviations", prof.deviations},
              {"mc_standard_errors", prof.mc_standard_errors}};
}

json to_json(const ViabilityScore& score) {
  return json{{"score", score.score},
              {"best_control", score.best_control},
              {"per_control_sup", score.per_control_sup},
              {"profile", to_json(score.profile)}};
}

json to_json(const NecessityReport& rep) {
  return json{{"premise_ok", rep.premise_ok},
              {"score", rep.score},
              {"best_control", rep.best_control},
              {"delta", rep.delta},
              {"fitted_C", rep.fitted_C},
              {"moment_slope", rep.moment_slope},
              {"certificate", to_json(rep.certificate)},
              {"certificate_ok", rep.certificate_ok},
              {"pass", rep.pass},
              {"note", rep.note}};
}

namespace {
json to_json(const ConditionCheck& c) {
  return json{{"pass", c.pass}, {"slack", c.slack}, {"detail", c.detail}};
}
}  // namespace

json to_json(const ConditionReport& rep) {
  return json{{"i_stopping_time", to_json(rep.stopping_time)},
              {"ii_delay", to_json(rep.delay)},
              {"iii_energy", to_json(rep.energy)},
              {"iv_moments", to_json(rep.moments)},
              {"v_dynamics", to_json(rep.dynamics)},
              {"vi_target", to_json(rep.target)},
              {"all_pass", rep.all_pass()}};
}

json to_json(const ApproximateSolution& sol) {
  json breakpoints = json::array();
  for (Index k : sol.delay.breakpoints)
    breakpoints.push_back(sol.ensemble.grid.time(k));
  return json{{"epsilon", sol.epsilon},
              {"start_time", sol.start_time},
              {"y", sol.y},
              {"tau", sol.tau},
              {"complete", sol.complete},
              {"steps", sol.steps_taken},
              {"breakpoints", breakpoints},
              {"control_cells", sol.control_cells},
              {"diagnostic", sol.diagnostic},
              {"seed", sol.seed},
              {"n_paths", sol.ensemble.size()},
              {"conditions", to_json(sol.condition_report)}};
}

json to_json(const GapReport& rep) {
  return json{{"times", rep.times}, {"gaps", rep.gaps}, {"final_gap", rep.final_gap}};
}

json to_json(const ValueEstimate& est) {
  return json{{"value", est.value},
              {"stderr", est.stderr_},
              {"best_control", est.best_control},
              {"family_size", est.family_size},
              {"n_paths", est.n_paths},
              {"seed", est.seed}};
}

json to_json(const DppReport& rep) {
  return json{{"value_direct", rep.value_direct},
              {"value_nested", rep.value_nested},
              {"gap", rep.gap},
              {"combined_stderr", rep.combined_stderr},
              {"allowance", rep.allowance},
              {"pass", rep.pass}};
}

json to_json(const SemisolutionReport& rep) {
  json pts = json::array();
  for (const auto& p : rep.points) {
    const char* v = p.verdict == Verdict::pass ? "pass"
                    : p.verdict == Verdict::fail ? "fail"
                                                 : "inconclusive";
    pts.push_back(json{{"t", p.t},
                       {"x_t", p.x_at_t},
                       {"estimate", p.estimate},
                       {"stderr", p.stderr_},
                       {"verdict", v}});
  }
  return json{{"role", rep.role},
              {"points", pts},
              {"terminal_ok", rep.terminal_ok},
              {"terminal_worst", rep.terminal_worst},
              {"n_pass", rep.n_pass},
              {"n_fail", rep.n_fail},
              {"n_inconclusive", rep.n_inconclusive},
              {"overall", rep.overall}};
}

json to_json(const ComparisonReport& rep) {
  json rows = json::array();
  for (const auto& r : rep.rows)
    rows.push_back(json{{"t", r.t},
                        {"x_t", r.x_at_t},
                        {"v_minus", r.v_minus},
                        {"value", r.value},
                        {"stderr", r.stderr_},
                        {"v_plus", r.v_plus}});
  return json{{"rows", rows},
              {"max_lower_violation", rep.max_lower_violation},
              {"max_upper_violation", rep.max_upper_violation},
              {"max_sub_over_super", rep.max_sub_over_super},
              {"pass", rep.pass}};
}

json to_json(const OracleConsistencyReport& rep) {
  return json{{"id", rep.id},
              {"oracle", rep.oracle},
              {"brute_force_value", rep.brute_force_value},
              {"brute_force_stderr", rep.brute_force_stderr},
              {"optimal_control_value", rep.optimal_control_value},
              {"optimal_control_stderr", rep.optimal_control_stderr},
              {"clip_count", rep.clip_count},
              {"pass_value", rep.pass_value},
              {"pass_optimal", rep.pass_optimal},
              {"pass_clipping", rep.pass_clipping},
              {"pass", rep.pass}};
}

json report_envelope(const std::string& command, std::uint64_t seed, bool pass, json body) {
  return json{{"schema_version", "1"},
              {"command", command},
              {"seed", seed},
              {"pass", pass},
              {"body", std::move(body)}};
}

bool validate_against_schema(const json& doc, const json& schema, std::string* error) {
  const auto fail = [&](const std::string& msg) {
    if (error) *error = msg;
    return false;
  };
  if (schema.contains("type")) {
    const std::string ty = schema.at("type").get<std::string>();
    const bool ok = (ty == "object" && doc.is_object()) || (ty == "array" && doc.is_array()) ||
                    (ty == "string" && doc.is_string()) ||
                    (ty == "number" && doc.is_number()) ||
                    (ty == "integer" && doc.is_number_integer()) ||
                    (ty == "boolean" && doc.is_boolean()) || (ty == "null" && doc.is_null());
    if (!ok) return fail("type mismatch: expected " + ty);
  }
  if (schema.contains("required")) {
    for (const auto& key : schema.at("required"))
      if (!doc.contains(key.get<std::string>()))
        return fail("missing required key '" + key.get<std::string>() + "'");
  }
  if (schema.contains("properties") && doc.is_object()) {
    for (const auto& [key, sub] : schema.at("properties").items())
      if (doc.contains(key))
        if (!validate_against_schema(doc.at(key), sub, error)) return false;
  }
  if (schema.contains("items") && doc.is_array()) {
    for (const auto& el : doc)
      if (!validate_against_schema(el, schema.at("items"), error)) return false;
  }
  return true;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << content;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace meanviab
