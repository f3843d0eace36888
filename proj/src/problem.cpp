#include "meanviab/problem.hpp"

#include <nlohmann/json.hpp>

namespace meanviab {

using json = nlohmann::ordered_json;

Coefficients make_coefficients(const std::string& family, const CoefficientParams& prm,
                               Index dimension, double declared_L_b) {
  Coefficients c;
  c.declared_L_b = declared_L_b;
  c.family = family;
  const Index d = dimension;

  if (family == "controlled_drift") {
    c.b = [prm](double, const PathSlice&, double a, Eigen::Ref<Vector> out) {
      out.setConstant(prm.drift_scale * a + prm.drift_offset);
    };
    c.sigma = [prm](double, const PathSlice&, double, Eigen::Ref<Matrix> out) {
      out.setZero();
      out.diagonal().setConstant(prm.vol);
    };
  } else if (family == "controlled_vol") {
    c.b = [](double, const PathSlice&, double, Eigen::Ref<Vector> out) { out.setZero(); };
    c.sigma = [prm](double, const PathSlice&, double a, Eigen::Ref<Matrix> out) {
      out.setZero();
      out.diagonal().setConstant(prm.vol_min + a * (prm.vol_max - prm.vol_min));
    };
  } else if (family == "affine") {
    c.b = [prm](double, const PathSlice& x, double, Eigen::Ref<Vector> out) {
      out = Vector::Constant(x.dim(), prm.drift_offset) + prm.drift_slope * x.back();
    };
    c.sigma = [prm](double, const PathSlice&, double, Eigen::Ref<Matrix> out) {
      out.setZero();
      out.diagonal().setConstant(prm.vol);
    };
  } else if (family == "sine") {
    c.b = [prm](double, const PathSlice& x, double, Eigen::Ref<Vector> out) {
      out = (prm.freq * x.back().array()).sin() * prm.drift_scale;
    };
    c.sigma = [prm](double, const PathSlice&, double, Eigen::Ref<Matrix> out) {
      out.setZero();
      out.diagonal().setConstant(prm.vol);
    };
  } else {
    throw std::invalid_argument("make_coefficients: unknown family '" + family + "'");
  }
  (void)d;
  return c;
}

namespace {

CoefficientParams params_from_json(const json& j) {
  CoefficientParams p;
  if (j.contains("drift_scale")) p.drift_scale = j.at("drift_scale").get<double>();
  if (j.contains("drift_offset")) p.drift_offset = j.at("drift_offset").get<double>();
  if (j.contains("drift_slope")) p.drift_slope = j.at("drift_slope").get<double>();
  if (j.contains("vol")) p.vol = j.at("vol").get<double>();
  if (j.contains("vol_min")) p.vol_min = j.at("vol_min").get<double>();
  if (j.contains("vol_max")) p.vol_max = j.at("vol_max").get<double>();
  if (j.contains("freq")) p.freq = j.at("freq").get<double>();
  return p;
}

TerminalCost terminal_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const double bound = j.value("bound", 1e6);
  if (kind == "endpoint") {
    // h = x_T (first coordinate)
    return TerminalCost([](const PathSlice& x) { return x.back()(0); }, bound);
  }
  if (kind == "neg_endpoint") {
    return TerminalCost([](const PathSlice& x) { return -x.back()(0); }, bound);
  }
  if (kind == "endpoint_sq") {
    return TerminalCost([](const PathSlice& x) { return x.back()(0) * x.back()(0); }, bound);
  }
  if (kind == "abs_increment") {
    // |x_T - x_{T/2}|
    return TerminalCost(
        [](const PathSlice& x) {
          const Index half = x.grid().num_steps() / 2;
          return (x.back() - x.col(half)).norm();
        },
        bound);
  }
  throw std::invalid_argument("terminal_cost: unknown kind '" + kind + "'");
}

}  // namespace

ProblemSpec problem_from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  ProblemSpec spec;
  spec.grid = TimeGrid(j.at("horizon").get<double>(), j.at("num_steps").get<Index>());
  spec.dimension = j.value("dimension", Index{1});

  const auto& jc = j.at("control_space");
  spec.control_space = ControlSpace(jc.at("lower").get<double>(), jc.at("upper").get<double>(),
                                    jc.at("grid_points").get<Index>());

  const auto& jf = j.at("coefficients");
  spec.coefficients = make_coefficients(jf.at("family").get<std::string>(),
                                        params_from_json(jf), spec.dimension,
                                        jf.value("declared_L_b", 1.0));

  spec.terminal_cost = terminal_from_json(j.at("terminal_cost"));

  spec.anchor = AnchorTriple::zero(spec.dimension);
  if (j.contains("anchor")) spec.anchor.a0 = j.at("anchor").value("a0", 0.0);

  if (j.contains("target_set")) {
    const auto& jt = j.at("target_set");
    const std::string kind = jt.at("kind").get<std::string>();
    if (kind == "half_line_nonpositive")
      spec.target_set = TargetSet::nonpositive();
    else if (kind == "closed_interval")
      spec.target_set = TargetSet::interval(jt.at("lower").get<double>(),
                                            jt.at("upper").get<double>());
    else
      throw std::invalid_argument("target_set: unknown kind '" + kind + "'");
  }

  spec.validate_shapes();
  return spec;
}

std::string problem_to_json(const ProblemSpec& spec, const std::string& id) {
  json j;
  j["id"] = id;
  j["horizon"] = spec.grid.horizon();
  j["num_steps"] = spec.grid.num_steps();
  j["dimension"] = spec.dimension;
  j["control_space"] = {{"lower", spec.control_space.lower},
                        {"upper", spec.control_space.upper},
                        {"grid_points", spec.control_space.grid_points}};
  j["coefficients"] = {{"family", spec.coefficients.family},
                       {"declared_L_b", spec.coefficients.declared_L_b}};
  j["terminal_cost"] = {{"bound", spec.terminal_cost.bound()}};
  j["anchor"] = {{"a0", spec.anchor.a0}};
  j["target_set"] = {
      {"kind", spec.target_set.kind == TargetSet::Kind::half_line_nonpositive
                   ? "half_line_nonpositive"
                   : "closed_interval"}};
  return j.dump(2);
}

}  // namespace meanviab
