// meanviab: command-line laboratory for mean-viability and path-dependent
// HJB experiments. Every run is driven by a single --seed; reports land in
// --out as JSON (schema docs/report.schema.json) plus CSV data files.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "meanviab/io.hpp"
#include "meanviab/rng.hpp"

namespace fs = std::filesystem;
using namespace meanviab;

namespace {

struct RunConfig {
  std::string id = "B1";
  std::string problem_path;  // JSON problem overrides --id when given
  std::size_t paths = 10000;
  std::uint64_t seed = 0;
  int threads = 1;
  double eps = 0.1;
  double tol = 0.05;
  double t = 0.0;
  double x0 = 0.0;
  bool x0_set = false;
  double y = 0.0;
  bool y_set = false;
  double c = 0.1;
  double s = 0.0;
  double control = -1.0;
  int family = 0;  // override the A-grid size for control families
  int points = 10;
  std::size_t num_steps = 128;
  double horizon = 1.0;
  std::string out;
  std::string mode = "sup";
  std::string role;
  bool equivalence = false;
  bool gap = false;
};

std::string out_dir(const RunConfig& cfg) {
  if (!cfg.out.empty()) return cfg.out;
  if (const char* env = std::getenv("MEANVIAB_OUT")) return env;
  return "out";
}

struct Problem {
  ProblemSpec spec;
  std::optional<Benchmark> bench;  // present when loaded by benchmark id
  Path x0;
  double t0 = 0.0;
};

Problem load_problem(const RunConfig& cfg) {
  Problem p;
  const TimeGrid grid(cfg.horizon, static_cast<Index>(cfg.num_steps));
  if (!cfg.problem_path.empty()) {
    p.spec = problem_from_json(read_file(cfg.problem_path));
  } else if (cfg.id == "S1") {
    p.spec = sine_drift_problem(grid);
  } else {
    p.bench = benchmark_by_id(cfg.id, grid);
    p.spec = p.bench->spec;
  }
  if (cfg.family > 0) p.spec.control_space.grid_points = cfg.family;

  Vector start = p.bench && !cfg.x0_set ? p.bench->x0
                                        : Vector::Constant(p.spec.dimension, cfg.x0);
  p.x0 = Path::constant(p.spec.grid, start);
  p.t0 = p.spec.grid.snap(cfg.t);
  return p;
}

CandidateFunction default_candidate(const Problem& p) {
  if (p.bench) return p.bench->oracle_candidate();
  // JSON / fixture problems fall back to the first coordinate endpoint.
  CandidateFunction c;
  c.v = [](double, const PathSlice& x) { return x.back()(0); };
  c.declared_L = 1.0;
  c.lower_bound = -p.spec.terminal_cost.bound() - 1.0;
  c.upper_bound = p.spec.terminal_cost.bound() + 1.0;
  return c;
}

CandidateFunction shifted_candidate(const CandidateFunction& base, double horizon, double c) {
  CandidateFunction out = base;
  const CandidateFn inner = base.v;
  out.v = [inner, horizon, c](double t, const PathSlice& x) {
    return inner(t, x) + c * (horizon - t);
  };
  out.lower_bound = base.lower_bound - std::abs(c) * horizon - 1.0;
  out.upper_bound = base.upper_bound + std::abs(c) * horizon + 1.0;
  return out;
}

void emit(const RunConfig& cfg, const std::string& command, bool pass, json body,
          const std::vector<std::pair<std::string, std::string>>& files = {}) {
  const fs::path dir = out_dir(cfg);
  fs::create_directories(dir);
  const json report = report_envelope(command, cfg.seed, pass, std::move(body));
  write_file((dir / "report.json").string(), report.dump(2) + "\n");
  for (const auto& [name, content] : files) write_file((dir / name).string(), content);
}

int verdict_line(const std::string& command, bool pass, const std::string& detail) {
  std::cout << command << ": " << detail << " [" << (pass ? "ok" : "FAIL") << "]\n";
  return pass ? 0 : 1;
}

int cmd_simulate(const RunConfig& cfg) {
  const Problem p = load_problem(cfg);
  const double a_const = cfg.control >= 0.0 ? cfg.control : p.spec.anchor.a0;
  const ControlProcess a = ControlProcess::constant(a_const, p.t0, p.spec.anchor.a0);
  SimOptions opt{cfg.paths, cfg.seed, cfg.threads, false, 1};
  const auto res = simulate_controlled(p.spec, p.t0, p.x0, a, opt);

  json meta{{"seed", res.seed},
            {"scheme", res.scheme},
            {"n_paths", res.n_paths},
            {"grid", {{"horizon", p.spec.grid.horizon()}, {"num_steps", p.spec.grid.num_steps()}}},
            {"start_time", res.start_time},
            {"control", a_const}};
  emit(cfg, "simulate", true, meta,
       {{"ensemble.csv", ensemble_to_csv(res.ensemble)},
        {"noise.csv", ensemble_to_csv(res.driving_noise)},
        {"meta.json", meta.dump(2) + "\n"}});
  return verdict_line("simulate", true,
                      "wrote " + std::to_string(res.n_paths) + " paths");
}

int cmd_value(const RunConfig& cfg) {
  const Problem p = load_problem(cfg);
  const auto family = constant_control_family(p.spec, p.t0);
  const auto est = value_function(p.spec, p.t0, p.x0, family, cfg.paths, cfg.seed,
                                  cfg.threads);
  json body = to_json(est);
  bool pass = true;
  std::string detail = "V=" + format_full(est.value) + " stderr=" + format_full(est.stderr_);
  if (p.bench) {
    const double oracle = p.bench->oracle_value(
        p.t0, PathSlice::stopped_at_time(p.x0, p.t0));
    const double gap = std::abs(est.value - oracle);
    pass = gap <= 3.0 * est.stderr_ + 1e-12;
    body["oracle"] = oracle;
    body["oracle_gap"] = gap;
    detail += " oracle_gap=" + format_full(gap);
  }
  emit(cfg, "value", pass, body);
  return verdict_line("value", pass, detail);
}

int cmd_viability(const RunConfig& cfg) {
  const Problem p = load_problem(cfg);
  ViabilityQuery q;
  q.t = p.t0;
  q.x = p.x0;
  q.candidate = default_candidate(p);
  q.target = p.spec.target_set;
  q.y = cfg.y_set ? cfg.y : q.candidate.eval_at(p.t0, p.x0);
  const auto family = constant_control_family(p.spec, p.t0);
  const ScoreMode mode = cfg.mode == "per_s" ? ScoreMode::per_s : ScoreMode::sup_over_s;
  const auto score = approx_viability_score(p.spec, q, family, cfg.paths, cfg.seed, mode,
                                            cfg.threads);
  const bool pass = score.score <= cfg.tol;
  json body = to_json(score);
  body["y"] = q.y;
  body["mode"] = cfg.mode;
  emit(cfg, "viability", pass, body,
       {{"profile.csv", deviation_profile_to_csv(score.profile)}});
  return verdict_line("viability", pass, "score=" + format_full(score.score));
}

int cmd_tangency(const RunConfig& cfg) {
  Problem p = load_problem(cfg);
  const CandidateFunction cand = default_candidate(p);
  p.spec.candidate = cand;
  TangencySearch search;
  search.threads = cfg.threads;

  if (cfg.equivalence) {
    auto dirs = DirectionSet::e_plus(p.t0, p.x0, constant_control_family(p.spec, p.t0));
    const auto rep = tangency_derivative_equivalence_check(
        p.spec, p.t0, p.x0, cand, dirs, cfg.eps, cfg.tol, search, cfg.paths, cfg.seed);
    emit(cfg, "tangency", rep.agree, to_json(rep));
    return verdict_line("tangency-equivalence", rep.agree,
                        "epi=" + format_full(rep.epi_estimate) +
                            " tangent=" + (rep.tangency_found ? "yes" : "no"));
  }

  const double y = cfg.y_set ? cfg.y : cand.eval_at(p.t0, p.x0);
  auto dirs = DirectionSet::e_plus(p.t0, p.x0, constant_control_family(p.spec, p.t0));
  const auto res =
      quasi_tangency_test(p.spec, p.t0, p.x0, y, dirs, cfg.eps, search, cfg.paths, cfg.seed);
  json body = to_json(res);
  body["y"] = y;
  emit(cfg, "tangency", res.found, body);
  return verdict_line("tangency", res.found,
                      "distance=" + format_full(res.certificate.achieved_distance) +
                          " delta=" + format_full(res.certificate.delta));
}

int cmd_epsilon_solve(const RunConfig& cfg) {
  Problem p = load_problem(cfg);
  CandidateFunction cand;
  if (cfg.id == "S1" && cfg.problem_path.empty()) {
    // The sine fixture has no oracle; a constant level keeps every local
    // tangency step trivially feasible while the delayed dynamics stay
    // genuinely path-dependent.
    cand.v = [](double, const PathSlice&) { return 0.0; };
    cand.declared_L = 1.0;
    cand.lower_bound = -1.0;
    cand.upper_bound = 1.0;
  } else {
    cand = default_candidate(p);
  }
  p.spec.candidate = cand;
  const double y = cfg.y_set ? cfg.y : cand.eval_at(p.t0, p.x0);

  ApproxBuildOptions opt;
  opt.search.threads = cfg.threads;
  opt.threads = cfg.threads;
  const auto sol = build_approx_solution(p.spec, p.t0, p.x0, y, cfg.eps, opt, cfg.paths,
                                         cfg.seed);
  json body = to_json(sol);
  bool pass = sol.complete && sol.condition_report.all_pass();
  std::vector<std::pair<std::string, std::string>> files{
      {"solution.json", body.dump(2) + "\n"},
      {"ensemble.csv", ensemble_to_csv(sol.ensemble)}};
  if (cfg.gap && sol.complete) {
    const auto gap = delayed_vs_true_gap(p.spec, sol, cfg.paths, derive_seed(cfg.seed, 9),
                                         cfg.threads);
    body["gap"] = to_json(gap);
  }
  emit(cfg, "epsilon_solve", pass, body, files);
  return verdict_line("epsilon_solve", pass,
                      "tau=" + format_full(sol.tau) + " steps=" +
                          std::to_string(sol.steps_taken));
}

int cmd_verify(const RunConfig& cfg) {
  Problem p = load_problem(cfg);
  json body;
  bool pass = true;

  const auto a1 = check_A1_nonanticipativity(p.spec, 64, derive_seed(cfg.seed, 1));
  const auto a2 = check_A2(p.spec, 256, derive_seed(cfg.seed, 2));
  body["A1"] = to_json(a1);
  body["A2"] = to_json(a2);
  pass = a1.pass && a2.pass;
  std::string detail = std::string("A1=") + (a1.pass ? "ok" : "fail") + " A2=" +
                       (a2.pass ? "ok" : "fail");

  const CandidateFunction base = default_candidate(p);
  if (p.bench) {
    const auto h = check_H(base, p.spec.grid, p.spec.dimension, 256, derive_seed(cfg.seed, 3));
    body["H"] = to_json(h);
    pass = pass && h.pass;
    detail += std::string(" H=") + (h.pass ? "ok" : "fail");
  }

  if (!cfg.role.empty()) {
    p.spec.candidate = base;
    const auto points = sample_reachable_points(p.spec, static_cast<std::size_t>(cfg.points),
                                                derive_seed(cfg.seed, 4), p.x0, 0.75,
                                                cfg.threads);
    TangencySearch search;
    search.threads = cfg.threads;
    const std::vector<double> ladder{cfg.eps, cfg.eps / 2.0, cfg.eps / 4.0};
    SemisolutionReport rep;
    if (cfg.role == "super") {
      const auto cand = shifted_candidate(base, p.spec.grid.horizon(), cfg.c);
      rep = verify_supersolution(p.spec, cand, points, ladder, cfg.tol, search, cfg.paths,
                                 derive_seed(cfg.seed, 5));
    } else if (cfg.role == "sub") {
      const auto cand = shifted_candidate(base, p.spec.grid.horizon(), -cfg.c);
      rep = verify_subsolution(p.spec, cand, points, ladder, cfg.tol, search, cfg.paths,
                               derive_seed(cfg.seed, 5));
    } else {
      std::cerr << "verify: --role must be 'super' or 'sub'\n";
      return 2;
    }
    body[rep.role] = to_json(rep);
    const bool sem_ok = rep.n_fail == 0 && rep.terminal_ok;
    pass = pass && sem_ok;
    detail += " " + rep.role + "=" + (sem_ok ? "ok" : "fail");
  }

  emit(cfg, "verify", pass, body);
  return verdict_line("verify", pass, detail);
}

int cmd_compare(const RunConfig& cfg) {
  Problem p = load_problem(cfg);
  if (!p.bench) {
    std::cerr << "compare: needs a benchmark id with an oracle candidate\n";
    return 2;
  }
  const CandidateFunction base = p.bench->oracle_candidate();
  const auto v_minus = shifted_candidate(base, p.spec.grid.horizon(), -cfg.c);
  const auto v_plus = shifted_candidate(base, p.spec.grid.horizon(), cfg.c);
  p.spec.candidate = base;

  const auto points = sample_reachable_points(p.spec, static_cast<std::size_t>(cfg.points),
                                              derive_seed(cfg.seed, 1), p.x0, 0.75,
                                              cfg.threads);
  TangencySearch search;
  search.threads = cfg.threads;
  const std::vector<double> ladder{cfg.eps, cfg.eps / 2.0, cfg.eps / 4.0};
  const std::size_t deriv_paths = std::min<std::size_t>(cfg.paths, 20000);
  const auto sub = verify_subsolution(p.spec, v_minus, points, ladder, cfg.tol, search,
                                      deriv_paths, derive_seed(cfg.seed, 2));
  const auto super = verify_supersolution(p.spec, v_plus, points, ladder, cfg.tol, search,
                                          deriv_paths, derive_seed(cfg.seed, 3));
  const auto family = constant_control_family(p.spec, 0.0);
  const auto rep = comparison_check(p.spec, v_minus, v_plus, sub, super, points, family,
                                    cfg.paths, derive_seed(cfg.seed, 4), cfg.threads);
  const bool pass = rep.pass && sub.n_fail == 0 && super.n_fail == 0;
  json body;
  body["sub"] = to_json(sub);
  body["super"] = to_json(super);
  body["comparison"] = to_json(rep);
  emit(cfg, "compare", pass, body, {{"comparison.csv", comparison_to_csv(rep)}});
  return verdict_line("compare", pass,
                      "max_sub_over_super=" + format_full(rep.max_sub_over_super));
}

int cmd_bench(const RunConfig& cfg) {
  const TimeGrid grid(cfg.horizon, static_cast<Index>(cfg.num_steps));
  std::vector<Benchmark> list;
  if (cfg.id == "all")
    list = builtin_benchmarks(grid);
  else
    list.push_back(benchmark_by_id(cfg.id, grid));

  json body = json::array();
  bool pass = true;
  int code = 0;
  for (const auto& b : list) {
    const auto rep = oracle_consistency_check(b, cfg.paths, cfg.seed, cfg.threads);
    body.push_back(to_json(rep));
    pass = pass && rep.pass;
    code |= verdict_line("bench " + b.id, rep.pass,
                         "oracle=" + format_full(rep.oracle) + " mc=" +
                             format_full(rep.brute_force_value) +
                             " clip=" + std::to_string(rep.clip_count));
  }
  emit(cfg, "bench", pass, json{{"benchmarks", std::move(body)}});
  return code;
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  const json j = json::parse(read_file(path));
  for (const auto& [key, val] : j.items()) {
    if (key == "id") cfg.id = val.get<std::string>();
    else if (key == "problem") cfg.problem_path = val.get<std::string>();
    else if (key == "paths") cfg.paths = val.get<std::size_t>();
    else if (key == "seed") cfg.seed = val.get<std::uint64_t>();
    else if (key == "threads") cfg.threads = val.get<int>();
    else if (key == "eps") cfg.eps = val.get<double>();
    else if (key == "tol") cfg.tol = val.get<double>();
    else if (key == "t") cfg.t = val.get<double>();
    else if (key == "x0") { cfg.x0 = val.get<double>(); cfg.x0_set = true; }
    else if (key == "y") { cfg.y = val.get<double>(); cfg.y_set = true; }
    else if (key == "c") cfg.c = val.get<double>();
    else if (key == "points") cfg.points = val.get<int>();
    else if (key == "num_steps") cfg.num_steps = val.get<std::size_t>();
    else if (key == "horizon") cfg.horizon = val.get<double>();
    else if (key == "out") cfg.out = val.get<std::string>();
    else if (key == "mode") cfg.mode = val.get<std::string>();
    else throw std::invalid_argument("config: unknown field '" + key + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mean-viability / path-dependent HJB numerical laboratory"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;

  const auto add_common = [&](CLI::App* sub, bool needs_seed = true) {
    sub->add_option("--id", cfg.id, "benchmark id (B0..B4, S1, or 'all' for bench)");
    sub->add_option("--problem", cfg.problem_path, "JSON problem file");
    sub->add_option("--paths", cfg.paths, "Monte Carlo paths")->check(CLI::PositiveNumber);
    auto* seed = sub->add_option("--seed", cfg.seed, "RNG seed (mandatory)");
    if (needs_seed) seed->required();
    sub->add_option("--threads", cfg.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--eps", cfg.eps, "epsilon")->check(CLI::PositiveNumber);
    sub->add_option("--tol", cfg.tol, "tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--t", cfg.t, "initial time");
    sub->add_option("--x0", cfg.x0, "initial state (constant path)")
        ->each([&](const std::string&) { cfg.x0_set = true; });
    sub->add_option("--y", cfg.y, "target level y")
        ->each([&](const std::string&) { cfg.y_set = true; });
    sub->add_option("--steps", cfg.num_steps, "grid steps");
    sub->add_option("--horizon", cfg.horizon, "time horizon T");
    sub->add_option("--out", cfg.out, "output directory (default $MEANVIAB_OUT or ./out)");
    sub->add_option("--family", cfg.family, "override control family size");
    sub->add_option("--config", config_path, "JSON config (flags override)");
  };

  auto* sim = app.add_subcommand("simulate", "Euler-Maruyama ensemble to CSV");
  add_common(sim);
  sim->add_option("--control", cfg.control, "constant control value");

  auto* val = app.add_subcommand("value", "Monte Carlo value function");
  add_common(val);

  auto* viab = app.add_subcommand("viability", "approximate mean-viability score");
  add_common(viab);
  viab->add_option("--mode", cfg.mode, "sup | per_s");

  auto* tan = app.add_subcommand("tangency", "mean quasi-tangency certificate search");
  add_common(tan);
  tan->add_flag("--equivalence", cfg.equivalence, "run the derivative equivalence check");

  auto* eps = app.add_subcommand("epsilon_solve", "build an eps-approximate solution");
  add_common(eps);
  eps->add_flag("--gap", cfg.gap, "also report the delayed-vs-true gap");

  auto* ver = app.add_subcommand("verify", "assumption validators / semisolution checks");
  add_common(ver);
  ver->add_option("--role", cfg.role, "super | sub (semisolution check)");
  ver->add_option("--c", cfg.c, "candidate offset c (T - t)");
  ver->add_option("--points", cfg.points, "sample points");

  auto* cmp = app.add_subcommand("compare", "sub/supersolution sandwich vs value function");
  add_common(cmp);
  cmp->add_option("--c", cfg.c, "candidate offset c (T - t)");
  cmp->add_option("--points", cfg.points, "sample points");

  auto* ben = app.add_subcommand("bench", "benchmark oracle consistency");
  add_common(ben);

  try {
    app.parse(argc, argv);
    if (!config_path.empty()) {
      RunConfig from_file = cfg;
      apply_config_file(from_file, config_path);
      // Flags already parsed win: re-parse onto the file-backed defaults.
      cfg = from_file;
      app.clear();
      app.parse(argc, argv);
    }
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*sim) return cmd_simulate(cfg);
    if (*val) return cmd_value(cfg);
    if (*viab) return cmd_viability(cfg);
    if (*tan) return cmd_tangency(cfg);
    if (*eps) return cmd_epsilon_solve(cfg);
    if (*ver) return cmd_verify(cfg);
    if (*cmp) return cmd_compare(cfg);
    if (*ben) return cmd_bench(cfg);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
