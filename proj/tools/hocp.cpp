// hocp — global hybrid optimal control through moment relaxations.
//
// Subcommands chain the pipeline stages: `relax` assembles the moment
// program and writes a descriptor, `solve` runs the conic solver (from
// `--problem` or a `--relax` descriptor; matrices are always rebuilt
// in-process), `extract` fits the polynomial feedback law from a saved
// `--sol` file or by solving fresh, `simulate` plays a controller file back
// through the hybrid dynamics, and `run` does all of it across several
// relaxation orders and writes a comparison report. `report` re-renders a
// saved report; `validate` checks a problem file.
//
// Exit codes: 0 success (all solves Optimal or NearOptimal), 2 a solve
// ended Stalled/Infeasible/Unbounded or a pipeline stage failed, 1 usage or
// input errors.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "hocp/benchmarks.hpp"
#include "hocp/report.hpp"

namespace {

using namespace hocp;
namespace fs = std::filesystem;

HybridProblem load_problem_arg(const std::string& arg, std::uint32_t seed = 0) {
  if (fs::exists(arg)) return load_problem(arg, seed);
  for (const auto& p : benchmarks::all())
    if (p.name == arg) return p;
  throw Error("problem \"" + arg + "\" is neither a file nor a built-in problem name");
}

std::string display_name(const HybridProblem& p) { return p.name.empty() ? "problem" : p.name; }

int checked_order(int order, const HybridProblem& p) {
  if (order == 0) order = p.default_order;
  if (order < 2 || order % 2 != 0)
    throw Error("relaxation order must be an even integer >= 2, got " + std::to_string(order) +
                " (orders count moment degrees, so odd values are rejected, not rounded)");
  return order;
}

std::vector<int> parse_orders(const std::string& s, const HybridProblem& p) {
  std::vector<int> orders;
  std::string tok;
  std::istringstream in(s);
  while (std::getline(in, tok, ',')) {
    if (tok.empty()) continue;
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(tok, &used);
    } catch (const std::exception&) {
      used = std::string::npos;
    }
    if (used != tok.size()) throw Error("cannot parse relaxation order \"" + tok + "\"");
    orders.push_back(checked_order(v, p));
  }
  if (orders.empty()) orders.push_back(checked_order(0, p));
  return orders;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << content;
}

PipelineOptions make_options(double tol_gap, int max_iter, bool no_scale, double bound) {
  PipelineOptions po;
  po.relax.scale = !no_scale;
  po.relax.bound = bound;
  po.solve.tol_gap = tol_gap;
  po.solve.max_iter = max_iter;
  return po;
}

json read_json_file(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + what + " file " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw Error(what + " file " + path + " is not valid JSON: " + e.what());
  }
  return j;
}

bool solved_ok(const std::string& status) { return status == "Optimal" || status == "NearOptimal"; }

// --- subcommand bodies -----------------------------------------------------

// relax.json is a descriptor, not a matrix dump: it records the problem
// source, order, and options (enough for `solve --relax` to rebuild the
// program in-process, which is the actual solver handoff) plus the shape
// summary for inspection.
int cmd_relax(const std::string& problem_arg, int order, bool no_scale, double bound,
              const std::string& out) {
  const auto p = load_problem_arg(problem_arg);
  const int order_2k = checked_order(order, p);
  const auto po = make_options(1e-8, 200, no_scale, bound);
  const auto rx = build_relaxation(p, order_2k, po.relax);
  const auto cp = to_conic(rx);
  int max_side = 0;
  json jb = json::array(), jms = json::array();
  for (const auto& blk : cp.blocks) {
    max_side = std::max(max_side, blk.side);
    jb.push_back(json{{"label", blk.label}, {"side", blk.side}});
  }
  for (std::size_t mi = 0; mi < rx.measures.size(); ++mi)
    jms.push_back(json{{"name", rx.measures[mi].name},
                       {"kind", to_string(rx.measures[mi].kind)},
                       {"dim", rx.measures[mi].space.dim()},
                       {"moments", rx.length[mi]}});
  std::cout << "problem " << display_name(p) << ", order 2k=" << order_2k << "\n"
            << "  measures: " << rx.measures.size() << ", moments: " << rx.total_len << "\n"
            << "  equality rows: " << rx.A.rows() << "\n"
            << "  psd blocks: " << cp.blocks.size() << ", largest side " << max_side << "\n";
  if (!out.empty()) {
    json j{{"problem", display_name(p)},
           {"source", problem_arg},
           {"order_2k", order_2k},
           {"options", json{{"scale", !no_scale}, {"bound", bound}}},
           {"moments", rx.total_len},
           {"rows", static_cast<int>(rx.A.rows())},
           {"measures", std::move(jms)},
           {"blocks", std::move(jb)}};
    write_file(out, j.dump(2) + "\n");
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

int cmd_solve(const std::string& problem_arg, const std::string& relax_path, int order,
              double tol_gap, int max_iter, bool no_scale, double bound, const std::string& out) {
  HybridProblem p;
  int order_2k = 0;
  auto po = make_options(tol_gap, max_iter, no_scale, bound);
  std::string source = problem_arg;
  json jrelax;
  if (!relax_path.empty()) {
    jrelax = read_json_file(relax_path, "relaxation");
    source = jrelax.value("source", jrelax.value("problem", ""));
    p = load_problem_arg(source);
    order_2k = checked_order(jrelax.at("order_2k").get<int>(), p);
    if (jrelax.contains("options")) {
      po.relax.scale = jrelax.at("options").value("scale", true);
      po.relax.bound = jrelax.at("options").value("bound", 0.0);
    }
  } else {
    if (problem_arg.empty()) throw Error("solve needs --problem or --relax");
    p = load_problem_arg(problem_arg);
    order_2k = checked_order(order, p);
  }
  const auto rx = build_relaxation(p, order_2k, po.relax);
  if (!relax_path.empty()) {
    const int want = jrelax.value("moments", rx.total_len);
    if (want != rx.total_len)
      throw Error("relaxation file " + relax_path + " records " + std::to_string(want) +
                  " moments but rebuilding yields " + std::to_string(rx.total_len) +
                  "; the problem file changed since `relax` ran");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto sol = solve(to_conic(rx), po.solve);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "problem " << display_name(p) << ", order 2k=" << order_2k << "\n"
            << "  status " << to_string(sol.status) << " after " << sol.iterations
            << " iterations (" << detail::fmt_num(secs, 2) << " s)\n"
            << "  p_k = " << detail::fmt_num(sol.p_k) << ", d_k = " << detail::fmt_num(sol.d_k)
            << ", gap = " << sol.gap << "\n"
            << "  residuals: primal " << sol.primal_res << ", dual " << sol.dual_res << "\n";
  if (!sol.message.empty()) std::cout << "  note: " << sol.message << "\n";
  if (!out.empty()) {
    write_file(out, solution_to_json(sol, rx, source).dump(2) + "\n");
    std::cout << "wrote " << out << "\n";
  }
  return solved_ok(to_string(sol.status)) ? 0 : 2;
}

int cmd_extract(const std::string& problem_arg, const std::string& sol_path, int order,
                double tol_gap, int max_iter, bool no_scale, double bound,
                const std::string& out) {
  HybridProblem p;
  Relaxation rx;
  ConicSolution sol;
  if (!sol_path.empty()) {
    const auto sf = solution_from_json(read_json_file(sol_path, "solution"));
    // --problem overrides the recorded source (say, a moved problem file)
    const std::string source = problem_arg.empty() ? sf.source : problem_arg;
    if (source.empty()) throw Error("solution file has no problem source; pass --problem");
    p = load_problem_arg(source);
    rx = build_relaxation(p, checked_order(sf.order_2k, p), sf.options);
    sol = solution_for_relaxation(sf, rx);
  } else {
    if (problem_arg.empty()) throw Error("extract needs --sol or --problem");
    p = load_problem_arg(problem_arg);
    const int order_2k = checked_order(order, p);
    const auto po = make_options(tol_gap, max_iter, no_scale, bound);
    rx = build_relaxation(p, order_2k, po.relax);
    sol = solve(to_conic(rx), po.solve);
  }
  if (sol.status != SolveStatus::Optimal && sol.status != SolveStatus::NearOptimal) {
    std::cerr << "error: solve " << (sol_path.empty() ? "ended " : "in the file is ")
              << to_string(sol.status) << "; no controller extracted\n";
    return 2;
  }
  const auto pc = extract_controller(sol, rx);
  for (const auto& mc : pc.modes) {
    std::cout << "mode " << mc.mode_id << ":";
    if (mc.channels.empty()) std::cout << " (no controls)";
    for (std::size_t c = 0; c < mc.channels.size(); ++c)
      std::cout << " u" << c + 1 << " degree " << mc.channels[c].degree() << " in ["
                << mc.saturation[c][0] << ", " << mc.saturation[c][1] << "]";
    std::cout << "\n";
  }
  write_file(out, controller_to_json(pc).dump(2) + "\n");
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_simulate(const std::string& problem_arg, const std::string& controller_path,
                 const std::string& out) {
  const auto p = load_problem_arg(problem_arg);
  const auto pc = controller_from_json(read_json_file(controller_path, "controller"), p);
  const auto traj = execute(p, pc);
  std::cout << "problem " << display_name(p) << "\n"
            << "  cost " << detail::fmt_num(traj.cost) << " (running "
            << detail::fmt_num(traj.running_cost) << ", terminal "
            << detail::fmt_num(traj.terminal_value) << ")\n"
            << "  ended " << to_string(traj.reason) << " at t = "
            << detail::fmt_num(traj.terminal_time) << " in mode "
            << p.modes[traj.terminal_mode].id << "\n";
  std::vector<std::string> seq;
  for (const int mi : traj.mode_sequence()) seq.push_back(p.modes[mi].id);
  std::cout << "  transitions: " << detail::join_sequence(seq) << " (" << traj.events.size()
            << " events)\n";
  if (!traj.message.empty()) std::cout << "  note: " << traj.message << "\n";
  if (!out.empty()) {
    std::ostringstream os;
    write_trajectory_csv(os, p, traj);
    write_file(out, os.str());
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

int cmd_run(const std::string& problem_arg, const std::string& orders_str, int order,
            double tol_gap, int max_iter, bool no_scale, double bound, int jobs,
            const std::string& out_dir) {
  const auto p = load_problem_arg(problem_arg);
  // --orders takes a list; plain --order is accepted for a single-order run
  const auto orders = orders_str.empty() && order != 0
                          ? std::vector<int>{checked_order(order, p)}
                          : parse_orders(orders_str, p);
  const auto po = make_options(tol_gap, max_iter, no_scale, bound);
  fs::create_directories(out_dir.empty() ? "." : out_dir);
  const fs::path dir = out_dir.empty() ? "." : out_dir;
  std::vector<OrderArtifacts> arts;
  const auto rep = run_orders(p, orders, po, jobs, &arts, problem_arg);
  for (std::size_t i = 0; i < orders.size(); ++i) {
    const std::string suffix = std::to_string(orders[i]);
    if (arts[i].solved)
      write_file((dir / ("sol_" + suffix + ".json")).string(), arts[i].sol_json.dump(2) + "\n");
    if (arts[i].extracted)
      write_file((dir / ("controller_" + suffix + ".json")).string(),
                 controller_to_json(arts[i].controller).dump(2) + "\n");
    if (arts[i].simulated) {
      std::ostringstream os;
      write_trajectory_csv(os, p, arts[i].traj);
      write_file((dir / ("traj_" + suffix + ".csv")).string(), os.str());
    }
  }
  write_file((dir / "report.json").string(), report_to_json(rep).dump(2) + "\n");
  write_file((dir / "report.txt").string(), report_table(rep));
  write_file((dir / "report.csv").string(), report_csv(rep));
  std::cout << report_table(rep);
  std::cout << "artifacts in " << dir.string() << "\n";
  bool all_ok = true;
  for (const auto& o : rep.orders) all_ok = all_ok && solved_ok(o.status) && o.error.empty();
  return all_ok ? 0 : 2;
}

int cmd_report(const std::string& in_path, const std::string& out_dir) {
  const auto rep = report_from_json(read_json_file(in_path, "report"));
  std::cout << report_table(rep);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_file((fs::path(out_dir) / "report.txt").string(), report_table(rep));
    write_file((fs::path(out_dir) / "report.csv").string(), report_csv(rep));
    std::cout << "wrote " << (fs::path(out_dir) / "report.txt").string() << " and "
              << (fs::path(out_dir) / "report.csv").string() << "\n";
  } else {
    std::cout << report_csv(rep);
  }
  return 0;
}

int cmd_validate(const std::string& problem_arg, std::uint32_t seed) {
  HybridProblem p;
  if (fs::exists(problem_arg)) {
    p = problem_from_json(read_json_file(problem_arg, "problem"));
  } else {
    p = load_problem_arg(problem_arg, seed);
  }
  const auto ds = validate(p, seed);
  for (const auto& d : ds)
    std::cout << (d.severity == Severity::Error ? "error" : "warning") << " [" << d.code << "] "
              << d.message << "\n";
  if (ds.empty()) std::cout << "problem " << display_name(p) << " is valid\n";
  return has_errors(ds) ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"global hybrid optimal control via moment relaxations"};
  app.require_subcommand(1);

  std::string problem, out, orders_str, controller_path, relax_path, sol_path;
  std::string in_path = "report.json";
  int order = 0, jobs = 1, max_iter = 200;
  double tol_gap = 1e-8, bound = 0.0;
  bool no_scale = false;
  std::uint32_t seed = 0;

  auto add_problem = [&](CLI::App* c, bool required = true) {
    auto* o = c->add_option("--problem", problem, "problem file or built-in problem name");
    if (required) o->required();
    return o;
  };
  auto add_relax_opts = [&](CLI::App* c) {
    c->add_option("--order", order, "relaxation order 2k (default: the problem's)");
    c->add_flag("--no-scale", no_scale, "skip coordinate normalization");
    c->add_option("--bound", bound, "add |x_j| <= bound to every mode domain");
  };
  auto add_solve_opts = [&](CLI::App* c) {
    c->add_option("--tol-gap", tol_gap, "relative duality-gap tolerance (default 1e-8)");
    c->add_option("--max-iter", max_iter, "interior-point iteration cap (default 200)")
        ->check(CLI::PositiveNumber);
  };

  auto* c_relax = app.add_subcommand("relax", "assemble the moment program and print its shape");
  add_problem(c_relax);
  add_relax_opts(c_relax);
  c_relax->add_option("--out", out, "write a JSON descriptor and shape summary here");

  auto* c_solve = app.add_subcommand("solve", "solve the order-2k relaxation");
  add_problem(c_solve, false);
  c_solve->add_option("--relax", relax_path, "relaxation descriptor from `relax --out`")
      ->excludes("--problem");
  add_relax_opts(c_solve);
  add_solve_opts(c_solve);
  c_solve->add_option("--out", out, "write the solution (per-measure moments, bounds, log)");

  auto* c_extract = app.add_subcommand("extract", "fit the polynomial feedback law");
  c_extract->add_option("--sol", sol_path, "solution file from `solve --out`");
  add_problem(c_extract, false);
  add_relax_opts(c_extract);
  add_solve_opts(c_extract);
  c_extract->add_option("--out", out, "controller file to write (default controller.json)");

  auto* c_sim = app.add_subcommand("simulate", "run a controller file through the dynamics");
  add_problem(c_sim);
  c_sim->add_option("--controller", controller_path, "controller JSON from `extract`")->required();
  c_sim->add_option("--out", out, "trajectory CSV to write");

  auto* c_run = app.add_subcommand("run", "full pipeline across orders, with a report");
  add_problem(c_run);
  add_relax_opts(c_run);
  add_solve_opts(c_run);
  c_run->add_option("--orders", orders_str, "comma-separated relaxation orders, e.g. 4,6,8");
  c_run->add_option("--jobs", jobs, "solve this many orders concurrently")->check(CLI::PositiveNumber);
  c_run->add_option("--out", out, "directory for artifacts (default .)");

  auto* c_report = app.add_subcommand("report", "re-render a saved report.json");
  c_report->add_option("--in", in_path, "report JSON produced by `run`")->capture_default_str();
  c_report->add_option("--out", out, "directory for report.txt and report.csv");

  auto* c_validate = app.add_subcommand("validate", "check a problem file");
  add_problem(c_validate);
  c_validate->add_option("--seed", seed, "seed for the sampled reset-image checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;  // help/version exit clean, usage errors exit 1
  }

  try {
    if (c_relax->parsed()) return cmd_relax(problem, order, no_scale, bound, out);
    if (c_solve->parsed())
      return cmd_solve(problem, relax_path, order, tol_gap, max_iter, no_scale, bound, out);
    if (c_extract->parsed())
      return cmd_extract(problem, sol_path, order, tol_gap, max_iter, no_scale, bound,
                         out.empty() ? "controller.json" : out);
    if (c_sim->parsed()) return cmd_simulate(problem, controller_path, out);
    if (c_run->parsed())
      return cmd_run(problem, orders_str, order, tol_gap, max_iter, no_scale, bound, jobs, out);
    if (c_report->parsed()) return cmd_report(in_path, out);
    if (c_validate->parsed()) return cmd_validate(problem, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
