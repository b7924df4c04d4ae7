#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <set>

#include "hocp/json_io.hpp"
#include "hocp/model.hpp"

using namespace hocp;

namespace {

// Two 1d modes connected by a guard at x = 0.5 with identity reset.
HybridProblem tiny_problem() {
  HybridProblem p;
  p.name = "tiny";
  for (const char* id : {"1", "2"}) {
    Mode m;
    m.id = id;
    m.state_vars = {"x"};
    m.control_vars = {"u"};
    m.control_box = {{-1.0, 1.0}};
    const auto flow = m.flow_space();
    const auto st = m.state_space();
    m.dynamics = {Polynomial::variable(flow, "u")};
    m.domain.ineq = {1.0 - Polynomial::variable(st, "x") * Polynomial::variable(st, "x")};
    m.running_cost = Polynomial::constant(flow, 1.0);
    m.terminal_cost = Polynomial::constant(st, 0.0);
    p.modes.push_back(std::move(m));
  }
  Edge e;
  e.from = "1";
  e.to = "2";
  const auto st = p.modes[0].state_space();
  e.guard.eq = {Polynomial::variable(st, "x") - 0.5};
  e.reset = {Polynomial::variable(st, "x")};
  p.edges.push_back(std::move(e));
  p.x0_mode = "1";
  p.x0 = {-0.5};
  p.horizon = {false, 1.0};
  p.default_order = 4;
  return p;
}

std::vector<Diagnostic> errors_only(const std::vector<Diagnostic>& ds) {
  std::vector<Diagnostic> r;
  for (const auto& d : ds)
    if (d.severity == Severity::Error) r.push_back(d);
  return r;
}

bool has_code(const std::vector<Diagnostic>& ds, const std::string& code) {
  for (const auto& d : ds)
    if (d.code == code) return true;
  return false;
}

}  // namespace

TEST(Model, ControlSpaceConcatenation) {
  auto p = tiny_problem();
  p.modes[1].control_vars = {"u", "w"};
  p.modes[1].control_box = {{-1.0, 1.0}, {0.0, 2.0}};
  const auto cs = control_space(p);
  EXPECT_EQ(cs.total, 3);
  EXPECT_EQ(cs.offset, (std::vector<int>{0, 1}));
  EXPECT_EQ(cs.width, (std::vector<int>{1, 2}));
  ASSERT_EQ(cs.bounds.size(), 3u);
  EXPECT_DOUBLE_EQ(cs.bounds[2][1], 2.0);
}

TEST(Model, InSet) {
  const auto st = VarSpace::make({"x"}, {VarRole::State});
  SemialgebraicSet s;
  s.ineq = {1.0 - Polynomial::variable(st, "x") * Polynomial::variable(st, "x")};
  s.eq = {Polynomial::variable(st, "x") - 0.5};
  EXPECT_TRUE(in_set(s, {0.5}, 1e-9));
  EXPECT_FALSE(in_set(s, {0.4}, 1e-9));
  s.eq.clear();
  EXPECT_TRUE(in_set(s, {-1.0}, 1e-9));
  EXPECT_FALSE(in_set(s, {1.1}, 1e-9));
}

TEST(Model, LatinHypercubeDeterministicAndStratified) {
  const auto a = latin_hypercube(16, 3, 7);
  const auto b = latin_hypercube(16, 3, 7);
  EXPECT_EQ(a, b);
  const auto c = latin_hypercube(16, 3, 8);
  EXPECT_NE(a, c);
  // One point per stratum in every dimension.
  for (int d = 0; d < 3; ++d) {
    std::set<int> strata;
    for (const auto& pt : a) {
      EXPECT_GE(pt[d], 0.0);
      EXPECT_LT(pt[d], 1.0);
      strata.insert(static_cast<int>(pt[d] * 16));
    }
    EXPECT_EQ(strata.size(), 16u);
  }
}

TEST(Model, ProjectToCircle) {
  const auto st = VarSpace::make({"x", "y"}, {VarRole::State, VarRole::State});
  const auto x = Polynomial::variable(st, "x"), y = Polynomial::variable(st, "y");
  const std::vector<Polynomial> eqs = {x * x + y * y - 1.0};
  const std::vector<std::vector<Polynomial>> grads = {{partial(eqs[0], 0), partial(eqs[0], 1)}};
  std::vector<double> pt = {0.3, 0.2};
  ASSERT_TRUE(project_to_equalities(eqs, grads, pt));
  EXPECT_NEAR(pt[0] * pt[0] + pt[1] * pt[1], 1.0, 1e-10);
  // Direction is preserved by the normal step from an interior point.
  EXPECT_NEAR(pt[1] / pt[0], 0.2 / 0.3, 1e-6);
}

TEST(Model, SampleGuardLandsOnGuard) {
  const auto p = tiny_problem();
  const auto pts = sample_guard(p.modes[0], p.edges[0].guard, 64, 3);
  ASSERT_FALSE(pts.empty());
  for (const auto& x : pts) {
    ASSERT_EQ(x.size(), 1u);
    EXPECT_NEAR(x[0], 0.5, 1e-9);
  }
}

TEST(Validate, CleanProblemYieldsOnlyUnverifiableWarnings) {
  const auto ds = validate(tiny_problem());
  EXPECT_TRUE(errors_only(ds).empty());
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds[0].code, "A2-transversality");
  EXPECT_EQ(ds[1].code, "A3-non-zeno");
}

TEST(Validate, StructuralErrors) {
  auto p = tiny_problem();
  p.modes[1].id = "1";
  EXPECT_TRUE(has_code(validate(p), "structure"));

  p = tiny_problem();
  p.horizon.T = 0.0;
  EXPECT_TRUE(has_code(validate(p), "structure"));

  p = tiny_problem();
  p.default_order = 3;
  EXPECT_TRUE(has_code(validate(p), "structure"));

  p = tiny_problem();
  p.modes[0].dynamics.clear();
  EXPECT_TRUE(has_code(validate(p), "structure"));

  p = tiny_problem();
  p.edges[0].guard.eq.clear();
  EXPECT_TRUE(has_code(validate(p), "structure"));

  p = tiny_problem();
  p.x0 = {0.0, 0.0};
  EXPECT_TRUE(has_code(validate(p), "structure"));

  p = tiny_problem();
  const auto wrong = VarSpace::make({"z"}, {VarRole::State});
  p.modes[0].terminal_cost = Polynomial::variable(wrong, "z");
  EXPECT_TRUE(has_code(validate(p), "structure"));
}

TEST(Validate, InitialStateChecks) {
  auto p = tiny_problem();
  p.x0 = {2.0};
  EXPECT_TRUE(has_code(validate(p), "x0-in-domain"));

  p = tiny_problem();
  p.x0 = {0.5};
  EXPECT_TRUE(has_code(validate(p), "A5-x0-off-guards"));
}

TEST(Validate, GuardOverlapIsAnError) {
  auto p = tiny_problem();
  Edge dup = p.edges[0];
  p.edges.push_back(dup);  // identical guard from the same mode
  EXPECT_TRUE(has_code(validate(p), "A1-guard-separation"));
}

TEST(Validate, ResetOntoTargetGuardIsAnError) {
  auto p = tiny_problem();
  // Mode 2 has an outgoing guard exactly at the reset image of edge 1->2.
  Edge back;
  back.from = "2";
  back.to = "1";
  const auto st = p.modes[1].state_space();
  back.guard.eq = {Polynomial::variable(st, "x") - 0.5};
  back.reset = {Polynomial::variable(st, "x")};
  p.edges.push_back(std::move(back));
  EXPECT_TRUE(has_code(validate(p), "A1-guard-separation"));
}

TEST(Validate, ResetLeavingDomainIsAWarning) {
  auto p = tiny_problem();
  const auto st = p.modes[0].state_space();
  p.edges[0].reset = {Polynomial::variable(st, "x") + 2.0};
  const auto ds = validate(p);
  EXPECT_TRUE(errors_only(ds).empty());
  EXPECT_TRUE(has_code(ds, "reset-leaves-domain"));
}

TEST(Validate, TargetGuardSeparationOnlyForFreeHorizon) {
  auto p = tiny_problem();
  SemialgebraicSet tgt;
  tgt.ineq = p.modes[0].domain.ineq;  // whole domain, contains the guard point
  p.modes[0].target = tgt;
  p.horizon = {false, 1.0};
  EXPECT_FALSE(has_code(validate(p), "A4-target-guard-separation"));
  p.horizon = {true, 1.0};
  EXPECT_TRUE(has_code(validate(p), "A4-target-guard-separation"));
}

TEST(ProblemJson, RoundTripPreservesEverything) {
  auto p = tiny_problem();
  SemialgebraicSet tgt;
  const auto st = p.modes[1].state_space();
  tgt.eq = {Polynomial::variable(st, "x")};
  p.modes[1].target = tgt;
  p.modes[1].scale_box = {{-2.0, 2.0}};
  p.notes = "reference cost 1.25";
  p.default_order = 6;
  p.horizon = {true, 3.0};

  const auto j1 = problem_to_json(p);
  const auto q = problem_from_json(j1);
  const auto j2 = problem_to_json(q);
  EXPECT_EQ(j1, j2);
  EXPECT_EQ(q.default_order, 6);
  EXPECT_TRUE(q.horizon.free);
  ASSERT_TRUE(q.modes[1].target.has_value());
  EXPECT_EQ(q.modes[1].target->eq.size(), 1u);
  EXPECT_EQ(q.modes[1].scale_box.size(), 1u);
}

TEST(ProblemJson, FileRoundTripAndValidationOnLoad) {
  const std::string path = ::testing::TempDir() + "/tiny_problem.json";
  const auto p = tiny_problem();
  save_problem(p, path);
  const auto q = load_problem(path);
  EXPECT_EQ(problem_to_json(p), problem_to_json(q));

  auto bad = tiny_problem();
  bad.x0 = {2.0};  // outside the mode-1 domain
  const std::string bad_path = ::testing::TempDir() + "/tiny_problem_bad.json";
  save_problem(bad, bad_path);
  EXPECT_THROW(load_problem(bad_path), Error);
  std::remove(path.c_str());
  std::remove(bad_path.c_str());
}

TEST(ProblemJson, HorizonForms) {
  auto p = tiny_problem();
  auto j = problem_to_json(p);
  EXPECT_TRUE(j.at("horizon").contains("fixed"));
  j["horizon"] = json{{"free", 2.0}};
  const auto q = problem_from_json(j);
  EXPECT_TRUE(q.horizon.free);
  EXPECT_DOUBLE_EQ(q.horizon.T, 2.0);
  j["horizon"] = json{{"whenever", 2.0}};
  EXPECT_THROW(problem_from_json(j), Error);
}

#include "hocp/benchmarks.hpp"

namespace {

// Exact stance vector field of the pendulum model, for comparison against
// the degree-3 expansion baked into the benchmark builder.
std::vector<double> slip_stance_exact(const std::vector<double>& x, double u) {
  const double M = 1.0, k = 6.0, g0 = 0.2, l0 = 0.2;
  return {x[1],
          -(k / M) * (x[0] - l0) - g0 * std::cos(x[2]) + (k / M) * u,
          x[3],
          -2.0 * x[1] * x[3] / x[0] - g0 * std::sin(x[2]) / x[0],
          -x[1] * std::sin(x[2]) - x[0] * x[3] * std::cos(x[2])};
}

}  // namespace

TEST(Benchmarks, AllValidateWithoutErrors) {
  for (const auto& p : hocp::benchmarks::all()) {
    const auto ds = validate(p);
    EXPECT_TRUE(errors_only(ds).empty()) << p.name;
    const bool slip = p.name.rfind("slip", 0) == 0;
    EXPECT_EQ(has_code(ds, "reset-leaves-domain"), slip) << p.name;
  }
}

TEST(Benchmarks, ResetAndDynamicsDegrees) {
  const auto slip = hocp::benchmarks::slip_height();
  int dyn_deg = 0;
  for (const auto& f : slip.modes[0].dynamics) dyn_deg = std::max(dyn_deg, f.degree());
  EXPECT_EQ(dyn_deg, 3);
  int r12 = 0, r31 = 0;
  for (const auto& r : slip.edges[0].reset) r12 = std::max(r12, r.degree());
  for (const auto& r : slip.edges[2].reset) r31 = std::max(r31, r.degree());
  EXPECT_EQ(r12, 3);  // liftoff carries the expanded trig terms
  EXPECT_EQ(r31, 1);  // touchdown is affine

  const auto dub = hocp::benchmarks::dubins_shortcut();
  EXPECT_EQ(dub.modes[0].dynamics[0].degree(), 3);  // v * (1 - x3^2/2)
  EXPECT_EQ(dub.edges[1].reset[0].degree(), 0);     // constant drop-in point
}

TEST(Benchmarks, SlipStanceMatchesExactFieldNearExpansionPoint) {
  const auto p = hocp::benchmarks::slip_height();
  const auto& m = p.modes[0];
  // At the expansion point the truncation is exact.
  {
    const std::vector<double> flow_pt = {0.7, 0.2, 0.0, 0.0, 0.0, 0.0, 0.05};
    const auto ex = slip_stance_exact({0.2, 0.0, 0.0, 0.0, 0.0}, 0.05);
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(eval(m.dynamics[i], flow_pt), ex[i], 1e-15) << i;
  }
  // Nearby, the gap is fourth order in the displacement.
  {
    const std::vector<double> x = {0.21, 0.03, 0.05, -0.1, 0.4};
    const std::vector<double> flow_pt = {1.3, x[0], x[1], x[2], x[3], x[4], 0.02};
    const auto ex = slip_stance_exact(x, 0.02);
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(eval(m.dynamics[i], flow_pt), ex[i], 2e-4) << i;
  }
}

TEST(Benchmarks, SlipResetsMatchExactMaps) {
  const auto p = hocp::benchmarks::slip_height();
  const double l0 = 0.2, alpha = std::acos(-1.0) / 6.0;
  // Liftoff (degree-3 expansion) against the exact trig map at small angle.
  const std::vector<double> xs = {0.2, 0.1, 0.05, -0.2, 0.3};
  const std::vector<double> exact_lift = {xs[4], -xs[1] * std::sin(xs[2]) - l0 * xs[3] * std::cos(xs[2]),
                                          l0 * std::cos(xs[2]),
                                          xs[1] * std::cos(xs[2]) - l0 * xs[3] * std::sin(xs[2])};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(eval(p.edges[0].reset[i], xs), exact_lift[i], 5e-6) << i;
  // Touchdown is exact.
  const std::vector<double> xf = {-0.4, 0.2, l0 * std::cos(alpha), -0.5};
  const std::vector<double> exact_td = {l0, -std::sin(alpha) * xf[1] + std::cos(alpha) * xf[3], alpha,
                                        -std::cos(alpha) / l0 * xf[1] - std::sin(alpha) / l0 * xf[3],
                                        xf[0]};
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(eval(p.edges[2].reset[i], xf), exact_td[i], 1e-15) << i;
}

TEST(Benchmarks, GeneratedFilesRoundTrip) {
  for (const auto& p : hocp::benchmarks::all()) {
    const std::string path = std::string(HOCP_SOURCE_DIR) + "/problems/" + p.name + ".json";
    const auto loaded = load_problem(path);
    EXPECT_EQ(problem_to_json(p), problem_to_json(loaded)) << p.name;
  }
}
