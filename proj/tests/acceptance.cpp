// Copyright 2026 The tpmhe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Runtime budgets are part of each criterion.

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "tpmhe/tpmhe.hpp"

namespace tpmhe {
namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[violated: " << what << "] ";
    }
  }
};

struct Criterion {
  int id;
  std::string name;
  double budget_seconds;
  std::function<void(Outcome&)> run;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double med(const Json& summary, const std::string& key) { return summary.at(key).at("median").get<double>(); }

HorizonProblem problem(const SystemModel& m, const DataBatch& d, const CostSpec& c, TimeIndex tau, int N) {
  HorizonProblem P;
  P.model = &m;
  P.data = &d;
  P.cost = &c;
  P.tau = tau;
  P.N = N;
  return P;
}

double max_abs_diff(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).cwiseAbs().maxCoeff());
  return m;
}

std::string lti_id(int n, int m, int p, std::uint64_t seed) {
  return "lti:" + std::to_string(n) + ":" + std::to_string(m) + ":" + std::to_string(p) + ":" + std::to_string(seed);
}

// 1. LM path against the exact QP on random LTI windows.
void linear_oracle(Outcome& o) {
  double worst_cost = 0.0, worst_state = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const int n = 2 + static_cast<int>(seed % 11);
    const int N = 10 + static_cast<int>((seed * 7) % 31);
    const auto setup = default_setup(lti_id(n, 2, std::max(1, n / 2), seed), N + 10);
    const DataBatch d = setup.run(seed);
    const CostSpec c = default_cost(setup.model);
    auto P = problem(setup.model, d, c, 5, N);
    if (seed % 2 == 0) {
      Rng rng(split_seed(seed, "acceptance-prior"));
      P.prior = Prior{rng.normal_vec(n), Mat::Identity(n, n)};
    }
    const auto exact = solve_linear_horizon(P);
    P.options.method = SolveMethod::kLevenbergMarquardt;
    P.options.grad_tol = 1e-10;
    P.options.max_iters = 200;
    const auto lm = solve_horizon(P);
    worst_cost = std::max(worst_cost, std::abs(lm.cost - exact.cost) / std::max(exact.cost, 1e-300));
    worst_state = std::max(worst_state, max_abs_diff(lm.xs, exact.xs));
  }
  o.detail << "max rel cost diff " << fmt(worst_cost) << ", max state diff " << fmt(worst_state) << " ";
  o.require(worst_cost <= 1e-8, "relative cost difference <= 1e-8");
  o.require(worst_state <= 1e-6, "state difference <= 1e-6");
}

// 2. Scalar example: arcs independent of N, vanishing midpoint deviation.
void motivating_example(Outcome& o) {
  const SystemModel m = scalar_integrator();
  const CostSpec c = unit_cost_1d();
  const DataBatch d = scalar_example_data(0, 30);
  const auto bench = scalar_example_benchmark(30, 1e-12);
  const std::vector<int> Ns{16, 24, 30};
  std::vector<std::vector<double>> devs;
  int arc = 0;
  double mid30 = 0.0;
  for (int N : Ns) {
    const auto sol = solve_linear_horizon(problem(m, d, c, 0, N));
    const auto prof = turnpike_profile({sol}, bench.solution, N, -1.0, median_output_scale(d));
    devs.push_back(prof.state_dev[0]);
    arc = std::max({arc, prof.max_approach_length(), prof.max_leave_length()});
    if (N == 30) mid30 = prof.midpoint_deviation();
  }
  const auto cmp = compare_arcs(devs, Ns, arc);
  o.detail << "arc length " << arc << ", max left arc diff " << fmt(cmp.max_left) << ", max right arc diff "
           << fmt(cmp.max_right) << ", midpoint deviation N=30 " << fmt(mid30) << " ";
  o.require(cmp.max_left <= 1e-6 && cmp.max_right <= 1e-6, "aligned arcs agree to 1e-6");
  o.require(mid30 < 1e-3, "midpoint deviation < 1e-3");
}

// 3. Delayed MHE with zero delay equals MHE on every preset model.
void delay_zero_reduction(Outcome& o) {
  struct Case {
    std::string id;
    int T, N;
  };
  const std::vector<Case> cases{{"scalar", 30, 20}, {"reactor", 120, 40}, {lti_id(8, 30, 4, 1), 200, 150},
                                {"cstr", 60, 10},   {"quadrotor", 50, 30}};
  for (const auto& k : cases) {
    const auto setup = default_setup(k.id, k.T);
    const DataBatch d = setup.run(1);
    const CostSpec c = default_cost(setup.model);
    const auto a = mhe(setup.model, d, c, k.N);
    const auto b = delayed_mhe(setup.model, d, c, k.N, 0);
    bool same = a.estimates.size() == b.estimates.size();
    for (const auto& [t, x] : a.estimates) same = same && b.estimates.count(t) && (b.at(t).array() == x.array()).all();
    o.detail << setup.model.id << (same ? " equal, " : " DIFFERENT, ");
    o.require(same, "bitwise equality on " + setup.model.id);
  }
}

// 4. Max deviation from the benchmark is non-increasing in the delay.
void delay_monotonicity(Outcome& o) {
  const Json man = run_preset("motivating-scalar", Json{{"N", {20}}}, {}, 1, std::nullopt);
  double prev = 1e300;
  for (int dl = 0; dl <= 10; dl += 2) {
    const double v = med(man["summary"], "delay_max_deviation/d" + std::to_string(dl));
    o.detail << "d" << dl << "=" << fmt(v) << " ";
    o.require(v <= prev, "non-increasing at delta=" + std::to_string(dl));
    prev = v;
  }
}

// 5. Fixed-interval smoother equals the prior-weighted full QP.
void fis_duality(Outcome& o) {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const int n = 3 + static_cast<int>(seed % 6);
    const auto setup = default_setup(lti_id(n, 3, 2, seed), 120);
    const DataBatch d = setup.run(seed);
    const CostSpec base = default_cost(setup.model);
    const CostSpec c(base.Q(), base.R(), base.R());
    Rng rng(split_seed(seed, "acceptance-fis"));
    const Vec x0 = rng.normal_vec(n);
    const Mat P0 = 0.5 * Mat::Identity(n, n);
    const auto fis = fixed_interval_smoother(setup.model, d, spd_inverse(c.Q()), spd_inverse(c.R()), x0, P0);
    auto P = problem(setup.model, d, c, 0, static_cast<int>(d.t_end()));
    P.prior = Prior{x0, spd_inverse(P0)};
    const auto qp = solve_linear_horizon(P);
    for (TimeIndex t = 0; t <= d.t_end(); ++t)
      worst = std::max(worst, (fis.at(t) - qp.x_at(t)).cwiseAbs().maxCoeff());
  }
  o.detail << "max state diff " << fmt(worst) << " ";
  o.require(worst <= 1e-6, "FIS equals QP to 1e-6");
}

const Json kLtiDesk{{"n", 30}, {"p", 10}, {"T", 1200}, {"N", 150}, {"Delta", 70}};

// 6. Approximate estimator fidelity on the desk-scale LTI study.
void ae_fidelity(Outcome& o) {
  const Json man = run_preset("lti-offline", kLtiDesk, {}, 1, std::nullopt);
  const auto& s = man["summary"];
  const double jg = med(s, "J_gap/ae"), sg = med(s, "sse_gap/ae");
  const double kf = med(s, "sse/kf"), ae = med(s, "sse/ae");
  o.detail << "median over " << man["seeds"].size() << " seeds: J gap " << fmt(100 * jg) << "%, SSE gap "
           << fmt(100 * sg) << "%, SSE kf " << fmt(kf) << " vs ae " << fmt(ae) << "; per seed J gap:";
  for (const auto& r : man["per_seed"]) o.detail << " " << fmt(100 * r["metrics"]["J_gap/ae"].get<double>()) << "%";
  o.detail << " ";
  o.require(std::abs(jg) <= 0.005, "J within 0.5%");
  o.require(std::abs(sg) <= 0.005, "SSE within 0.5%");
  o.require(kf > ae, "KF SSE > AE SSE");
}

// 7. Window planning counts.
void window_planning(Outcome& o) {
  const auto k70 = plan_ae_windows(4803, 150, 70).size();
  const auto k0 = plan_ae_windows(4803, 150, 0).size();
  o.detail << "Delta=70: " << k70 << ", Delta=0: " << k0 << " ";
  o.require(k70 == 34, "34 windows for Delta=70");
  o.require(k0 == 4654, "4654 windows for Delta=0");
}

// 8. Batch reactor: AE gap shrinks with N; MHE no better than AE for long N.
void reactor_trends(Outcome& o) {
  const Json man = run_preset("batch-reactor", Json::object(), {}, 1, std::nullopt);
  const auto& s = man["summary"];
  o.require(man["seeds"].size() >= 10, "at least 10 seeds");
  double prev = 1e300;
  o.detail << "median AE SSE gap:";
  for (int N : {40, 70, 100, 130, 160}) {
    const double g = med(s, "sse_gap/ae/N" + std::to_string(N));
    o.detail << " N" << N << "=" << fmt(100 * g) << "%";
    o.require(g < prev, "gap decreasing at N=" + std::to_string(N));
    prev = g;
  }
  o.require(std::abs(prev) <= 0.02, "gap <= 2% at N=160");
  o.detail << "; median SSE mhe/ae:";
  for (int N : {100, 130, 160}) {
    const std::string k = "N" + std::to_string(N);
    const double sm = med(s, "sse/mhe/" + k), sa = med(s, "sse/ae/" + k);
    o.detail << " " << k << "=" << fmt(sm) << "/" << fmt(sa);
    o.require(sm >= sa, "MHE SSE >= AE SSE at " + k);
  }
  o.detail << " ";
}

Json g_cstr;  // shared by criteria 9 and 13

// 9. CSTR: one step of delay helps; half-window delay approaches the benchmark.
void cstr_delay(Outcome& o) {
  g_cstr = run_preset("cstr-online", Json::object(), {}, 1, std::nullopt);
  const auto& s = g_cstr["summary"];
  o.require(g_cstr["seeds"].size() >= 20, "at least 20 seeds");
  const double d0 = med(s, "sse/turnpike/d0"), d1 = med(s, "sse/turnpike/d1"), d5 = med(s, "sse/turnpike/d5");
  const double ihe = med(s, "sse/ihe");
  o.detail << "median SSE d0=" << fmt(d0) << " d1=" << fmt(d1) << " (" << fmt(100 * (1 - d1 / d0))
           << "% lower) d5=" << fmt(d5) << " ihe=" << fmt(ihe) << " (" << fmt(100 * (d5 / ihe - 1)) << "%) ";
  o.require(d1 <= 0.9 * d0, "SSE(delta=1) <= 0.9 SSE(delta=0)");
  o.require(std::abs(d5 / ihe - 1.0) <= 0.1, "SSE(delta=5) within 10% of IHE");
}

// 10. Quadrotor: delay reduces the SSE.
void quadrotor_delay(Outcome& o) {
  const Json man = run_preset("quadrotor-online", Json::object(), {}, 1, std::nullopt);
  const auto& s = man["summary"];
  o.require(man["seeds"].size() >= 10, "at least 10 seeds");
  const double d0 = med(s, "sse/turnpike/d0"), d3 = med(s, "sse/turnpike/d3"), d15 = med(s, "sse/turnpike/d15");
  o.detail << "median SSE d0=" << fmt(d0) << " d3=" << fmt(d3) << " (" << fmt(100 * (1 - d3 / d0))
           << "% lower) d15=" << fmt(d15) << " ihe=" << fmt(med(s, "sse/ihe")) << " ";
  o.require(d3 <= 0.9 * d0, "SSE(delta=3) <= 0.9 SSE(delta=0)");
  o.require(d15 <= d3, "SSE(delta=15) <= SSE(delta=3)");
}

// 11. AE output does not depend on the worker count.
void ae_determinism(Outcome& o) {
  const auto setup = default_setup(lti_id(30, 30, 10, 1), 1200);
  const DataBatch d = setup.run(1);
  const CostSpec c = default_cost(setup.model);
  const auto ref = approximate_estimator(setup.model, d, c, {150, 70}, 1);
  for (int w : {4, 8}) {
    const auto other = approximate_estimator(setup.model, d, c, {150, 70}, w);
    bool same = other.estimates.estimates.size() == ref.estimates.estimates.size();
    for (const auto& [t, x] : ref.estimates.estimates)
      same = same && (other.estimates.at(t).array() == x.array()).all();
    o.detail << "workers " << w << (same ? " identical, " : " DIFFERENT, ");
    o.require(same, "bitwise identical for " + std::to_string(w) + " workers");
  }
}

// 12. Accuracy bound from the scalar certificate.
void accuracy_bound_check(Outcome& o) {
  const Mat I = Mat::Identity(1, 1);
  const IossCertificate cert(I, I, 2.0 * I, 2.0 * I, 0.5);
  const CostSpec c = unit_cost_1d();
  const int T = 40, N = 10, delta = 5;
  long checked = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto setup = default_setup("scalar", T);
    setup.noise.w_offset.resize(0);
    setup.noise.v_offset.resize(0);
    setup.noise.w_bounds = Vec::Constant(1, 0.2);
    setup.noise.v_bounds = Vec::Constant(1, 0.3);
    const DataBatch d = setup.run(seed);
    const std::vector<std::pair<std::string, EstimateSequence>> ests{
        {"fie", fie(setup.model, d, c)},
        {"mhe", mhe(setup.model, d, c, N)},
        {"dmhe", delayed_mhe(setup.model, d, c, N, delta)}};
    for (const auto& [name, e] : ests) {
      const TimeIndex t2 = e.last();
      const auto z = reconstruct(setup.model, d, e, 0, t2);
      for (TimeIndex tau = 0; tau <= t2; ++tau) {
        const auto b = accuracy_bound(cert, setup.model, d, z, 0, t2, tau);
        ++checked;
        worst = std::max(worst, b.lhs / b.rhs);
        o.require(b.holds(), name + " seed " + std::to_string(seed) + " tau " + std::to_string(tau));
      }
    }
  }
  o.detail << checked << " (estimator, seed, tau) triples, max lhs/rhs " << fmt(worst) << " ";
}

// 13. Turnpike prior means contract toward the benchmark.
void prior_contraction(Outcome& o) {
  if (g_cstr.is_null()) g_cstr = run_preset("cstr-online", Json::object(), {}, 1, std::nullopt);
  const auto& s = g_cstr["summary"];
  const double first = med(s, "prior_distance/first_quarter"), last = med(s, "prior_distance/last_quarter");
  o.detail << "median prior distance first quarter " << fmt(first) << ", last quarter " << fmt(last) << " ";
  o.require(last < first, "last-quarter distance below first-quarter distance");
}

}  // namespace
}  // namespace tpmhe

int main() {
  using namespace tpmhe;
  const std::vector<Criterion> criteria{
      {1, "linear oracle equivalence", 30, linear_oracle},
      {2, "motivating example arcs", 10, motivating_example},
      {3, "zero-delay reduction", 60, delay_zero_reduction},
      {4, "delay monotonicity", 10, delay_monotonicity},
      {5, "smoother / batch QP duality", 60, fis_duality},
      {6, "offline AE fidelity", 300, ae_fidelity},
      {7, "AE window planning", 1, window_planning},
      {8, "batch reactor trends", 600, reactor_trends},
      {9, "CSTR delayed MHE improvement", 900, cstr_delay},
      {10, "quadrotor delayed MHE", 1800, quadrotor_delay},
      {11, "AE determinism", 300, ae_determinism},
      {12, "i-IOSS accuracy bound", 10, accuracy_bound_check},
      {13, "turnpike prior contraction", 900, prior_contraction},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "[exception: " << e.what() << "] ";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.require(secs < c.budget_seconds, "runtime budget " + fmt(c.budget_seconds) + " s");
    failures += o.pass ? 0 : 1;
    std::printf("Criterion %2d %s: %s (%s s) %s\n", c.id, c.name.c_str(), o.pass ? "PASS" : "FAIL", fmt(secs).c_str(),
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
