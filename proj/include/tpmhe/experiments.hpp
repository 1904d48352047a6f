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

#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "tpmhe/analysis.hpp"
#include "tpmhe/core.hpp"
#include "tpmhe/estimators.hpp"
#include "tpmhe/io.hpp"
#include "tpmhe/models.hpp"
#include "tpmhe/random.hpp"
#include "tpmhe/simulate.hpp"

namespace tpmhe {

using MetricMap = std::map<std::string, double>;

// ---------------------------------------------------------------------------
// Defaults shared by the CLI and the presets
// ---------------------------------------------------------------------------

/// Stage and terminal weights used for each registry model.
inline CostSpec default_cost(const SystemModel& m) {
  if (m.id == "cstr") return CostSpec::diagonal((Vec(3) << 1e3, 1.0, 1e5).finished(), Vec::Ones(1), Vec::Ones(1));
  if (m.id == "quadrotor") {
    Vec q(12), r(6);
    q << Vec::Constant(3, 1e2), Vec::Constant(3, 1e4), Vec::Constant(3, 1e3), Vec::Constant(3, 1e5);
    r << Vec::Constant(3, 10.0), Vec::Constant(3, 1e2);
    return CostSpec::diagonal(q, r, r);
  }
  return CostSpec::diagonal(Vec::Ones(m.q), Vec::Ones(m.p), Vec::Ones(m.p));
}

/// Initial prior weight used for each registry model.
inline Mat default_prior_weight(const SystemModel& m) {
  if (m.id == "cstr") return 1e-2 * Mat::Identity(3, 3);
  if (m.id == "quadrotor") return 10.0 * Mat::Identity(12, 12);
  return Mat::Identity(m.n, m.n);
}

inline CostSpec cost_from_json(const Json& j, const CostSpec& base) {
  return CostSpec(j.contains("Q") ? mat_from_json(j["Q"]) : base.Q(),
                  j.contains("R") ? mat_from_json(j["R"]) : base.R(),
                  j.contains("G") ? mat_from_json(j["G"]) : base.G());
}

/// Random initial prior: CSTR within +-spread of the nominal initial state,
/// quadrotor uniform over |z_i| <= 1, |xi_i| <= pi/16 with zero velocities.
inline Vec sample_initial_prior(const SystemModel& m, const Vec& x0, std::uint64_t seed, double spread = 0.25) {
  Rng rng(split_seed(seed, "initial-prior"));
  if (m.id == "quadrotor") {
    Vec xb = Vec::Zero(12);
    for (int i = 0; i < 3; ++i) xb(i) = rng.symmetric(1.0);
    for (int i = 3; i < 6; ++i) xb(i) = rng.symmetric(std::numbers::pi / 16.0);
    return xb;
  }
  Vec xb(x0.size());
  for (Eigen::Index i = 0; i < x0.size(); ++i) xb(i) = x0(i) * (1.0 + rng.symmetric(spread));
  return xb;
}

// ---------------------------------------------------------------------------
// Motivating scalar example
// ---------------------------------------------------------------------------

/// x+ = x + 1, y = x + 1 on [-Te, T + Te] with x_0 = 1.
inline DataBatch scalar_example_data(TimeIndex Te, int T = 30) {
  DataBatch b;
  b.t0 = -Te;
  TruthRecord tr;
  for (TimeIndex t = -Te; t <= T + Te; ++t) {
    const double x = 1.0 + static_cast<double>(t);
    b.inputs.push_back(Vec::Zero(0));
    b.outputs.push_back(Vec::Constant(1, x + 1.0));
    tr.x.push_back(Vec::Constant(1, x));
    tr.v.push_back(Vec::Constant(1, 1.0));
    if (t < T + Te) tr.w.push_back(Vec::Constant(1, 1.0));
  }
  b.truth = std::move(tr);
  b.meta.model_id = "scalar";
  b.meta.generation = {{"example", "constant disturbance and noise"}, {"T", T}, {"Te", Te}};
  return b;
}

inline CostSpec unit_cost_1d() { return CostSpec::diagonal(Vec::Ones(1), Vec::Ones(1), Vec::Ones(1)); }

/// Extended-window benchmark of the scalar example on [0, T].
inline BenchmarkResult scalar_example_benchmark(int T = 30, double tol = 1e-8) {
  const SystemModel m = scalar_integrator();
  return ihe_extended_window(
      m, [T](TimeIndex Te) { return scalar_example_data(Te, T); }, T, unit_cost_1d(), tol);
}

struct ArcComparison {
  int arc_length = 0;     // compared offsets 0..arc_length - 1 on each side
  double max_left = 0.0;  // largest disagreement on the approaching arcs
  double max_right = 0.0;
};

/// Compares deviation curves of single windows [0, N] aligned at their
/// left and right boundaries over the shortest approach/leave length.
inline ArcComparison compare_arcs(const std::vector<std::vector<double>>& devs, const std::vector<int>& Ns,
                                  int arc_length) {
  ArcComparison c;
  c.arc_length = arc_length;
  for (std::size_t a = 0; a < devs.size(); ++a)
    for (std::size_t b = a + 1; b < devs.size(); ++b)
      for (int j = 0; j < arc_length; ++j) {
        const auto ja = static_cast<std::size_t>(j);
        c.max_left = std::max(c.max_left, std::abs(devs[a][ja] - devs[b][ja]));
        const auto ra = static_cast<std::size_t>(Ns[a] - j), rb = static_cast<std::size_t>(Ns[b] - j);
        c.max_right = std::max(c.max_right, std::abs(devs[a][ra] - devs[b][rb]));
      }
  return c;
}

// ---------------------------------------------------------------------------
// Artifact sink
// ---------------------------------------------------------------------------

/// Optional output directory; all writes are no-ops without one.
struct ArtifactSink {
  std::optional<fs::path> dir;
  std::vector<std::string>* files = nullptr;
  std::mutex* mu = nullptr;

  bool active() const { return dir.has_value(); }
  fs::path path(const std::string& rel) const { return *dir / rel; }
  void record(const std::string& rel) const {
    if (!files) return;
    if (mu) {
      std::lock_guard<std::mutex> lock(*mu);
      files->push_back(rel);
    } else {
      files->push_back(rel);
    }
  }
  void batch(const std::string& rel, const DataBatch& b, const SystemModel& m) const {
    if (!active()) return;
    write_batch(b, path(rel), {m.n, m.m, m.q, m.p});
    record(rel);
  }
  void estimates(const std::string& rel, const EstimateSequence& e, const Json& extra = Json::object()) const {
    if (!active()) return;
    write_estimates(e, path(rel), extra);
    record(rel);
  }
  void table(const std::string& rel, const std::vector<std::string>& header,
             const std::vector<std::vector<std::string>>& rows) const {
    if (!active()) return;
    write_table(path(rel), header, rows);
    record(rel);
  }
};

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

struct PresetSeedResult {
  MetricMap metrics;
  std::string truth_digest;
  Json timing = Json::object();  // wall-clock seconds, excluded from digests
};

/// Named experiment with its parameter bundle. `params` carries every
/// value that affects results; `run_seed` is deterministic in (params, seed).
struct ExperimentPreset {
  std::string name;
  Json params;
  std::vector<std::uint64_t> default_seeds;
  std::function<PresetSeedResult(const Json& params, std::uint64_t seed, const ArtifactSink& sink)> run_seed;
};

inline std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count) {
  std::vector<std::uint64_t> s;
  for (std::size_t i = 0; i < count; ++i) s.push_back(first + i);
  return s;
}

inline std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed) + "/"; }

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

namespace detail {

inline std::vector<std::string> row(std::initializer_list<std::string> cells) { return cells; }
inline std::string num(double v) { return format_double(v); }

inline SolverOptions preset_solver(const Json& p) {
  return p.contains("solver") ? SolverOptions::from_json(p["solver"]) : SolverOptions{};
}

}  // namespace detail

/// Scalar example: windows [0, N] for several N against the extended-window
/// benchmark, plus the delay sweep of delayed MHE.
inline PresetSeedResult run_motivating_scalar(const Json& p, std::uint64_t, const ArtifactSink& sink) {
  const int T = p.at("T").get<int>();
  const auto Ns = p.at("N").get<std::vector<int>>();
  const int Nd = p.at("delay_sweep_N").get<int>();
  const SystemModel m = scalar_integrator();
  const CostSpec cost = unit_cost_1d();
  PresetSeedResult out;
  const auto bench = scalar_example_benchmark(T, p.at("benchmark_tol").get<double>());
  const DataBatch data = scalar_example_data(0, T);
  out.truth_digest = truth_digest(data);
  sink.batch("data.csv", data, m);
  sink.estimates("benchmark.csv", bench.estimates);
  for (int N : Ns) {
    HorizonProblem P;
    P.model = &m;
    P.data = &data;
    P.cost = &cost;
    P.N = N;
    P.options = detail::preset_solver(p);
    const auto sol = solve_horizon(P);
    std::vector<std::vector<std::string>> rows;
    double mid = 0.0;
    std::vector<std::pair<double, double>> pts;
    for (int j = 0; j <= N; ++j) {
      const double dx = std::abs(sol.xs[static_cast<std::size_t>(j)](0) - bench.estimates.at(j)(0));
      const double dw = j < N ? std::abs(sol.ws[static_cast<std::size_t>(j)](0) -
                                         bench.solution.ws.at(static_cast<std::size_t>(j - bench.solution.tau))(0))
                              : 0.0;
      rows.push_back(detail::row({std::to_string(j), detail::num(dx), detail::num(dw)}));
      if (j == N / 2) mid = dx;
      pts.emplace_back(std::min(j, N - j), dx);
    }
    sink.table("deviation_N" + std::to_string(N) + ".csv", {"j", "dx", "dw"}, rows);
    const auto fit = fit_exponential_envelope(pts);
    const std::string k = "N" + std::to_string(N);
    out.metrics["midpoint_deviation/" + k] = mid;
    out.metrics["envelope_lambda/" + k] = fit.lambda;
    out.metrics["envelope_K/" + k] = fit.K;
    out.metrics["cost/" + k] = sol.cost;
  }
  std::vector<std::vector<std::string>> rows;
  for (int d = 0; d <= Nd / 2; d += 2) {
    const auto est = delayed_mhe(m, data, cost, Nd, d, detail::preset_solver(p));
    double mx = 0.0;
    for (TimeIndex j = d; j <= T - d; ++j) mx = std::max(mx, std::abs(est.at(j)(0) - bench.estimates.at(j)(0)));
    out.metrics["delay_max_deviation/d" + std::to_string(d)] = mx;
    rows.push_back(detail::row({std::to_string(d), detail::num(mx)}));
  }
  sink.table("delay_sweep.csv", {"delta", "max_deviation"}, rows);
  return out;
}

/// Batch reactor: full solution, approximate estimator and MHE across N.
inline PresetSeedResult run_batch_reactor(const Json& p, std::uint64_t seed, const ArtifactSink& sink) {
  const auto setup = default_setup("reactor", p.at("T").get<int>());
  const auto& m = setup.model;
  const CostSpec cost = cost_from_json(p.value("cost", Json::object()), default_cost(m));
  const SolverOptions opt = detail::preset_solver(p);
  const DataBatch data = setup.run(seed);
  const std::string sd = seed_dir(seed);
  sink.batch(sd + "data.csv", data, m);
  PresetSeedResult out;
  out.truth_digest = truth_digest(data);
  const TimeIndex T = data.t_end();
  auto t0 = std::chrono::steady_clock::now();
  const auto full = ihe_clairvoyant(m, data, cost, opt);
  out.timing["full"] = seconds_since(t0);
  sink.estimates(sd + "full.csv", full.estimates);
  const double sse_full = sse(full.estimates, data);
  out.metrics["sse/full"] = sse_full;
  out.metrics["J/full"] = performance(m, data, cost, full.solution, 0, T);
  std::vector<std::vector<std::string>> rows;
  rows.push_back(detail::row({"full", "-", detail::num(sse_full), detail::num(out.metrics["J/full"])}));
  for (int N : p.at("N").get<std::vector<int>>()) {
    const std::string k = "N" + std::to_string(N);
    t0 = std::chrono::steady_clock::now();
    const auto ae = approximate_estimator(m, data, cost, {N, p.value("Delta", 0)}, 1, opt);
    out.timing["ae/" + k] = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    const auto mh = mhe(m, data, cost, N, opt);
    out.timing["mhe/" + k] = seconds_since(t0);
    sink.estimates(sd + "ae_" + k + ".csv", ae.estimates);
    sink.estimates(sd + "mhe_" + k + ".csv", mh);
    const double sa = sse(ae.estimates, data), sm = sse(mh, data);
    const double ja = performance(m, data, cost, ae.estimates, 0, T);
    const double jm = performance(m, data, cost, mh, 0, T);
    out.metrics["sse/ae/" + k] = sa;
    out.metrics["sse/mhe/" + k] = sm;
    out.metrics["sse_gap/ae/" + k] = sa / sse_full - 1.0;
    out.metrics["sse_gap/mhe/" + k] = sm / sse_full - 1.0;
    out.metrics["J/ae/" + k] = ja;
    out.metrics["J/mhe/" + k] = jm;
    rows.push_back(detail::row({"ae", std::to_string(N), detail::num(sa), detail::num(ja)}));
    rows.push_back(detail::row({"mhe", std::to_string(N), detail::num(sm), detail::num(jm)}));
  }
  sink.table(sd + "table.csv", {"scheme", "N", "sse", "J"}, rows);
  return out;
}

/// Random LTI offline study: full solution, AE, FIS and KF.
inline PresetSeedResult run_lti_offline(const Json& p, std::uint64_t seed, const ArtifactSink& sink) {
  const int n = p.at("n").get<int>(), mi = p.at("m").get<int>(), pp = p.at("p").get<int>();
  const std::string id = "lti:" + std::to_string(n) + ":" + std::to_string(mi) + ":" + std::to_string(pp) + ":" +
                         std::to_string(p.contains("model_seed") ? p["model_seed"].get<std::uint64_t>() : seed);
  const auto setup = default_setup(id, p.at("T").get<int>());
  const auto& m = setup.model;
  const CostSpec cost = cost_from_json(p.value("cost", Json::object()), default_cost(m));
  const SolverOptions opt = detail::preset_solver(p);
  const DataBatch data = setup.run(seed);
  const std::string sd = seed_dir(seed);
  sink.batch(sd + "data.csv", data, m);
  PresetSeedResult out;
  out.truth_digest = truth_digest(data);
  const TimeIndex T = data.t_end();
  const int workers = p.value("ae_workers", 1);
  std::vector<std::vector<std::string>> rows;
  auto record = [&](const std::string& name, const EstimateSequence& e, double secs) {
    const double J = performance(m, data, cost, e, 0, T), s = sse(e, data);
    out.metrics["J/" + name] = J;
    out.metrics["sse/" + name] = s;
    out.timing[name] = secs;
    rows.push_back(detail::row({name, detail::num(J), detail::num(s), detail::num(secs)}));
    sink.estimates(sd + name + ".csv", e);
  };
  auto t0 = std::chrono::steady_clock::now();
  const auto full = ihe_clairvoyant(m, data, cost, opt);
  record("full", full.estimates, seconds_since(t0));
  t0 = std::chrono::steady_clock::now();
  const auto ae = approximate_estimator(m, data, cost, {p.at("N").get<int>(), p.at("Delta").get<int>()}, workers, opt);
  record("ae", ae.estimates, seconds_since(t0));
  out.metrics["ae_windows"] = static_cast<double>(ae.plan.size());
  Rng rng(split_seed(seed, "kf-initial-state"));
  const Vec x0 = rng.normal_vec(m.n);
  const Mat P0 = Mat::Identity(m.n, m.n);
  const Mat Qcov = spd_inverse(cost.Q()), Rcov = spd_inverse(cost.R());
  t0 = std::chrono::steady_clock::now();
  const auto fis = fixed_interval_smoother(m, data, Qcov, Rcov, x0, P0);
  record("fis", fis, seconds_since(t0));
  t0 = std::chrono::steady_clock::now();
  const auto kf = kalman_filter(m, data, Qcov, Rcov, x0, P0);
  record("kf", kf.estimates, seconds_since(t0));
  out.metrics["J_gap/ae"] = out.metrics["J/ae"] / out.metrics["J/full"] - 1.0;
  out.metrics["sse_gap/ae"] = out.metrics["sse/ae"] / out.metrics["sse/full"] - 1.0;
  sink.table(sd + "table.csv", {"estimator", "J", "sse", "seconds"}, rows);
  return out;
}

/// Online study with prior weighting (CSTR or quadrotor): MHE with the
/// filtering, smoothing and turnpike priors, delayed MHE with the turnpike
/// prior, and the clairvoyant benchmark.
inline PresetSeedResult run_online_priors(const Json& p, std::uint64_t seed, const ArtifactSink& sink) {
  const std::string model_id = p.at("model").get<std::string>();
  const auto setup = default_setup(model_id, p.at("T").get<int>());
  const auto& m = setup.model;
  const CostSpec cost = cost_from_json(p.value("cost", Json::object()), default_cost(m));
  const SolverOptions opt = detail::preset_solver(p);
  const int N = p.at("N").get<int>();
  const auto deltas = p.at("deltas").get<std::vector<int>>();
  const int dmax = *std::max_element(deltas.begin(), deltas.end());
  const DataBatch data = setup.run(seed);
  const TimeIndex T = data.t_end();
  const TimeIndex hi = T - dmax;  // common range of every published sequence
  const std::string sd = seed_dir(seed);
  sink.batch(sd + "data.csv", data, m);
  PresetSeedResult out;
  out.truth_digest = truth_digest(data);

  PriorConfig pc;
  pc.mean0 = sample_initial_prior(m, setup.x0, seed, p.value("prior_spread", 0.25));
  pc.W0 = p.contains("W0_diag") ? Mat(vec_from_json(p["W0_diag"]).asDiagonal()) : default_prior_weight(m);
  pc.update = weight_update_from_string(p.value("weight_update", std::string("ekf")));

  auto t0 = std::chrono::steady_clock::now();
  const auto ihe = ihe_clairvoyant(m, data, cost, opt);
  out.timing["ihe"] = seconds_since(t0);
  sink.estimates(sd + "ihe.csv", ihe.estimates);
  out.metrics["sse/ihe"] = sse(ihe.estimates, data, 0, hi);
  std::vector<std::vector<std::string>> rows;
  rows.push_back(detail::row({"ihe", "-", detail::num(out.metrics["sse/ihe"])}));

  for (const auto& prior_name : p.at("priors").get<std::vector<std::string>>()) {
    pc.kind = prior_kind_from_string(prior_name);
    const bool tp = pc.kind == PriorKind::kTurnpike;
    t0 = std::chrono::steady_clock::now();
    const auto res = mhe_prior(m, data, cost, N, pc, tp ? deltas : std::vector<int>{0}, opt, tp);
    out.timing["mhe_prior/" + prior_name] = seconds_since(t0);
    for (const auto& [d, seq] : res.by_delta) {
      const std::string k = prior_name + "/d" + std::to_string(d);
      const double s = sse(seq, data, 0, hi);
      out.metrics["sse/" + k] = s;
      out.metrics["regret_per_step/" + k] =
          regret(m, data, cost, seq, ihe.estimates, 0, hi) / static_cast<double>(hi);
      rows.push_back(detail::row({prior_name, std::to_string(d), detail::num(s)}));
      sink.estimates(sd + "mhe_" + prior_name + "_d" + std::to_string(d) + ".csv", seq,
                     Json{{"prior", prior_name}});
    }
    if (!tp) continue;
    // Prior-mean distance to the benchmark, early versus late.
    std::vector<double> dist;
    std::vector<std::vector<std::string>> drows;
    for (const auto& [s, xb] : res.prior_means) {
      if (s > hi) continue;
      const double dd = (xb - ihe.estimates.at(s)).norm();
      dist.push_back(dd);
      drows.push_back(detail::row({std::to_string(s), detail::num(dd),
                                   detail::num((res.by_delta.at(0).at(s) - ihe.estimates.at(s)).norm())}));
    }
    sink.table(sd + "turnpike_prior_distance.csv", {"t", "prior_distance", "mhe_distance"}, drows);
    const std::size_t q = dist.size() / 4;
    if (q > 0) {
      double first = 0.0, last = 0.0;
      for (std::size_t i = 0; i < q; ++i) {
        first += dist[i];
        last += dist[dist.size() - q + i];
      }
      out.metrics["prior_distance/first_quarter"] = first / static_cast<double>(q);
      out.metrics["prior_distance/last_quarter"] = last / static_cast<double>(q);
    }
    // Turnpike shape of the full-length windows.
    const auto prof = turnpike_profile(res.windows, ihe.solution, N, -1.0, median_output_scale(data));
    std::size_t interior = 0;
    std::vector<std::vector<std::string>> prow;
    for (std::size_t w = 0; w < prof.state_dev.size(); ++w) {
      const auto& dv = prof.state_dev[w];
      const double mid = dv[static_cast<std::size_t>(N / 2)];
      if (mid < std::max(dv.front(), dv.back())) ++interior;
      for (int j = 0; j <= N; ++j)
        prow.push_back(detail::row({std::to_string(prof.taus[w]), std::to_string(j),
                                    detail::num(dv[static_cast<std::size_t>(j)])}));
    }
    sink.table(sd + "turnpike_profile.csv", {"tau", "j", "state_deviation"}, prow);
    if (!prof.state_dev.empty())
      out.metrics["interior_below_boundary_fraction"] =
          static_cast<double>(interior) / static_cast<double>(prof.state_dev.size());
  }
  sink.table(sd + "sse.csv", {"prior", "delta", "sse"}, rows);
  return out;
}

inline Json default_solver_json() { return SolverOptions{}.to_json(); }

/// Registry of presets with desk-scale defaults.
inline ExperimentPreset make_preset(const std::string& name) {
  ExperimentPreset p;
  p.name = name;
  if (name == "motivating-scalar") {
    p.params = {{"T", 30}, {"N", {10, 20, 30}}, {"delay_sweep_N", 20}, {"benchmark_tol", 1e-8},
                {"solver", default_solver_json()}};
    p.default_seeds = {0};
    p.run_seed = run_motivating_scalar;
  } else if (name == "batch-reactor") {
    p.params = {{"T", 400}, {"N", {40, 70, 100, 130, 160}}, {"Delta", 0}, {"solver", default_solver_json()}};
    p.default_seeds = seed_range(1, 10);
    p.run_seed = run_batch_reactor;
  } else if (name == "lti-offline") {
    p.params = {{"n", 8}, {"m", 30}, {"p", 4}, {"T", 1200}, {"N", 150}, {"Delta", 70}, {"ae_workers", 1},
                {"solver", default_solver_json()}};
    p.default_seeds = seed_range(1, 5);
    p.run_seed = run_lti_offline;
  } else if (name == "cstr-online") {
    p.params = {{"model", "cstr"}, {"T", 200}, {"N", 10}, {"deltas", {0, 1, 3, 5}},
                {"priors", {"filtering", "smoothing", "turnpike"}}, {"weight_update", "ekf"},
                {"W0_diag", {1e-2, 1e-2, 1e-2}}, {"prior_spread", 0.25},
                {"solver", default_solver_json()}};
    p.default_seeds = seed_range(1, 20);
    p.run_seed = run_online_priors;
  } else if (name == "quadrotor-online") {
    p.params = {{"model", "quadrotor"}, {"T", 200}, {"N", 30}, {"deltas", {0, 1, 3, 15}},
                {"priors", {"filtering", "smoothing", "turnpike"}}, {"weight_update", "ekf"},
                {"W0_diag", std::vector<double>(12, 10.0)}, {"solver", default_solver_json()}};
    p.default_seeds = seed_range(1, 10);
    p.run_seed = run_online_priors;
  } else {
    throw ValidationError("unknown preset '" + name +
                          "' (expected motivating-scalar, batch-reactor, lti-offline, cstr-online, quadrotor-online)");
  }
  return p;
}

inline std::vector<std::string> preset_names() {
  return {"motivating-scalar", "batch-reactor", "lti-offline", "cstr-online", "quadrotor-online"};
}

// ---------------------------------------------------------------------------
// Summaries and manifests
// ---------------------------------------------------------------------------

inline Json summarize(const std::vector<MetricMap>& per_seed) {
  std::map<std::string, std::vector<double>> cols;
  for (const auto& mm : per_seed)
    for (const auto& [k, v] : mm) cols[k].push_back(v);
  Json s = Json::object();
  for (const auto& [k, v] : cols)
    s[k] = {{"median", median(v)}, {"q25", quantile(v, 0.25)}, {"q75", quantile(v, 0.75)},
            {"min", *std::min_element(v.begin(), v.end())}, {"max", *std::max_element(v.begin(), v.end())},
            {"count", v.size()}};
  return s;
}

/// Runs a preset over seeds and writes artifacts and `manifest.json` under
/// out_dir (when given). A `.partial` marker exists while the run is
/// incomplete and is kept if a stage fails.
inline Json run_preset(const std::string& name, const Json& overrides, std::vector<std::uint64_t> seeds,
                       int workers, const std::optional<fs::path>& out_dir) {
  ExperimentPreset preset = make_preset(name);
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    if (!preset.params.contains(it.key()) && it.key() != "cost" && it.key() != "model_seed")
      throw ValidationError("preset '" + name + "' has no parameter '" + it.key() + "'");
    preset.params[it.key()] = it.value();
  }
  if (seeds.empty()) seeds = preset.default_seeds;
  std::vector<std::string> files;
  std::mutex mu;
  ArtifactSink sink;
  if (out_dir) {
    fs::create_directories(*out_dir);
    write_text(*out_dir / ".partial", "incomplete run\n");
    sink.dir = *out_dir;
    sink.files = &files;
    sink.mu = &mu;
  }
  std::vector<PresetSeedResult> results(seeds.size());
  const auto t0 = std::chrono::steady_clock::now();
  parallel_for(seeds.size(), workers, [&](std::size_t i) {
    try {
      results[i] = preset.run_seed(preset.params, seeds[i], sink);
    } catch (const SolverError& e) {
      throw SolverError(e.kind(), "preset " + name + ", seed " + std::to_string(seeds[i]) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("preset " + name + ", seed " + std::to_string(seeds[i]) + ": " + e.what());
    } catch (const Error& e) {
      throw Error("preset " + name + ", seed " + std::to_string(seeds[i]) + ": " + e.what());
    }
  });
  std::vector<MetricMap> mm;
  Json per_seed = Json::array(), timing = Json::object();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    mm.push_back(results[i].metrics);
    per_seed.push_back({{"seed", seeds[i]}, {"truth_digest", results[i].truth_digest},
                        {"metrics", results[i].metrics}});
    timing[std::to_string(seeds[i])] = results[i].timing;
  }
  std::sort(files.begin(), files.end());
  Json manifest{{"preset", name},
                {"parameters", preset.params},
                {"seeds", seeds},
                {"config_digest", digest(Json{{"preset", name}, {"parameters", preset.params}, {"seeds", seeds}})},
                {"per_seed", per_seed},
                {"summary", summarize(mm)},
                {"artifacts", files}};
  manifest["results_digest"] = digest(Json{{"per_seed", per_seed}});
  manifest["timing"] = {{"total_seconds", seconds_since(t0)}, {"per_seed", timing}, {"workers", workers}};
  if (out_dir) {
    write_json(*out_dir / "manifest.json", manifest);
    fs::remove(*out_dir / ".partial");
  }
  return manifest;
}

/// Aligned comparison of manifest summaries: one row per metric with the
/// median and quartiles of each manifest. Manifests must share per-seed
/// truth digests for the seeds they have in common.
inline Json compare_manifests(const std::vector<Json>& manifests) {
  if (manifests.empty()) throw ValidationError("compare: no manifests");
  std::map<std::uint64_t, std::string> truth;
  for (const auto& man : manifests)
    for (const auto& s : man.at("per_seed")) {
      const auto seed = s.at("seed").get<std::uint64_t>();
      const auto d = s.at("truth_digest").get<std::string>();
      auto [it, inserted] = truth.emplace(seed, d);
      if (!inserted && it->second != d)
        throw ValidationError("compare: truth digests differ for seed " + std::to_string(seed));
    }
  std::map<std::string, Json> rows;
  for (std::size_t i = 0; i < manifests.size(); ++i)
    for (auto it = manifests[i].at("summary").begin(); it != manifests[i].at("summary").end(); ++it) {
      Json& r = rows[it.key()];
      if (r.is_null()) r = Json{{"metric", it.key()}, {"runs", Json::array()}};
      r["runs"].push_back({{"run", i}, {"median", it.value().at("median")}, {"q25", it.value().at("q25")},
                           {"q75", it.value().at("q75")}});
    }
  Json table = Json::array();
  for (auto& [k, r] : rows) {
    const auto& runs = r["runs"];
    if (runs.size() == manifests.size() && !runs.empty()) {
      const double base = runs[0]["median"].get<double>();
      Json diffs = Json::array();
      for (const auto& x : runs) diffs.push_back(x["median"].get<double>() - base);
      r["median_difference"] = diffs;
    }
    table.push_back(r);
  }
  return Json{{"manifests", manifests.size()}, {"rows", table}};
}

}  // namespace tpmhe
