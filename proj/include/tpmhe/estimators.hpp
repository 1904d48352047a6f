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

#include <algorithm>
#include <atomic>
#include <deque>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "tpmhe/core.hpp"
#include "tpmhe/models.hpp"
#include "tpmhe/solver.hpp"

namespace tpmhe {

// ---------------------------------------------------------------------------
// Prior weight update
// ---------------------------------------------------------------------------

struct CovarianceStep {
  Mat P;
  bool regularized = false;
};

/// One EKF predict-and-correct step on a covariance:
/// P- = A P A' + E Qcov E', K = P- C'(C P- C' + Rcov)^-1, Joseph-form P+.
inline CovarianceStep ekf_covariance_step(const Mat& A, const Mat& E, const Mat& C, const Mat& P,
                                          const Mat& Qcov, const Mat& Rcov) {
  CovarianceStep out;
  const Mat Pm = symmetrize(A * P * A.transpose() + E * Qcov * E.transpose());
  Mat S = symmetrize(C * Pm * C.transpose() + Rcov);
  Eigen::LLT<Mat> llt(S);
  if (llt.info() != Eigen::Success || !is_positive_definite(S)) {
    S += 1e-12 * Mat::Identity(S.rows(), S.cols());
    llt.compute(S);
    out.regularized = true;
  }
  const Mat K = llt.solve(C * Pm).transpose();  // P- C' S^-1, S symmetric
  const Mat IKC = Mat::Identity(P.rows(), P.cols()) - K * C;
  out.P = symmetrize(IKC * Pm * IKC.transpose() + K * Rcov * K.transpose());
  return out;
}

struct WeightStep {
  Mat W;
  bool regularized = false;
};

inline Mat spd_inverse(const Mat& M) {
  Eigen::LLT<Mat> llt(symmetrize(M));
  if (llt.info() != Eigen::Success) throw ValidationError("spd_inverse: matrix is not positive definite");
  return symmetrize(llt.solve(Mat::Identity(M.rows(), M.cols())));
}

/// Prior weight update treating P = W^-1 as covariance and Q^-1, R^-1 as
/// disturbance and noise covariances, linearized at the prior mean xbar.
/// The measurement y only enters the mean update and is not needed here.
inline WeightStep update_prior_weight_ekf(const SystemModel& model, const Vec& xbar, const Mat& W,
                                          const Vec& u, const Vec& /*y*/, const CostSpec& cost) {
  if (!is_positive_definite(symmetrize(W)))
    throw ValidationError("update_prior_weight_ekf: W is not positive definite");
  const Jacobians jac = model.jacobians(xbar, u, Vec::Zero(model.q));
  const auto step = ekf_covariance_step(jac.fx, jac.fw, jac.hx, spd_inverse(W),
                                        spd_inverse(cost.Q()), spd_inverse(cost.R()));
  Mat Wn;
  try {
    Wn = spd_inverse(step.P);
  } catch (const ValidationError&) {
    throw SolverError(SolverError::Kind::kSingular, "update_prior_weight_ekf: covariance lost definiteness");
  }
  return {Wn, step.regularized};
}

// ---------------------------------------------------------------------------
// Online estimators (FIE, MHE, delayed MHE, MHE with prior weighting)
// ---------------------------------------------------------------------------

enum class PriorKind { kFiltering, kSmoothing, kTurnpike };
enum class WeightUpdate { kConstant, kEkf };

inline const char* to_string(PriorKind k) {
  switch (k) {
    case PriorKind::kFiltering: return "filtering";
    case PriorKind::kSmoothing: return "smoothing";
    case PriorKind::kTurnpike: return "turnpike";
  }
  return "unknown";
}
inline PriorKind prior_kind_from_string(const std::string& s) {
  for (auto k : {PriorKind::kFiltering, PriorKind::kSmoothing, PriorKind::kTurnpike})
    if (s == to_string(k)) return k;
  throw ValidationError("unknown prior kind '" + s + "'");
}
inline const char* to_string(WeightUpdate w) { return w == WeightUpdate::kEkf ? "ekf" : "constant"; }
inline WeightUpdate weight_update_from_string(const std::string& s) {
  if (s == "ekf") return WeightUpdate::kEkf;
  if (s == "constant") return WeightUpdate::kConstant;
  throw ValidationError("unknown weight update '" + s + "'");
}

struct PriorConfig {
  PriorKind kind = PriorKind::kFiltering;
  Vec mean0;
  Mat W0;
  WeightUpdate update = WeightUpdate::kConstant;

  Json to_json() const {
    return Json{{"kind", to_string(kind)}, {"mean0", tpmhe::to_json(mean0)},
                {"W0", tpmhe::to_json(W0)}, {"weight_update", to_string(update)}};
  }
};

struct OnlineConfig {
  int N = -1;  // negative: full information (window never truncates)
  std::vector<int> deltas{0};
  std::optional<PriorConfig> prior;
  SolverOptions solver;
  bool keep_windows = false;

  bool full_information() const { return N < 0; }

  Json to_json() const {
    Json j{{"N", N}, {"deltas", deltas}, {"solver", solver.to_json()}};
    if (prior) j["prior"] = prior->to_json();
    return j;
  }
};

struct OnlineResult {
  std::map<int, EstimateSequence> by_delta;
  std::map<TimeIndex, Vec> prior_means;  // window start -> prior mean used
  std::vector<HorizonSolution> windows;  // one per time step if kept
  Json diagnostics = Json::object();
};

namespace detail {

inline Json cost_json(const CostSpec& c) {
  return Json{{"Q", to_json(c.Q())}, {"R", to_json(c.R())}, {"G", to_json(c.G())}};
}

// Warm start for the window [tau, tau + N] from the previous solution.
inline WarmStart shifted_warm_start(const HorizonSolution& prev, TimeIndex tau, int N,
                                    const SystemModel& model, const DataBatch& data) {
  WarmStart ws;
  const Vec zero = Vec::Zero(model.q);
  if (tau <= prev.t_end()) {
    ws.x0 = prev.x_at(tau);
  } else {
    Vec x = prev.xs.back();
    for (TimeIndex t = prev.t_end(); t < tau; ++t) x = model.step(x, data.u(t), zero);
    ws.x0 = x;
  }
  for (int j = 0; j < N; ++j) {
    const TimeIndex t = tau + j;
    if (t >= prev.tau && t < prev.t_end())
      ws.ws.push_back(prev.ws[static_cast<std::size_t>(t - prev.tau)]);
    else
      ws.ws.push_back(prev.ws.empty() ? zero : prev.ws.back());
  }
  return ws;
}

struct DiagnosticsAccumulator {
  long solves = 0, iterations = 0;
  double max_gradient = 0.0, max_violation = 0.0;
  std::map<std::string, long> terminations;
  long ekf_regularizations = 0;

  void add(const HorizonSolution& s) {
    ++solves;
    iterations += s.stats.iterations;
    max_gradient = std::max(max_gradient, s.stats.gradient_norm);
    max_violation = std::max(max_violation, s.stats.max_violation);
    ++terminations[to_string(s.stats.termination)];
  }
  Json to_json() const {
    return Json{{"solves", solves}, {"iterations", iterations}, {"max_gradient_norm", max_gradient},
                {"max_violation", max_violation}, {"terminations", terminations},
                {"ekf_regularizations", ekf_regularizations}};
  }
};

[[noreturn]] inline void rethrow_at(const SolverError& e, TimeIndex t) {
  throw SolverError(e.kind(), "t=" + std::to_string(t) + ": " + e.what(), e.best());
}

}  // namespace detail

/// Runs the receding-horizon scheme over the whole batch. At time t the
/// window is [t - N_t, t] with N_t = min(t, N) (relative to data.t0); the
/// estimate for t - delta is the window element at t - delta. Window
/// solutions do not depend on delta, so one pass serves every delay.
inline OnlineResult run_online(const SystemModel& model, const DataBatch& data, const CostSpec& cost,
                               const OnlineConfig& cfg) {
  const bool fie = cfg.full_information();
  const int N = cfg.N;
  for (int d : cfg.deltas) {
    if (d < 0) throw ValidationError("run_online: delays must be nonnegative");
    if (d > 0 && (fie || N % 2 != 0 || d > N / 2))
      throw ValidationError("run_online: a delay requires even N and delta in [0, N/2]");
  }
  if (cfg.prior) {
    if (fie && cfg.prior->kind == PriorKind::kTurnpike)
      throw ValidationError("run_online: the turnpike prior needs a finite horizon");
    if (cfg.prior->kind == PriorKind::kTurnpike && (N % 2 != 0 || N < 2))
      throw ValidationError("run_online: the turnpike prior needs an even horizon N >= 2");
    if (cfg.prior->mean0.size() != model.n || !is_positive_definite(cfg.prior->W0))
      throw ValidationError("run_online: prior mean/weight invalid");
    if (!model.X.contains(cfg.prior->mean0))
      throw ValidationError("run_online: initial prior mean outside the state constraint set");
  }
  if (data.size() == 0) throw ValidationError("run_online: empty data");

  OnlineResult res;
  EstimatorKind kind0 = fie ? EstimatorKind::kFie : EstimatorKind::kMhe;
  if (cfg.prior) kind0 = EstimatorKind::kMhePrior;
  const std::string digest_str = digest(Json{{"config", cfg.to_json()}, {"cost", detail::cost_json(cost)},
                                             {"model", model.id}});
  for (int d : cfg.deltas) {
    EstimateSequence s;
    s.delay = d;
    s.kind = (d > 0 && !cfg.prior) ? EstimatorKind::kDelayedMhe : kind0;
    s.config_digest = digest_str;
    res.by_delta[d] = std::move(s);
  }

  detail::DiagnosticsAccumulator diag;
  const TimeIndex t0 = data.t0;
  const TimeIndex T = static_cast<TimeIndex>(data.size()) - 1;
  const int half = fie ? 0 : N / 2;

  // Prior bookkeeping (relative time k).
  std::deque<std::pair<TimeIndex, HorizonSolution>> recent;  // solutions at k-1 .. k-N/2
  std::deque<std::pair<TimeIndex, Vec>> last_states;          // x_{k|k} for filtering prior
  std::map<TimeIndex, Mat> weights;                           // window start -> W
  std::map<TimeIndex, Vec> means;                             // window start -> prior mean
  std::optional<HorizonSolution> prev;

  for (TimeIndex k = 0; k <= T; ++k) {
    const TimeIndex Nk = fie ? k : std::min<TimeIndex>(k, N);
    const TimeIndex s = k - Nk;  // relative window start
    HorizonProblem P;
    P.model = &model;
    P.data = &data;
    P.cost = &cost;
    P.tau = t0 + s;
    P.N = static_cast<int>(Nk);
    P.options = cfg.solver;

    if (cfg.prior) {
      const auto& pc = *cfg.prior;
      Vec mean;
      switch (pc.kind) {
        case PriorKind::kFiltering:
          if (!fie && k >= N) {
            mean = last_states.front().second;  // x_{k-N | k-N}
          } else {
            mean = pc.mean0;
          }
          break;
        case PriorKind::kSmoothing:
          mean = k >= 1 ? recent.front().second.x_at(t0 + s) : pc.mean0;
          break;
        case PriorKind::kTurnpike:
          mean = k >= half ? recent.back().second.x_at(t0 + s) : pc.mean0;
          break;
      }
      // Weight for this window start.
      if (!weights.count(s)) {
        if (s == 0 || pc.update == WeightUpdate::kConstant) {
          weights[s] = pc.W0;
        } else {
          const TimeIndex sp = s - 1;
          try {
            auto step = update_prior_weight_ekf(model, means.at(sp), weights.at(sp), data.u(t0 + sp),
                                                data.y(t0 + s), cost);
            if (step.regularized) ++diag.ekf_regularizations;
            weights[s] = std::move(step.W);
          } catch (const SolverError& e) {
            detail::rethrow_at(e, t0 + k);
          }
        }
      }
      means[s] = mean;
      Mat W = weights.at(s);
      if (pc.kind == PriorKind::kTurnpike && pc.update == WeightUpdate::kEkf && k >= half) {
        // Weight that was current when the buffered solution was produced.
        const TimeIndex kp = k - half;
        const TimeIndex sp = kp - std::min<TimeIndex>(kp, N);
        W = weights.at(sp);
      }
      P.prior = Prior{mean, W};
      res.prior_means[t0 + s] = mean;
    }

    HorizonSolution sol;
    try {
      std::optional<WarmStart> warm;
      if (prev) warm = detail::shifted_warm_start(*prev, P.tau, P.N, model, data);
      sol = solve_horizon(P, warm);
    } catch (const SolverError& e) {
      detail::rethrow_at(e, t0 + k);
    }
    diag.add(sol);

    for (auto& [d, seq] : res.by_delta)
      if (k >= d) seq.estimates[t0 + k - d] = sol.x_at(t0 + k - d);

    if (cfg.prior) {
      recent.emplace_front(k, sol);
      while (static_cast<int>(recent.size()) > std::max(1, half)) recent.pop_back();
      last_states.emplace_back(k, sol.xs.back());
      while (!fie && static_cast<TimeIndex>(last_states.size()) > N) last_states.pop_front();
      // Drop weights no longer reachable by the turnpike lag.
      while (!weights.empty() && weights.begin()->first + 2 * N + 2 < s) weights.erase(weights.begin());
      while (!means.empty() && means.begin()->first + 2 < s) means.erase(means.begin());
    }
    if (cfg.keep_windows) res.windows.push_back(sol);
    prev = std::move(sol);
  }
  res.diagnostics = diag.to_json();
  for (auto& [d, seq] : res.by_delta) seq.diagnostics = res.diagnostics;
  return res;
}

inline EstimateSequence fie(const SystemModel& model, const DataBatch& data, const CostSpec& cost,
                            const SolverOptions& opt = {}) {
  OnlineConfig cfg;
  cfg.solver = opt;
  return run_online(model, data, cost, cfg).by_delta.at(0);
}

inline EstimateSequence mhe(const SystemModel& model, const DataBatch& data, const CostSpec& cost,
                            int N, const SolverOptions& opt = {}) {
  if (N < 0) throw ValidationError("mhe: N must be nonnegative");
  OnlineConfig cfg;
  cfg.N = N;
  cfg.solver = opt;
  return run_online(model, data, cost, cfg).by_delta.at(0);
}

inline EstimateSequence delayed_mhe(const SystemModel& model, const DataBatch& data,
                                    const CostSpec& cost, int N, int delta,
                                    const SolverOptions& opt = {}) {
  if (N < 0) throw ValidationError("delayed_mhe: N must be nonnegative");
  OnlineConfig cfg;
  cfg.N = N;
  cfg.deltas = {delta};
  cfg.solver = opt;
  return run_online(model, data, cost, cfg).by_delta.at(delta);
}

inline OnlineResult mhe_prior(const SystemModel& model, const DataBatch& data, const CostSpec& cost,
                              int N, const PriorConfig& prior, std::vector<int> deltas = {0},
                              const SolverOptions& opt = {}, bool keep_windows = false) {
  if (N < 0) throw ValidationError("mhe_prior: N must be nonnegative");
  OnlineConfig cfg;
  cfg.N = N;
  cfg.deltas = std::move(deltas);
  cfg.prior = prior;
  cfg.solver = opt;
  cfg.keep_windows = keep_windows;
  return run_online(model, data, cost, cfg);
}

// ---------------------------------------------------------------------------
// Infinite-horizon benchmark
// ---------------------------------------------------------------------------

struct BenchmarkResult {
  EstimateSequence estimates;
  HorizonSolution solution;  // full (x, w) on the solved interval
  Json diagnostics = Json::object();
};

/// Warm start (x_0, w) reconstructed from a state sequence covering [a, b]
/// of an additive-disturbance model.
inline WarmStart warm_start_from_states(const SystemModel& model, const DataBatch& data,
                                        const EstimateSequence& est, TimeIndex a, TimeIndex b) {
  if (!model.additive_disturbance)
    throw UnsupportedError("warm_start_from_states: needs an additive-disturbance model");
  WarmStart ws;
  ws.x0 = est.at(a);
  for (TimeIndex t = a; t < b; ++t) ws.ws.push_back(est.at(t + 1) - model.drift(est.at(t), data.u(t)));
  return ws;
}

/// Clairvoyant full-information solve over the whole batch, no prior.
inline BenchmarkResult ihe_clairvoyant(const SystemModel& model, const DataBatch& data,
                                       const CostSpec& cost, const SolverOptions& opt = {},
                                       const std::optional<WarmStart>& warm = std::nullopt) {
  HorizonProblem P;
  P.model = &model;
  P.data = &data;
  P.cost = &cost;
  P.tau = data.t0;
  P.N = static_cast<int>(data.size()) - 1;
  P.options = opt;
  BenchmarkResult out;
  out.solution = solve_horizon(P, warm);
  out.estimates.kind = EstimatorKind::kIhe;
  out.estimates.delay = P.N;
  out.estimates.config_digest =
      digest(Json{{"scheme", "ihe"}, {"method", "clairvoyant_fie"}, {"cost", detail::cost_json(cost)},
                  {"solver", opt.to_json()}, {"model", model.id}});
  for (int j = 0; j <= P.N; ++j) out.estimates.estimates[P.tau + j] = out.solution.xs[static_cast<std::size_t>(j)];
  detail::DiagnosticsAccumulator diag;
  diag.add(out.solution);
  out.diagnostics = diag.to_json();
  out.diagnostics["method"] = "clairvoyant_fie";
  out.estimates.diagnostics = out.diagnostics;
  return out;
}

/// Produces data covering [-Te, T + Te] for a requested extension Te.
using DataGenerator = std::function<DataBatch(TimeIndex Te)>;

/// Extended-window benchmark: solves on [-Te, T + Te] and doubles Te until
/// the states on [0, T] change by at most tol.
inline BenchmarkResult ihe_extended_window(const SystemModel& model, const DataGenerator& gen,
                                           TimeIndex T, const CostSpec& cost, double tol = 1e-8,
                                           int max_doublings = 8, TimeIndex Te0 = 8,
                                           const SolverOptions& opt = {}) {
  std::optional<BenchmarkResult> last;
  double delta = std::numeric_limits<double>::infinity();
  TimeIndex Te = std::max<TimeIndex>(Te0, 1);
  for (int it = 0; it <= max_doublings; ++it, Te *= 2) {
    const DataBatch data = gen(Te);
    if (!data.covers(-Te) || !data.covers(T + Te))
      throw ValidationError("ihe_extended_window: generator did not cover the requested interval");
    auto cur = ihe_clairvoyant(model, data, cost, opt);
    if (last) {
      delta = 0.0;
      for (TimeIndex t = 0; t <= T; ++t)
        delta = std::max(delta, (cur.estimates.at(t) - last->estimates.at(t)).cwiseAbs().maxCoeff());
      if (delta <= tol) {
        BenchmarkResult out;
        out.solution = std::move(cur.solution);
        out.estimates = cur.estimates;
        out.estimates.estimates.clear();
        for (TimeIndex t = 0; t <= T; ++t) out.estimates.estimates[t] = cur.estimates.at(t);
        out.estimates.config_digest =
            digest(Json{{"scheme", "ihe"}, {"method", "extended_window"}, {"tol", tol},
                        {"cost", detail::cost_json(cost)}, {"model", model.id}});
        out.diagnostics = cur.diagnostics;
        out.diagnostics["method"] = "extended_window";
        out.diagnostics["Te"] = Te;
        out.diagnostics["last_change"] = delta;
        out.estimates.diagnostics = out.diagnostics;
        return out;
      }
    }
    last = std::move(cur);
  }
  throw Error("ihe_extended_window: no convergence after " + std::to_string(max_doublings) +
              " doublings (last change " + std::to_string(delta) + ")");
}

// ---------------------------------------------------------------------------
// Approximate estimator
// ---------------------------------------------------------------------------

struct AeConfig {
  int N = 0;
  int Delta = 0;
  Json to_json() const { return Json{{"N", N}, {"Delta", Delta}}; }
};

struct AeWindow {
  TimeIndex tau = 0;      // window [tau, tau + N], relative to the data start
  TimeIndex keep_lo = 0;  // kept indices [keep_lo, keep_hi]
  TimeIndex keep_hi = 0;
};

/// Windows of the approximate estimator for data on [0, T]: the first
/// window keeps its left edge through midpoint + Delta, interior windows
/// keep midpoint +- Delta, and a final window on [T - N, T] keeps every
/// index not yet covered.
inline std::vector<AeWindow> plan_ae_windows(TimeIndex T, int N, int Delta) {
  if (N < 0 || N % 2 != 0) throw ValidationError("plan_ae_windows: N must be even and nonnegative");
  if (Delta < 0 || Delta > N / 2) throw ValidationError("plan_ae_windows: Delta must lie in [0, N/2]");
  if (T < N) throw ValidationError("plan_ae_windows: T must be at least N");
  std::vector<AeWindow> plan;
  if (T == N) {
    plan.push_back({0, 0, T});
    return plan;
  }
  const TimeIndex half = N / 2;
  plan.push_back({0, 0, half + Delta});
  TimeIndex next = half + Delta + 1;
  for (;;) {
    const TimeIndex tau = next + Delta - half;
    if (tau >= T - N) break;
    plan.push_back({tau, next, next + 2 * Delta});
    next += 2 * Delta + 1;
  }
  plan.push_back({T - N, next, T});
  return plan;
}

/// Runs fn(i) for i in [0, count) on `workers` threads. The first exception
/// (by index) is rethrown after all workers finish.
inline void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
  const auto nw = static_cast<std::size_t>(std::max(1, workers));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (nw == 1 || count <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(nw, count); ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct AeResult {
  EstimateSequence estimates;
  std::vector<AeWindow> plan;
  std::vector<HorizonSolution> windows;  // filled when requested
};

/// Offline approximate estimator: independent cold-started window solves,
/// aggregated in window order, so the result does not depend on `workers`.
inline AeResult approximate_estimator(const SystemModel& model, const DataBatch& data,
                                      const CostSpec& cost, const AeConfig& cfg, int workers = 1,
                                      const SolverOptions& opt = {}, bool keep_windows = false) {
  const TimeIndex T = static_cast<TimeIndex>(data.size()) - 1;
  AeResult out;
  out.plan = plan_ae_windows(T, cfg.N, cfg.Delta);
  std::vector<HorizonSolution> sols(out.plan.size());
  parallel_for(out.plan.size(), workers, [&](std::size_t i) {
    HorizonProblem P;
    P.model = &model;
    P.data = &data;
    P.cost = &cost;
    P.tau = data.t0 + out.plan[i].tau;
    P.N = cfg.N;
    P.options = opt;
    try {
      sols[i] = solve_horizon(P);
    } catch (const SolverError& e) {
      detail::rethrow_at(e, P.tau);
    }
  });
  detail::DiagnosticsAccumulator diag;
  for (std::size_t i = 0; i < out.plan.size(); ++i) {
    diag.add(sols[i]);
    for (TimeIndex t = out.plan[i].keep_lo; t <= out.plan[i].keep_hi; ++t)
      out.estimates.estimates[data.t0 + t] = sols[i].x_at(data.t0 + t);
  }
  out.estimates.kind = EstimatorKind::kAe;
  out.estimates.delay = cfg.N;
  out.estimates.config_digest = digest(Json{{"scheme", "ae"}, {"config", cfg.to_json()},
                                            {"cost", detail::cost_json(cost)},
                                            {"solver", opt.to_json()}, {"model", model.id}});
  out.estimates.diagnostics = diag.to_json();
  out.estimates.diagnostics["windows"] = out.plan.size();
  if (keep_windows) out.windows = std::move(sols);
  return out;
}

// ---------------------------------------------------------------------------
// Kalman filter and fixed-interval smoother
// ---------------------------------------------------------------------------

struct KalmanResult {
  EstimateSequence estimates;
  std::vector<Vec> filtered;   // x_{t|t}
  std::vector<Mat> P_filtered; // P_{t|t}
  std::vector<Vec> predicted;  // x_{t|t-1}
  std::vector<Mat> P_predicted;
  long regularizations = 0;
};

/// Standard Kalman filter on a linear model; the first update uses y at the
/// first time index with prior (x0, P0).
inline KalmanResult kalman_filter(const SystemModel& model, const DataBatch& data, const Mat& Qcov,
                                  const Mat& Rcov, const Vec& x0, const Mat& P0) {
  if (!model.is_linear()) throw UnsupportedError("kalman_filter: model '" + model.id + "' is not linear");
  const auto& L = *model.linear;
  KalmanResult out;
  Vec xp = x0;
  Mat Pp = P0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const TimeIndex t = data.t0 + static_cast<TimeIndex>(k);
    out.predicted.push_back(xp);
    out.P_predicted.push_back(Pp);
    Mat S = symmetrize(L.C * Pp * L.C.transpose() + Rcov);
    Eigen::LLT<Mat> llt(S);
    if (llt.info() != Eigen::Success) {
      S += 1e-12 * Mat::Identity(S.rows(), S.cols());
      llt.compute(S);
      ++out.regularizations;
    }
    const Mat K = llt.solve(L.C * Pp).transpose();
    const Vec x = xp + K * (data.y(t) - L.C * xp);
    const Mat IKC = Mat::Identity(model.n, model.n) - K * L.C;
    const Mat P = symmetrize(IKC * Pp * IKC.transpose() + K * Rcov * K.transpose());
    out.filtered.push_back(x);
    out.P_filtered.push_back(P);
    out.estimates.estimates[t] = x;
    xp = L.A * x;
    if (L.B.cols() > 0) xp += L.B * data.u(t);
    Pp = symmetrize(L.A * P * L.A.transpose() + Qcov);
  }
  out.estimates.kind = EstimatorKind::kKf;
  out.estimates.delay = 0;
  out.estimates.config_digest = digest(Json{{"scheme", "kf"}, {"Qcov", to_json(Qcov)}, {"Rcov", to_json(Rcov)},
                                            {"x0", to_json(x0)}, {"P0", to_json(P0)}, {"model", model.id}});
  out.estimates.diagnostics = Json{{"regularizations", out.regularizations}};
  return out;
}

/// Rauch-Tung-Striebel smoother over the whole batch.
inline EstimateSequence fixed_interval_smoother(const SystemModel& model, const DataBatch& data,
                                                const Mat& Qcov, const Mat& Rcov, const Vec& x0,
                                                const Mat& P0) {
  const KalmanResult kf = kalman_filter(model, data, Qcov, Rcov, x0, P0);
  const auto& A = model.linear->A;
  const std::size_t K = data.size();
  std::vector<Vec> xs(K);
  xs[K - 1] = kf.filtered[K - 1];
  for (std::size_t k = K - 1; k-- > 0;) {
    Eigen::LLT<Mat> llt(kf.P_predicted[k + 1]);
    const Mat Gk = llt.solve(A * kf.P_filtered[k]).transpose();  // P_k A' Pp^-1
    xs[k] = kf.filtered[k] + Gk * (xs[k + 1] - kf.predicted[k + 1]);
  }
  EstimateSequence out;
  for (std::size_t k = 0; k < K; ++k) out.estimates[data.t0 + static_cast<TimeIndex>(k)] = xs[k];
  out.kind = EstimatorKind::kFis;
  out.delay = static_cast<int>(K) - 1;
  out.config_digest = digest(Json{{"scheme", "fis"}, {"Qcov", to_json(Qcov)}, {"Rcov", to_json(Rcov)},
                                  {"x0", to_json(x0)}, {"P0", to_json(P0)}, {"model", model.id}});
  out.diagnostics = kf.estimates.diagnostics;
  return out;
}

}  // namespace tpmhe
