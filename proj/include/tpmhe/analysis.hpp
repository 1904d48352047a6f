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
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tpmhe/core.hpp"
#include "tpmhe/models.hpp"

namespace tpmhe {

// ---------------------------------------------------------------------------
// State-disturbance sequences
// ---------------------------------------------------------------------------

/// States x_{t1..t2} with disturbances w_{t1..t2-1}.
struct StateDisturbanceSequence {
  TimeIndex t1 = 0;
  std::vector<Vec> xs;
  std::vector<Vec> ws;

  TimeIndex t2() const { return t1 + static_cast<TimeIndex>(xs.size()) - 1; }
  const Vec& x(TimeIndex t) const { return xs.at(static_cast<std::size_t>(t - t1)); }
  const Vec& w(TimeIndex t) const { return ws.at(static_cast<std::size_t>(t - t1)); }
};

/// Restricts a horizon solution to [t1, t2].
inline StateDisturbanceSequence restrict(const HorizonSolution& sol, TimeIndex t1, TimeIndex t2) {
  if (t1 < sol.tau || t2 > sol.t_end() || t1 > t2)
    throw ValidationError("restrict: interval outside the solution window");
  StateDisturbanceSequence z;
  z.t1 = t1;
  for (TimeIndex t = t1; t <= t2; ++t) z.xs.push_back(sol.x_at(t));
  for (TimeIndex t = t1; t < t2; ++t) z.ws.push_back(sol.ws.at(static_cast<std::size_t>(t - sol.tau)));
  return z;
}

/// Builds (x, w) on [t1, t2] from published state estimates of an
/// additive-disturbance model, with w_j = x_{j+1} - f(x_j, u_j, 0).
inline StateDisturbanceSequence reconstruct(const SystemModel& model, const DataBatch& data,
                                            const EstimateSequence& est, TimeIndex t1, TimeIndex t2) {
  if (!model.additive_disturbance)
    throw UnsupportedError("reconstruct: disturbance reconstruction needs an additive-disturbance model");
  if (t1 > t2 || !est.covers(t1, t2))
    throw ValidationError("reconstruct: estimates do not cover [" + std::to_string(t1) + ", " +
                          std::to_string(t2) + "]");
  StateDisturbanceSequence z;
  z.t1 = t1;
  for (TimeIndex t = t1; t <= t2; ++t) z.xs.push_back(est.at(t));
  for (TimeIndex t = t1; t < t2; ++t) z.ws.push_back(est.at(t + 1) - model.drift(est.at(t), data.u(t)));
  return z;
}

// ---------------------------------------------------------------------------
// Performance, SSE, regret
// ---------------------------------------------------------------------------

/// J_[t1,t2] = sum_{j=t1}^{t2-1} |w_j|_Q^2 + |y_j - h(x_j, u_j)|_R^2.
inline double performance(const SystemModel& model, const DataBatch& data, const CostSpec& cost,
                          const StateDisturbanceSequence& z, TimeIndex t1, TimeIndex t2) {
  if (t1 > t2) throw ValidationError("performance: t1 must not exceed t2");
  if (t1 < z.t1 || t2 > z.t2()) throw ValidationError("performance: sequence does not cover the interval");
  double J = 0.0;
  for (TimeIndex j = t1; j < t2; ++j) {
    J += weighted_sq_norm(z.w(j), cost.Q());
    J += weighted_sq_norm(data.y(j) - model.output(z.x(j), data.u(j)), cost.R());
  }
  return J;
}

inline double performance(const SystemModel& model, const DataBatch& data, const CostSpec& cost,
                          const EstimateSequence& est, TimeIndex t1, TimeIndex t2) {
  return performance(model, data, cost, reconstruct(model, data, est, t1, t2), t1, t2);
}

inline double performance(const SystemModel& model, const DataBatch& data, const CostSpec& cost,
                          const HorizonSolution& sol, TimeIndex t1, TimeIndex t2) {
  return performance(model, data, cost, restrict(sol, t1, t2), t1, t2);
}

/// Sum of squared state errors against the simulated truth on [a, b].
inline double sse(const EstimateSequence& est, const DataBatch& data, TimeIndex a, TimeIndex b) {
  if (!data.truth) throw ValidationError("sse: data carry no ground truth");
  if (a > b) throw ValidationError("sse: empty range");
  if (!data.covers(a) || !data.covers(b)) throw ValidationError("sse: range outside the data");
  double s = 0.0;
  for (TimeIndex t = a; t <= b; ++t) s += (est.at(t) - data.x_true(t)).squaredNorm();
  return s;
}

inline double sse(const EstimateSequence& est, const DataBatch& data) {
  return sse(est, data, data.t0, data.t_end());
}

/// Dynamic regret J(est) - J(benchmark) on [t1, t2]; may be negative.
inline double regret(const SystemModel& model, const DataBatch& data, const CostSpec& cost,
                     const StateDisturbanceSequence& est, const StateDisturbanceSequence& bench,
                     TimeIndex t1, TimeIndex t2) {
  return performance(model, data, cost, est, t1, t2) - performance(model, data, cost, bench, t1, t2);
}

inline double regret(const SystemModel& model, const DataBatch& data, const CostSpec& cost,
                     const EstimateSequence& est, const EstimateSequence& bench, TimeIndex t1,
                     TimeIndex t2) {
  return regret(model, data, cost, reconstruct(model, data, est, t1, t2),
                reconstruct(model, data, bench, t1, t2), t1, t2);
}

// ---------------------------------------------------------------------------
// Turnpike profiles
// ---------------------------------------------------------------------------

struct EnvelopeFit {
  bool ok = false;
  double K = 0.0;
  double lambda = 0.0;
  double residual = 0.0;  // |log-residual| / |log-data|
  std::size_t points = 0;

  Json to_json() const {
    return Json{{"ok", ok}, {"K", K}, {"lambda", lambda}, {"residual", residual}, {"points", points}};
  }
};

/// Deviations of window solutions from a benchmark, indexed by window and
/// offset j in [0, N]. The z deviation adds the disturbance mismatch for
/// j < N; the last window element carries no disturbance.
struct TurnpikeProfile {
  int N = 0;
  double epsilon = 0.0;
  std::vector<TimeIndex> taus;
  std::vector<std::vector<double>> state_dev;
  std::vector<std::vector<double>> z_dev;  // empty when disturbances are unavailable
  std::vector<int> approach;  // first offset with state deviation < epsilon, -1 if none
  std::vector<int> leave;     // last offset with state deviation < epsilon, -1 if none
  std::optional<EnvelopeFit> envelope;

  int max_approach_length() const {
    int a = 0;
    for (int v : approach) a = std::max(a, v < 0 ? N + 1 : v);
    return a;
  }
  int max_leave_length() const {
    int a = 0;
    for (int v : leave) a = std::max(a, v < 0 ? N + 1 : N - v);
    return a;
  }
  double midpoint_deviation() const {
    double m = 0.0;
    for (const auto& d : state_dev) m = std::max(m, d.at(static_cast<std::size_t>(N / 2)));
    return m;
  }

  Json to_json() const {
    Json j{{"N", N},
           {"epsilon", epsilon},
           {"windows", taus.size()},
           {"max_approach_length", max_approach_length()},
           {"max_leave_length", max_leave_length()},
           {"midpoint_deviation", midpoint_deviation()}};
    if (envelope) j["envelope"] = envelope->to_json();
    return j;
  }
};

/// Median Euclidean norm of the outputs, the default deviation scale.
inline double median_output_scale(const DataBatch& data) {
  std::vector<double> v;
  for (const auto& y : data.outputs) v.push_back(y.norm());
  if (v.empty()) return 0.0;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

/// Profiles window solutions of horizon N against a benchmark solution
/// that covers every window index. epsilon <= 0 selects 1e-3 * scale.
inline TurnpikeProfile turnpike_profile(const std::vector<HorizonSolution>& windows,
                                        const HorizonSolution& benchmark, int N,
                                        double epsilon = -1.0, double scale = 1.0) {
  TurnpikeProfile prof;
  prof.N = N;
  prof.epsilon = epsilon > 0.0 ? epsilon : 1e-3 * scale;
  for (const auto& s : windows) {
    if (s.horizon() != N) continue;
    if (s.tau < benchmark.tau || s.t_end() > benchmark.t_end())
      throw ValidationError("turnpike_profile: benchmark does not cover window at tau=" + std::to_string(s.tau));
    std::vector<double> dx(static_cast<std::size_t>(N) + 1), dz(static_cast<std::size_t>(N) + 1);
    for (int j = 0; j <= N; ++j) {
      const TimeIndex t = s.tau + j;
      const double ex = (s.xs[static_cast<std::size_t>(j)] - benchmark.x_at(t)).squaredNorm();
      double ew = 0.0;
      if (j < N) ew = (s.ws[static_cast<std::size_t>(j)] - benchmark.ws.at(static_cast<std::size_t>(t - benchmark.tau))).squaredNorm();
      dx[static_cast<std::size_t>(j)] = std::sqrt(ex);
      dz[static_cast<std::size_t>(j)] = std::sqrt(ex + ew);
    }
    int first = -1, last = -1;
    for (int j = 0; j <= N; ++j)
      if (dx[static_cast<std::size_t>(j)] < prof.epsilon) {
        if (first < 0) first = j;
        last = j;
      }
    prof.taus.push_back(s.tau);
    prof.state_dev.push_back(std::move(dx));
    prof.z_dev.push_back(std::move(dz));
    prof.approach.push_back(first);
    prof.leave.push_back(last);
  }
  return prof;
}

/// Same as above against published benchmark states only (state deviations).
inline TurnpikeProfile turnpike_profile(const std::vector<HorizonSolution>& windows,
                                        const EstimateSequence& benchmark, int N,
                                        double epsilon = -1.0, double scale = 1.0) {
  TurnpikeProfile prof;
  prof.N = N;
  prof.epsilon = epsilon > 0.0 ? epsilon : 1e-3 * scale;
  for (const auto& s : windows) {
    if (s.horizon() != N) continue;
    std::vector<double> dx(static_cast<std::size_t>(N) + 1);
    int first = -1, last = -1;
    for (int j = 0; j <= N; ++j) {
      dx[static_cast<std::size_t>(j)] = (s.xs[static_cast<std::size_t>(j)] - benchmark.at(s.tau + j)).norm();
      if (dx[static_cast<std::size_t>(j)] < prof.epsilon) {
        if (first < 0) first = j;
        last = j;
      }
    }
    prof.taus.push_back(s.tau);
    prof.state_dev.push_back(std::move(dx));
    prof.approach.push_back(first);
    prof.leave.push_back(last);
  }
  return prof;
}

/// Least-squares fit of log(dev) = log K + d log(lambda) over points
/// (d, dev) with dev above 1e-12. Fails (ok = false) when fewer than two
/// distinct distances remain or lambda is outside (0, 1).
inline EnvelopeFit fit_exponential_envelope(const std::vector<std::pair<double, double>>& points) {
  EnvelopeFit fit;
  std::vector<double> d, ld;
  for (const auto& [di, vi] : points)
    if (std::isfinite(vi) && vi > 1e-12) {
      d.push_back(di);
      ld.push_back(std::log(vi));
    }
  fit.points = d.size();
  if (d.size() < 2) return fit;
  const double dmin = *std::min_element(d.begin(), d.end());
  const double dmax = *std::max_element(d.begin(), d.end());
  if (dmax == dmin) return fit;
  Mat A(static_cast<Eigen::Index>(d.size()), 2);
  Vec b(static_cast<Eigen::Index>(d.size()));
  for (std::size_t i = 0; i < d.size(); ++i) {
    A(static_cast<Eigen::Index>(i), 0) = 1.0;
    A(static_cast<Eigen::Index>(i), 1) = d[i];
    b(static_cast<Eigen::Index>(i)) = ld[i];
  }
  const Vec c = A.colPivHouseholderQr().solve(b);
  fit.K = std::exp(c(0));
  fit.lambda = std::exp(c(1));
  const double bn = b.norm();
  fit.residual = bn > 0.0 ? (A * c - b).norm() / bn : (A * c - b).norm();
  fit.ok = fit.lambda > 0.0 && fit.lambda < 1.0 && std::isfinite(fit.K);
  return fit;
}

/// Envelope over min(j, N - j) using the state deviations of a profile.
inline EnvelopeFit fit_exponential_envelope(const TurnpikeProfile& prof) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& dev : prof.state_dev)
    for (int j = 0; j <= prof.N; ++j)
      pts.emplace_back(static_cast<double>(std::min(j, prof.N - j)), dev[static_cast<std::size_t>(j)]);
  return fit_exponential_envelope(pts);
}

// ---------------------------------------------------------------------------
// Accuracy bound from an i-IOSS certificate
// ---------------------------------------------------------------------------

struct AccuracyBound {
  double lhs = 0.0;
  double rhs = 0.0;
  double C1 = 0.0, C2 = 0.0, C3 = 0.0;
  double J = 0.0;
  double max_noise = 0.0;

  bool holds() const { return lhs <= rhs; }
};

/// lhs = |x_tau - xhat_tau|^2 and
/// rhs = C1 eta^(tau-t1) |x_t1 - xhat_t1|^2 + C2 max_{j in [t1, tau-1]} max(|w_j|^2, |v_j|^2)
///       + C3 J_[t1,t2](zhat),
/// with C1 = lmax(P2)/lmin(P1), C2 = 4 max(lmax(Q), lmax(R)) / (lmin(P1)(1 - eta)),
/// C3 = 2/lmin(P1). J uses the certificate's Q and R as stage weights.
inline AccuracyBound accuracy_bound(const IossCertificate& cert, const SystemModel& model,
                                    const DataBatch& data, const StateDisturbanceSequence& z,
                                    TimeIndex t1, TimeIndex t2, TimeIndex tau) {
  if (!data.truth) throw ValidationError("accuracy_bound: data carry no ground truth");
  if (tau < t1 || tau > t2) throw ValidationError("accuracy_bound: tau must lie in [t1, t2]");
  if (cert.P1().rows() != model.n || cert.Q().rows() != model.q || cert.R().rows() != model.p)
    throw ValidationError("accuracy_bound: certificate dimensions do not match the model");
  const CostSpec stage(cert.Q(), cert.R(), cert.R());
  AccuracyBound b;
  const double lmin_p1 = min_eigenvalue(cert.P1());
  b.C1 = max_eigenvalue(cert.P2()) / lmin_p1;
  b.C2 = 4.0 * std::max(max_eigenvalue(cert.Q()), max_eigenvalue(cert.R())) / (lmin_p1 * (1.0 - cert.eta()));
  b.C3 = 2.0 / lmin_p1;
  b.J = performance(model, data, stage, z, t1, t2);
  for (TimeIndex j = t1; j < tau; ++j)
    b.max_noise = std::max({b.max_noise, data.w_true(j).squaredNorm(), data.v_true(j).squaredNorm()});
  b.lhs = (data.x_true(tau) - z.x(tau)).squaredNorm();
  b.rhs = b.C1 * std::pow(cert.eta(), static_cast<double>(tau - t1)) *
              (data.x_true(t1) - z.x(t1)).squaredNorm() +
          b.C2 * b.max_noise + b.C3 * b.J;
  return b;
}

// ---------------------------------------------------------------------------
// Summary statistics
// ---------------------------------------------------------------------------

/// Linear-interpolation quantile (type 7) of a nonempty sample.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ValidationError("quantile: empty sample");
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

}  // namespace tpmhe
