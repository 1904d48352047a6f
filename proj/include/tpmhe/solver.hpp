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
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tpmhe/block_tridiag.hpp"
#include "tpmhe/core.hpp"
#include "tpmhe/models.hpp"

namespace tpmhe {

/// Quadratic prior term |x_0 - mean|_W^2.
struct Prior {
  Vec mean;
  Mat W;
};

enum class SolveMethod {
  kAuto,                // exact QP for linear unconstrained models, else LM
  kLevenbergMarquardt,  // always iterate
  kExactLinear,         // exact QP or UnsupportedError
};

struct SolverOptions {
  int max_iters = 100;
  double grad_tol = 1e-8;
  double penalty_mu = 1e6;
  double lm_lambda0 = 1e-3;
  bool trace = false;
  SolveMethod method = SolveMethod::kAuto;
  // Use dense single shooting over (x_0, w) even for additive models.
  bool force_condensed = false;

  Json to_json() const {
    return Json{{"max_iters", max_iters}, {"grad_tol", grad_tol}, {"penalty_mu", penalty_mu},
                {"lm_lambda0", lm_lambda0}, {"method", method_name()},
                {"force_condensed", force_condensed}};
  }
  const char* method_name() const {
    switch (method) {
      case SolveMethod::kAuto: return "auto";
      case SolveMethod::kLevenbergMarquardt: return "lm";
      case SolveMethod::kExactLinear: return "exact";
    }
    return "auto";
  }
  static SolverOptions from_json(const Json& j);
  static SolverOptions from_json(const Json& j, SolverOptions base) {
    base.max_iters = j.value("max_iters", base.max_iters);
    base.grad_tol = j.value("grad_tol", base.grad_tol);
    base.penalty_mu = j.value("penalty_mu", base.penalty_mu);
    base.lm_lambda0 = j.value("lm_lambda0", base.lm_lambda0);
    base.force_condensed = j.value("force_condensed", base.force_condensed);
    if (j.contains("method")) {
      const std::string m = j["method"].get<std::string>();
      if (m == "auto") base.method = SolveMethod::kAuto;
      else if (m == "lm") base.method = SolveMethod::kLevenbergMarquardt;
      else if (m == "exact") base.method = SolveMethod::kExactLinear;
      else throw ValidationError("unknown solver method '" + m + "'");
    }
    return base;
  }
};

inline SolverOptions SolverOptions::from_json(const Json& j) { return from_json(j, SolverOptions{}); }

/// One finite-horizon problem on the window [tau, tau + N] of `data`.
/// Model, data and cost are borrowed and must outlive the problem.
struct HorizonProblem {
  const SystemModel* model = nullptr;
  const DataBatch* data = nullptr;
  const CostSpec* cost = nullptr;
  TimeIndex tau = 0;
  int N = 0;
  std::optional<Prior> prior;
  SolverOptions options;

  TimeIndex t_end() const { return tau + N; }

  void validate() const {
    if (!model || !data || !cost) throw ValidationError("HorizonProblem: model, data and cost are required");
    if (N < 0) throw ValidationError("HorizonProblem: N must be nonnegative");
    if (!data->covers(tau) || !data->covers(tau + N))
      throw ValidationError("HorizonProblem: data do not cover the window [" + std::to_string(tau) +
                            ", " + std::to_string(tau + N) + "]");
    if (cost->Q().rows() != model->q || cost->R().rows() != model->p)
      throw ValidationError("HorizonProblem: cost dimensions do not match the model");
    if (prior) {
      if (prior->mean.size() != model->n || prior->W.rows() != model->n || prior->W.cols() != model->n)
        throw ValidationError("HorizonProblem: prior dimension mismatch");
      if (!is_positive_definite(prior->W))
        throw ValidationError("HorizonProblem: prior weight is not positive definite");
    }
    if (!(options.penalty_mu > 0.0)) throw ValidationError("HorizonProblem: penalty weight must be positive");
  }
};

/// Initial guess (x_0, w_0..w_{N-1}); states follow by rollout.
struct WarmStart {
  Vec x0;
  std::vector<Vec> ws;
};

class SolverError : public Error {
 public:
  enum class Kind { kDiverged, kStalled, kSingular };

  SolverError(Kind kind, const std::string& what, std::optional<HorizonSolution> best = std::nullopt)
      : Error(what), kind_(kind), best_(std::move(best)) {}

  Kind kind() const { return kind_; }
  const std::optional<HorizonSolution>& best() const { return best_; }

 private:
  Kind kind_;
  std::optional<HorizonSolution> best_;
};

// ---------------------------------------------------------------------------
// Cost evaluation
// ---------------------------------------------------------------------------

inline std::vector<Vec> rollout(const SystemModel& model, const DataBatch& data, TimeIndex tau,
                                const Vec& x0, const std::vector<Vec>& ws) {
  std::vector<Vec> xs;
  xs.reserve(ws.size() + 1);
  xs.push_back(x0);
  for (std::size_t j = 0; j < ws.size(); ++j)
    xs.push_back(model.step(xs.back(), data.u(tau + static_cast<TimeIndex>(j)), ws[j]));
  return xs;
}

/// Prior-weighted cost (penalty excluded) of (xs, ws) on the problem window.
inline double horizon_cost(const HorizonProblem& P, const std::vector<Vec>& xs,
                           const std::vector<Vec>& ws) {
  const auto& m = *P.model;
  const auto& d = *P.data;
  double J = 0.0;
  if (P.prior) J += weighted_sq_norm(xs[0] - P.prior->mean, P.prior->W);
  for (int j = 0; j < P.N; ++j) {
    const TimeIndex t = P.tau + j;
    J += weighted_sq_norm(ws[static_cast<std::size_t>(j)], P.cost->Q());
    J += weighted_sq_norm(d.y(t) - m.output(xs[static_cast<std::size_t>(j)], d.u(t)), P.cost->R());
  }
  const TimeIndex tN = P.tau + P.N;
  J += weighted_sq_norm(d.y(tN) - m.output(xs[static_cast<std::size_t>(P.N)], d.u(tN)), P.cost->G());
  return J;
}

namespace detail {

inline double box_penalty(const Box& box, const Vec& z, double mu, double& max_violation) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double over = std::max(0.0, z(i) - box.upper(i));
    const double under = std::max(0.0, box.lower(i) - z(i));
    s += over * over + under * under;
    max_violation = std::max({max_violation, over, under});
  }
  return mu * s;
}

}  // namespace detail

/// Constraint penalty of (xs, ws): state box always, disturbance and noise
/// boxes when bounded.
inline std::pair<double, double> penalty_terms(const HorizonProblem& P, const std::vector<Vec>& xs,
                                               const std::vector<Vec>& ws) {
  const auto& m = *P.model;
  const double mu = P.options.penalty_mu;
  double viol = 0.0, pen = 0.0;
  const bool wb = !m.W.is_unbounded(), vb = !m.V.is_unbounded();
  for (int j = 0; j <= P.N; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    const TimeIndex t = P.tau + j;
    pen += detail::box_penalty(m.X, xs[jj], mu, viol);
    if (wb && j < P.N) pen += detail::box_penalty(m.W, ws[jj], mu, viol);
    if (vb) pen += detail::box_penalty(m.V, P.data->y(t) - m.output(xs[jj], P.data->u(t)), mu, viol);
  }
  return {pen, viol};
}

/// Ordered residual blocks whose squared norm is the prior-weighted cost
/// plus the constraint penalty.
struct ResidualStack {
  struct Block {
    std::string name;  // prior, disturbance, fit, terminal, penalty
    TimeIndex t = 0;
    Vec r;
  };
  std::vector<Block> blocks;

  double squared_norm() const {
    double s = 0.0;
    for (const auto& b : blocks) s += b.r.squaredNorm();
    return s;
  }
};

inline ResidualStack residual_stack(const HorizonProblem& P, const std::vector<Vec>& xs,
                                    const std::vector<Vec>& ws) {
  const auto& m = *P.model;
  const auto& d = *P.data;
  ResidualStack st;
  if (P.prior) st.blocks.push_back({"prior", P.tau, sqrt_factor(P.prior->W) * (xs[0] - P.prior->mean)});
  const Mat SQ = sqrt_factor(P.cost->Q()), SR = sqrt_factor(P.cost->R()), SG = sqrt_factor(P.cost->G());
  for (int j = 0; j < P.N; ++j)
    st.blocks.push_back({"disturbance", P.tau + j, SQ * ws[static_cast<std::size_t>(j)]});
  for (int j = 0; j < P.N; ++j) {
    const TimeIndex t = P.tau + j;
    st.blocks.push_back({"fit", t, SR * (d.y(t) - m.output(xs[static_cast<std::size_t>(j)], d.u(t)))});
  }
  const TimeIndex tN = P.tau + P.N;
  st.blocks.push_back({"terminal", tN, SG * (d.y(tN) - m.output(xs[static_cast<std::size_t>(P.N)], d.u(tN)))});
  const double smu = std::sqrt(P.options.penalty_mu);
  auto push_box = [&](const Box& box, const Vec& z, TimeIndex t) {
    Vec r = ((z - box.upper).cwiseMax(0.0) + (box.lower - z).cwiseMax(0.0)) * smu;
    if (r.squaredNorm() > 0.0) st.blocks.push_back({"penalty", t, r});
  };
  for (int j = 0; j <= P.N; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    const TimeIndex t = P.tau + j;
    push_box(m.X, xs[jj], t);
    if (!m.W.is_unbounded() && j < P.N) push_box(m.W, ws[jj], t);
    if (!m.V.is_unbounded()) push_box(m.V, d.y(t) - m.output(xs[jj], d.u(t)), t);
  }
  return st;
}

// ---------------------------------------------------------------------------
// Gauss-Newton backends
// ---------------------------------------------------------------------------

namespace detail {

// Additive models: variables x_0..x_N with w_j = x_{j+1} - f(x_j, u_j, 0).
// The Gauss-Newton Hessian is block tridiagonal.
class LiftedBackend {
 public:
  explicit LiftedBackend(const HorizonProblem& P)
      : P_(P), m_(*P.model), n_(P.model->n), N_(P.N), zero_w_(Vec::Zero(P.model->q)) {}

  Eigen::Index size() const { return static_cast<Eigen::Index>(N_ + 1) * n_; }

  Vec pack(const std::vector<Vec>& xs) const {
    Vec z(size());
    for (int j = 0; j <= N_; ++j) z.segment(static_cast<Eigen::Index>(j) * n_, n_) = xs[static_cast<std::size_t>(j)];
    return z;
  }

  // Disturbances implied by the lifted states.
  std::vector<Vec> disturbances(const Vec& z) const {
    std::vector<Vec> ws;
    ws.reserve(static_cast<std::size_t>(N_));
    for (int j = 0; j < N_; ++j)
      ws.push_back(xb(z, j + 1) - m_.drift(xb(z, j), P_.data->u(P_.tau + j)));
    return ws;
  }

  double objective(const Vec& z) const {
    try {
      return objective_impl(z);
    } catch (const SingularityError&) {
      return std::numeric_limits<double>::infinity();
    }
  }

  double objective_impl(const Vec& z) const {
    const auto& d = *P_.data;
    const double mu = P_.options.penalty_mu;
    double viol = 0.0, F = 0.0;
    if (P_.prior) F += weighted_sq_norm(xb(z, 0) - P_.prior->mean, P_.prior->W);
    const bool wb = !m_.W.is_unbounded(), vb = !m_.V.is_unbounded();
    for (int j = 0; j <= N_; ++j) {
      const TimeIndex t = P_.tau + j;
      const Vec x = xb(z, j);
      const Vec e = d.y(t) - m_.output(x, d.u(t));
      F += weighted_sq_norm(e, j < N_ ? P_.cost->R() : P_.cost->G());
      F += box_penalty(m_.X, x, mu, viol);
      if (vb) F += box_penalty(m_.V, e, mu, viol);
      if (j < N_) {
        const Vec w = xb(z, j + 1) - m_.drift(x, d.u(t));
        F += weighted_sq_norm(w, P_.cost->Q());
        if (wb) F += box_penalty(m_.W, w, mu, viol);
      }
    }
    return F;
  }

  void linearize(const Vec& z) {
    const auto& d = *P_.data;
    const double mu = P_.options.penalty_mu;
    const Mat& Q = P_.cost->Q();
    H_ = BlockTridiagonal(static_cast<std::size_t>(N_ + 1), n_);
    g_ = Vec::Zero(size());
    if (P_.prior) {
      H_.diag[0] += P_.prior->W;
      g_.segment(0, n_) += P_.prior->W * (xb(z, 0) - P_.prior->mean);
    }
    const bool wb = !m_.W.is_unbounded(), vb = !m_.V.is_unbounded();
    for (int j = 0; j <= N_; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      const TimeIndex t = P_.tau + j;
      const Vec x = xb(z, j);
      const Jacobians jac = m_.jacobians(x, d.u(t), zero_w_);
      const Vec e = d.y(t) - m_.output(x, d.u(t));
      const Mat& Rw = j < N_ ? P_.cost->R() : P_.cost->G();
      const Mat CtR = jac.hx.transpose() * Rw;
      H_.diag[jj] += CtR * jac.hx;
      gb(j) -= CtR * e;
      for (Eigen::Index i = 0; i < n_; ++i) {
        const double c = violation(m_.X, x, i);
        if (c != 0.0) {
          H_.diag[jj](i, i) += mu;
          gb(j)(i) += mu * c;
        }
      }
      if (vb)
        for (Eigen::Index i = 0; i < e.size(); ++i) {
          const double c = violation(m_.V, e, i);
          if (c != 0.0) {
            const Vec a = -jac.hx.row(i).transpose();
            H_.diag[jj] += mu * a * a.transpose();
            gb(j) += mu * c * a;
          }
        }
      if (j < N_) {
        const Mat& A = jac.fx;
        const Vec w = xb(z, j + 1) - m_.drift(x, d.u(t));
        const Mat AtQ = A.transpose() * Q;
        H_.diag[jj] += AtQ * A;
        H_.diag[jj + 1] += Q;
        H_.upper[jj] -= AtQ;
        gb(j) -= AtQ * w;
        gb(j + 1) += Q * w;
        if (wb)
          for (Eigen::Index i = 0; i < n_; ++i) {
            const double c = violation(m_.W, w, i);
            if (c == 0.0) continue;
            const Vec a = -A.row(i).transpose();
            H_.diag[jj] += mu * a * a.transpose();
            H_.diag[jj + 1](i, i) += mu;
            H_.upper[jj].col(i) += mu * a;
            gb(j) += mu * c * a;
            gb(j + 1)(i) += mu * c;
          }
      }
    }
  }

  const Vec& gradient() const { return g_; }
  double mean_diag() const { return H_.mean_diagonal(); }
  double quad(const Vec& dz) const { return dz.dot(H_.multiply(dz)); }
  bool solve(double lambda, Vec& dz, double pivot_tol = 0.0) const {
    return solve_block_tridiagonal(H_, lambda, -g_, dz, pivot_tol);
  }

 private:
  static double violation(const Box& box, const Vec& z, Eigen::Index i) {
    if (z(i) > box.upper(i)) return z(i) - box.upper(i);
    if (z(i) < box.lower(i)) return z(i) - box.lower(i);
    return 0.0;
  }
  Vec xb(const Vec& z, int j) const { return z.segment(static_cast<Eigen::Index>(j) * n_, n_); }
  Eigen::VectorBlock<Vec> gb(int j) { return g_.segment(static_cast<Eigen::Index>(j) * n_, n_); }

  const HorizonProblem& P_;
  const SystemModel& m_;
  Eigen::Index n_;
  int N_;
  Vec zero_w_;
  BlockTridiagonal H_;
  Vec g_;
};

// General models: single shooting over (x_0, w_0..w_{N-1}), dense normal
// equations.
class CondensedBackend {
 public:
  explicit CondensedBackend(const HorizonProblem& P)
      : P_(P), m_(*P.model), n_(P.model->n), q_(P.model->q), N_(P.N) {}

  Eigen::Index size() const { return n_ + static_cast<Eigen::Index>(N_) * q_; }

  Vec pack(const Vec& x0, const std::vector<Vec>& ws) const {
    Vec z(size());
    z.head(n_) = x0;
    for (int j = 0; j < N_; ++j) z.segment(n_ + static_cast<Eigen::Index>(j) * q_, q_) = ws[static_cast<std::size_t>(j)];
    return z;
  }
  Vec x0(const Vec& z) const { return z.head(n_); }
  std::vector<Vec> disturbances(const Vec& z) const {
    std::vector<Vec> ws;
    for (int j = 0; j < N_; ++j) ws.push_back(z.segment(n_ + static_cast<Eigen::Index>(j) * q_, q_));
    return ws;
  }

  double objective(const Vec& z) const {
    const auto ws = disturbances(z);
    std::vector<Vec> xs;
    try {
      xs = rollout(m_, *P_.data, P_.tau, x0(z), ws);
    } catch (const SingularityError&) {
      return std::numeric_limits<double>::infinity();
    }
    for (const auto& x : xs)
      if (!x.allFinite()) return std::numeric_limits<double>::infinity();
    return horizon_cost(P_, xs, ws) + penalty_terms(P_, xs, ws).first;
  }

  void linearize(const Vec& z) {
    const auto& d = *P_.data;
    const double mu = P_.options.penalty_mu;
    const auto ws = disturbances(z);
    const auto xs = rollout(m_, d, P_.tau, x0(z), ws);
    const Eigen::Index nz = size();
    H_ = Mat::Zero(nz, nz);
    g_ = Vec::Zero(nz);
    Mat S = Mat::Zero(n_, nz);  // dx_j / dz
    S.leftCols(n_).setIdentity();
    if (P_.prior) {
      H_.topLeftCorner(n_, n_) += P_.prior->W;
      g_.head(n_) += P_.prior->W * (xs[0] - P_.prior->mean);
    }
    auto add_box = [&](const Box& box, const Vec& val, const Mat& dval) {
      for (Eigen::Index i = 0; i < val.size(); ++i) {
        double c = 0.0;
        if (val(i) > box.upper(i)) c = val(i) - box.upper(i);
        else if (val(i) < box.lower(i)) c = val(i) - box.lower(i);
        if (c == 0.0) continue;
        const Vec a = dval.row(i).transpose();
        H_ += mu * a * a.transpose();
        g_ += mu * c * a;
      }
    };
    const bool wb = !m_.W.is_unbounded(), vb = !m_.V.is_unbounded();
    for (int j = 0; j <= N_; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      const TimeIndex t = P_.tau + j;
      const Vec w = j < N_ ? ws[jj] : Vec::Zero(q_);
      const Jacobians jac = m_.jacobians(xs[jj], d.u(t), w);
      const Vec e = d.y(t) - m_.output(xs[jj], d.u(t));
      const Mat& Rw = j < N_ ? P_.cost->R() : P_.cost->G();
      const Mat de = -jac.hx * S;
      H_ += de.transpose() * Rw * de;
      g_ += de.transpose() * (Rw * e);
      add_box(m_.X, xs[jj], S);
      if (vb) add_box(m_.V, e, de);
      if (j < N_) {
        const Eigen::Index off = n_ + static_cast<Eigen::Index>(j) * q_;
        H_.block(off, off, q_, q_) += P_.cost->Q();
        g_.segment(off, q_) += P_.cost->Q() * w;
        if (wb) {
          Mat dw = Mat::Zero(q_, nz);
          dw.middleCols(off, q_).setIdentity();
          add_box(m_.W, w, dw);
        }
        Mat Sn = jac.fx * S;
        Sn.middleCols(off, q_) += jac.fw;
        S = std::move(Sn);
      }
    }
  }

  const Vec& gradient() const { return g_; }
  double mean_diag() const { return H_.diagonal().mean(); }
  double quad(const Vec& dz) const { return dz.dot(H_ * dz); }
  bool solve(double lambda, Vec& dz, double = 0.0) const {
    Eigen::LLT<Mat> llt(H_ + lambda * Mat::Identity(H_.rows(), H_.cols()));
    if (llt.info() != Eigen::Success) return false;
    dz = llt.solve(-g_);
    return dz.allFinite();
  }

 private:
  const HorizonProblem& P_;
  const SystemModel& m_;
  Eigen::Index n_, q_;
  int N_;
  Mat H_;
  Vec g_;
};

struct LmOutcome {
  Vec z;
  double objective = 0.0;
};

template <class Backend>
LmOutcome levenberg_marquardt(Backend& be, Vec z, const SolverOptions& opt, SolverStats& st,
                              const std::function<HorizonSolution(const Vec&)>& as_solution) {
  double F = be.objective(z);
  if (!std::isfinite(F))
    throw SolverError(SolverError::Kind::kDiverged,
                      "solve_horizon: non-finite cost at the initial iterate (check the warm start)");
  be.linearize(z);
  const double scale = std::max(be.mean_diag(), std::numeric_limits<double>::min());
  double lambda = opt.lm_lambda0 * scale;
  const double lambda_max = 1e16 * std::max(1.0, scale);
  int iter = 0;
  for (;;) {
    const double gnorm = 2.0 * be.gradient().norm();
    st.iterations = iter;
    st.gradient_norm = gnorm;
    if (opt.trace) st.trace.emplace_back(F, gnorm);
    if (gnorm <= opt.grad_tol * std::max(1.0, F)) {
      st.termination = Termination::kGradient;
      break;
    }
    if (iter >= opt.max_iters) {
      st.termination = Termination::kMaxIterations;
      break;
    }
    bool stop = false;
    for (;;) {
      Vec dz;
      bool ok = be.solve(lambda, dz);
      if (ok && dz.norm() <= 1e-12 * (z.norm() + 1e-12)) {
        st.termination = Termination::kSmallStep;
        stop = true;
        break;
      }
      if (ok) {
        const Vec zn = z + dz;
        const double Fn = be.objective(zn);
        if (std::isfinite(Fn) && Fn < F) {
          z = zn;
          F = Fn;
          lambda *= 0.5;
          break;
        }
      }
      lambda *= 10.0;
      if (lambda > lambda_max) {
        // Damping saturated: converged if even the Gauss-Newton model
        // predicts no meaningful decrease.
        Vec gn;
        double pred = 0.0;
        if (be.solve(1e-12 * scale, gn)) pred = -(2.0 * be.gradient().dot(gn) + be.quad(gn));
        if (pred <= 1e-10 * std::max(F, std::numeric_limits<double>::min())) {
          st.termination = Termination::kNoProgress;
          stop = true;
          break;
        }
        throw SolverError(SolverError::Kind::kStalled,
                          "solve_horizon: no decrease after damping saturation", as_solution(z));
      }
    }
    if (stop) break;
    ++iter;
    be.linearize(z);
  }
  st.iterations = iter;
  return {std::move(z), F};
}

inline Vec cold_start_state(const HorizonProblem& P) {
  if (P.prior) return P.prior->mean;
  const auto& m = *P.model;
  const Vec& u = P.data->u(P.tau);
  const Vec x = m.nominal_state;
  const Mat C = m.jacobians(x, u, Vec::Zero(m.q)).hx;
  const Vec r = P.data->y(P.tau) - m.output(x, u);
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(C);
  return m.X.project(x + cod.solve(r));
}

inline HorizonSolution finalize(const HorizonProblem& P, const Vec& x0, std::vector<Vec> ws,
                                SolverStats stats) {
  HorizonSolution sol;
  sol.tau = P.tau;
  sol.xs = rollout(*P.model, *P.data, P.tau, x0, ws);
  sol.ws = std::move(ws);
  sol.cost = horizon_cost(P, sol.xs, sol.ws);
  const auto [pen, viol] = penalty_terms(P, sol.xs, sol.ws);
  stats.penalty = pen;
  stats.max_violation = viol;
  sol.stats = std::move(stats);
  return sol;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

/// Exact minimizer for linear models without active constraint sets, from
/// one block-tridiagonal factorization of the normal equations.
inline HorizonSolution solve_linear_horizon(const HorizonProblem& P) {
  P.validate();
  const auto& m = *P.model;
  if (!m.is_linear()) throw UnsupportedError("solve_linear_horizon: model '" + m.id + "' is not linear");
  if (!m.X.is_unbounded() || !m.W.is_unbounded() || !m.V.is_unbounded())
    throw UnsupportedError("solve_linear_horizon: constraint sets must be unbounded");
  detail::LiftedBackend be(P);
  be.linearize(Vec::Zero(be.size()));
  Vec z;
  if (!be.solve(0.0, z, 1e-12))
    throw SolverError(SolverError::Kind::kSingular,
                      "solve_linear_horizon: normal equations are singular (window not observable)");
  auto ws = be.disturbances(z);
  SolverStats st;
  st.termination = Termination::kExact;
  st.iterations = 1;
  HorizonSolution sol = detail::finalize(P, z.head(m.n), std::move(ws), st);
  detail::LiftedBackend check(P);
  check.linearize(check.pack(sol.xs));
  sol.stats.gradient_norm = 2.0 * check.gradient().norm();
  return sol;
}

/// Local minimizer of the (prior-weighted) horizon problem by
/// Levenberg-Marquardt from the warm start, or from a cold start
/// (prior mean or output-consistent state, zero disturbances).
inline HorizonSolution solve_horizon(const HorizonProblem& P,
                                     const std::optional<WarmStart>& warm = std::nullopt) {
  P.validate();
  const auto& m = *P.model;
  const auto& opt = P.options;
  if (warm) {
    if (warm->x0.size() != m.n || warm->ws.size() != static_cast<std::size_t>(P.N))
      throw ValidationError("solve_horizon: warm start dimensions do not match the window");
    for (const auto& w : warm->ws)
      if (w.size() != m.q) throw ValidationError("solve_horizon: warm start disturbance dimension mismatch");
  }
  if (opt.method == SolveMethod::kExactLinear) return solve_linear_horizon(P);
  if (opt.method == SolveMethod::kAuto && m.is_linear() && m.X.is_unbounded() &&
      m.W.is_unbounded() && m.V.is_unbounded() && !opt.force_condensed) {
    try {
      return solve_linear_horizon(P);
    } catch (const SolverError& e) {
      if (e.kind() != SolverError::Kind::kSingular) throw;
    }
  }
  Vec x0;
  std::vector<Vec> ws;
  if (warm) {
    x0 = warm->x0;
    ws = warm->ws;
  } else {
    x0 = detail::cold_start_state(P);
    ws.assign(static_cast<std::size_t>(P.N), Vec::Zero(m.q));
  }
  SolverStats st;
  if (m.additive_disturbance && !opt.force_condensed) {
    detail::LiftedBackend be(P);
    std::vector<Vec> xs;
    try {
      xs = rollout(m, *P.data, P.tau, x0, ws);
    } catch (const SingularityError&) {
      throw SolverError(SolverError::Kind::kDiverged, "solve_horizon: warm start rollout hit a model singularity");
    }
    auto as_solution = [&](const Vec& z) {
      return detail::finalize(P, z.head(m.n), be.disturbances(z), st);
    };
    const auto out = detail::levenberg_marquardt(be, be.pack(xs), opt, st, as_solution);
    return detail::finalize(P, out.z.head(m.n), be.disturbances(out.z), st);
  }
  detail::CondensedBackend be(P);
  auto as_solution = [&](const Vec& z) { return detail::finalize(P, be.x0(z), be.disturbances(z), st); };
  const auto out = detail::levenberg_marquardt(be, be.pack(x0, ws), opt, st, as_solution);
  return detail::finalize(P, be.x0(out.z), be.disturbances(out.z), st);
}

}  // namespace tpmhe
