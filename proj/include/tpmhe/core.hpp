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

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace tpmhe {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Json = nlohmann::json;

// Absolute (global) time index.
using TimeIndex = long;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data, configuration, or a violated type invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Operation not defined for the given model (e.g. exact QP on a nonlinear model).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// Model evaluated at a singular point (e.g. quadrotor at pitch +-pi/2).
class SingularityError : public Error {
 public:
  using Error::Error;
};

// Simulation left the state constraint set.
class SimulationError : public Error {
 public:
  SimulationError(const std::string& what, TimeIndex step)
      : Error(what), step_(step) {}
  TimeIndex step() const { return step_; }

 private:
  TimeIndex step_;
};

// ---------------------------------------------------------------------------
// Small numerical helpers
// ---------------------------------------------------------------------------

inline bool all_finite(const Vec& v) { return v.allFinite(); }

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

inline bool is_positive_definite(const Mat& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if (!m.allFinite()) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() >
      1e-10 * (1.0 + m.cwiseAbs().maxCoeff()))
    return false;
  Eigen::LLT<Mat> llt(m);
  return llt.info() == Eigen::Success;
}

// Upper-triangular S with S^T S = M, so that |r|_M^2 = |S r|^2.
inline Mat sqrt_factor(const Mat& m) {
  Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success)
    throw ValidationError("sqrt_factor: matrix is not positive definite");
  return llt.matrixU();
}

inline double weighted_sq_norm(const Vec& r, const Mat& w) {
  return r.dot(w * r);
}

inline double min_eigenvalue(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double max_eigenvalue(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

// 64-bit FNV-1a, used for config digests.
inline std::uint64_t fnv1a64(const std::string& s,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex_digest(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

// Digest of a JSON value; nlohmann::json objects are key-sorted so the dump
// is canonical.
inline std::string digest(const Json& j) { return hex_digest(fnv1a64(j.dump())); }

// ---------------------------------------------------------------------------
// Cost weights
// ---------------------------------------------------------------------------

/// Quadratic stage and terminal weights: l = |w|_Q^2 + |y - h|_R^2 and
/// g = |y - h|_G^2. All three matrices must be symmetric positive definite.
class CostSpec {
 public:
  CostSpec(Mat Q, Mat R, Mat G) : Q_(std::move(Q)), R_(std::move(R)), G_(std::move(G)) {
    if (!is_positive_definite(Q_)) throw ValidationError("CostSpec: Q is not symmetric positive definite");
    if (!is_positive_definite(R_)) throw ValidationError("CostSpec: R is not symmetric positive definite");
    if (!is_positive_definite(G_)) throw ValidationError("CostSpec: G is not symmetric positive definite");
    if (R_.rows() != G_.rows()) throw ValidationError("CostSpec: R and G dimensions differ");
  }

  // Diagonal shorthand.
  static CostSpec diagonal(const Vec& q, const Vec& r, const Vec& g) {
    return CostSpec(q.asDiagonal().toDenseMatrix(), r.asDiagonal().toDenseMatrix(),
                    g.asDiagonal().toDenseMatrix());
  }

  const Mat& Q() const { return Q_; }
  const Mat& R() const { return R_; }
  const Mat& G() const { return G_; }

  Json to_json() const;

 private:
  Mat Q_, R_, G_;
};

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

struct TruthRecord {
  std::vector<Vec> x;  // n-vectors, one per output
  std::vector<Vec> w;  // q-vectors, one fewer than x
  std::vector<Vec> v;  // p-vectors, one per output
};

struct BatchMeta {
  std::string model_id;
  std::uint64_t seed = 0;
  Json generation = Json::object();
};

/// Time-indexed record of inputs and outputs, optionally carrying the
/// ground truth that generated them. Index t maps to position t - t0.
struct DataBatch {
  TimeIndex t0 = 0;
  std::vector<Vec> inputs;
  std::vector<Vec> outputs;
  std::optional<TruthRecord> truth;
  BatchMeta meta;

  std::size_t size() const { return outputs.size(); }
  TimeIndex t_end() const { return t0 + static_cast<TimeIndex>(outputs.size()) - 1; }
  bool covers(TimeIndex t) const { return t >= t0 && t <= t_end(); }

  const Vec& u(TimeIndex t) const { return inputs.at(static_cast<std::size_t>(t - t0)); }
  const Vec& y(TimeIndex t) const { return outputs.at(static_cast<std::size_t>(t - t0)); }

  const Vec& x_true(TimeIndex t) const {
    if (!truth) throw ValidationError("DataBatch: ground truth is not available");
    return truth->x.at(static_cast<std::size_t>(t - t0));
  }
  const Vec& w_true(TimeIndex t) const {
    if (!truth) throw ValidationError("DataBatch: ground truth is not available");
    return truth->w.at(static_cast<std::size_t>(t - t0));
  }
  const Vec& v_true(TimeIndex t) const {
    if (!truth) throw ValidationError("DataBatch: ground truth is not available");
    return truth->v.at(static_cast<std::size_t>(t - t0));
  }

  // Sub-batch on [a, b] with absolute indices preserved.
  DataBatch slice(TimeIndex a, TimeIndex b) const {
    if (!covers(a) || !covers(b) || b < a)
      throw ValidationError("DataBatch::slice: range [" + std::to_string(a) + ", " +
                            std::to_string(b) + "] outside batch");
    DataBatch out;
    out.t0 = a;
    out.meta = meta;
    const auto lo = static_cast<std::size_t>(a - t0);
    const auto hi = static_cast<std::size_t>(b - t0) + 1;
    out.inputs.assign(inputs.begin() + lo, inputs.begin() + hi);
    out.outputs.assign(outputs.begin() + lo, outputs.begin() + hi);
    if (truth) {
      TruthRecord tr;
      tr.x.assign(truth->x.begin() + lo, truth->x.begin() + hi);
      tr.v.assign(truth->v.begin() + lo, truth->v.begin() + hi);
      tr.w.assign(truth->w.begin() + lo, truth->w.begin() + (hi - 1));
      out.truth = std::move(tr);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Solutions and estimates
// ---------------------------------------------------------------------------

enum class Termination {
  kGradient,      // gradient norm below tolerance
  kSmallStep,     // step below relative floor
  kNoProgress,    // damping saturated at a numerical stationary point
  kMaxIterations,
  kExact,         // direct QP solve
};

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::kGradient: return "gradient";
    case Termination::kSmallStep: return "small_step";
    case Termination::kNoProgress: return "no_progress";
    case Termination::kMaxIterations: return "max_iterations";
    case Termination::kExact: return "exact";
  }
  return "unknown";
}

struct SolverStats {
  int iterations = 0;
  double gradient_norm = 0.0;
  Termination termination = Termination::kExact;
  double penalty = 0.0;        // constraint penalty at the returned iterate
  double max_violation = 0.0;  // largest box violation (state, disturbance, noise)
  std::vector<std::pair<double, double>> trace;  // (objective, gradient norm) per iteration
};

/// Solution of one finite-horizon problem on the window [tau, tau + N].
struct HorizonSolution {
  TimeIndex tau = 0;
  std::vector<Vec> xs;  // N + 1 states
  std::vector<Vec> ws;  // N disturbances
  double cost = 0.0;    // prior-weighted cost, penalty excluded
  SolverStats stats;

  int horizon() const { return static_cast<int>(xs.size()) - 1; }
  TimeIndex t_end() const { return tau + horizon(); }
  const Vec& x_at(TimeIndex t) const { return xs.at(static_cast<std::size_t>(t - tau)); }
};

enum class EstimatorKind { kFie, kMhe, kDelayedMhe, kMhePrior, kIhe, kAe, kKf, kFis };

inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::kFie: return "fie";
    case EstimatorKind::kMhe: return "mhe";
    case EstimatorKind::kDelayedMhe: return "delayed_mhe";
    case EstimatorKind::kMhePrior: return "mhe_prior";
    case EstimatorKind::kIhe: return "ihe";
    case EstimatorKind::kAe: return "ae";
    case EstimatorKind::kKf: return "kf";
    case EstimatorKind::kFis: return "fis";
  }
  return "unknown";
}

inline EstimatorKind estimator_kind_from_string(const std::string& s) {
  for (auto k : {EstimatorKind::kFie, EstimatorKind::kMhe, EstimatorKind::kDelayedMhe,
                 EstimatorKind::kMhePrior, EstimatorKind::kIhe, EstimatorKind::kAe,
                 EstimatorKind::kKf, EstimatorKind::kFis})
    if (s == to_string(k)) return k;
  throw ValidationError("unknown estimator kind '" + s + "'");
}

/// Per-time state estimates of one estimator run. The estimate for t is
/// published once data through t + delay has been consumed.
struct EstimateSequence {
  std::map<TimeIndex, Vec> estimates;
  int delay = 0;
  EstimatorKind kind = EstimatorKind::kFie;
  std::string config_digest;
  Json diagnostics = Json::object();

  bool covers(TimeIndex a, TimeIndex b) const {
    for (TimeIndex t = a; t <= b; ++t)
      if (!estimates.count(t)) return false;
    return true;
  }
  const Vec& at(TimeIndex t) const {
    auto it = estimates.find(t);
    if (it == estimates.end())
      throw ValidationError("EstimateSequence: no estimate for t=" + std::to_string(t));
    return it->second;
  }
  TimeIndex first() const { return estimates.begin()->first; }
  TimeIndex last() const { return estimates.rbegin()->first; }
};

// ---------------------------------------------------------------------------
// Detectability certificate
// ---------------------------------------------------------------------------

/// Exponential i-IOSS certificate: |x1-x2|_{P1}^2 <= U <= |x1-x2|_{P2}^2 with
/// decrease U(f1, f2) <= eta U + |w1-w2|_Q^2 + |h1-h2|_R^2. Supplied by the
/// caller; only its internal consistency is checked here.
class IossCertificate {
 public:
  IossCertificate(Mat P1, Mat P2, Mat Q, Mat R, double eta)
      : P1_(std::move(P1)), P2_(std::move(P2)), Q_(std::move(Q)), R_(std::move(R)), eta_(eta) {
    if (!(eta_ >= 0.0 && eta_ < 1.0))
      throw ValidationError("IossCertificate: eta must lie in [0, 1)");
    for (const Mat* m : {&P1_, &P2_, &Q_, &R_})
      if (!is_positive_definite(*m))
        throw ValidationError("IossCertificate: weights must be symmetric positive definite");
    if (P1_.rows() != P2_.rows())
      throw ValidationError("IossCertificate: P1 and P2 dimensions differ");
    if (min_eigenvalue(P2_ - P1_) < -1e-12 * (1.0 + P2_.norm()))
      throw ValidationError("IossCertificate: P1 is not bounded by P2");
  }

  const Mat& P1() const { return P1_; }
  const Mat& P2() const { return P2_; }
  const Mat& Q() const { return Q_; }
  const Mat& R() const { return R_; }
  double eta() const { return eta_; }

 private:
  Mat P1_, P2_, Q_, R_;
  double eta_;
};

// ---------------------------------------------------------------------------
// JSON helpers for Eigen types
// ---------------------------------------------------------------------------

inline Json to_json(const Vec& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

inline Json to_json(const Mat& m) {
  Json j = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(row);
  }
  return j;
}

inline Vec vec_from_json(const Json& j) {
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

// Accepts a nested array (full matrix) or a flat array (diagonal).
inline Mat mat_from_json(const Json& j) {
  if (!j.is_array() || j.empty()) throw ValidationError("matrix must be a non-empty array");
  if (!j[0].is_array()) return vec_from_json(j).asDiagonal().toDenseMatrix();
  Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != j[0].size()) throw ValidationError("ragged matrix");
    for (std::size_t c = 0; c < j[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
  }
  return m;
}

inline Json CostSpec::to_json() const {
  return Json{{"Q", tpmhe::to_json(Q_)}, {"R", tpmhe::to_json(R_)}, {"G", tpmhe::to_json(G_)}};
}

}  // namespace tpmhe
