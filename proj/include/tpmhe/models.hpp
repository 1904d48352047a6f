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

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "tpmhe/core.hpp"
#include "tpmhe/random.hpp"

namespace tpmhe {

// ---------------------------------------------------------------------------
// Constraint sets
// ---------------------------------------------------------------------------

/// Axis-aligned box; infinite bounds encode "unbounded".
struct Box {
  Vec lower;
  Vec upper;

  static Box all(Eigen::Index dim) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    return Box{Vec::Constant(dim, -inf), Vec::Constant(dim, inf)};
  }

  static Box symmetric(const Vec& bound) { return Box{-bound, bound}; }

  Eigen::Index dim() const { return lower.size(); }

  bool is_unbounded() const {
    return (lower.array() == -std::numeric_limits<double>::infinity()).all() &&
           (upper.array() == std::numeric_limits<double>::infinity()).all();
  }

  bool contains(const Vec& x, double tol = 0.0) const {
    if (x.size() != dim()) return false;
    return ((x.array() >= lower.array() - tol) && (x.array() <= upper.array() + tol)).all();
  }

  Vec project(const Vec& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

  // Componentwise distance outside the box (zero inside).
  double max_violation(const Vec& x) const {
    return std::max((x - upper).cwiseMax(0.0).maxCoeff(), (lower - x).cwiseMax(0.0).maxCoeff());
  }

  Json to_json() const {
    if (is_unbounded()) return "all";
    Json lo = Json::array(), hi = Json::array();
    for (Eigen::Index i = 0; i < dim(); ++i) {
      lo.push_back(std::isfinite(lower(i)) ? Json(lower(i)) : Json(nullptr));
      hi.push_back(std::isfinite(upper(i)) ? Json(upper(i)) : Json(nullptr));
    }
    return Json{{"lower", lo}, {"upper", hi}};
  }
};

// ---------------------------------------------------------------------------
// System model
// ---------------------------------------------------------------------------

struct Jacobians {
  Mat fx;  // df/dx, n x n
  Mat fw;  // df/dw, n x q
  Mat hx;  // dh/dx, p x n
};

// x+ = A x + B u + w, y = C x.
struct LinearMatrices {
  Mat A, B, C;
};

using StepFn = std::function<Vec(const Vec& x, const Vec& u, const Vec& w)>;
using OutputFn = std::function<Vec(const Vec& x, const Vec& u)>;
using JacobianFn = std::function<Jacobians(const Vec& x, const Vec& u, const Vec& w)>;

/// Discrete-time model x+ = f(x, u, w), y = h(x, u) + v with box constraint
/// sets. Immutable after construction and safe to share across threads.
struct SystemModel {
  std::string id;
  int n = 0, m = 0, q = 0, p = 0;
  bool additive_disturbance = false;  // f(x, u, w) = f(x, u, 0) + w
  StepFn step_fn;
  OutputFn output_fn;
  JacobianFn jacobian_fn;  // empty: finite differences
  Box X, W, V;
  std::optional<LinearMatrices> linear;
  Vec nominal_state;  // cold-start anchor for solvers
  Json card = Json::object();

  Vec step(const Vec& x, const Vec& u, const Vec& w) const { return step_fn(x, u, w); }
  Vec drift(const Vec& x, const Vec& u) const { return step_fn(x, u, Vec::Zero(q)); }
  Vec output(const Vec& x, const Vec& u) const { return output_fn(x, u); }
  bool is_linear() const { return linear.has_value(); }

  Jacobians jacobians(const Vec& x, const Vec& u, const Vec& w) const;

  Json model_card() const {
    Json j = card;
    j["id"] = id;
    j["dimensions"] = {{"n", n}, {"m", m}, {"q", q}, {"p", p}};
    j["additive_disturbance"] = additive_disturbance;
    j["constraints"] = {{"X", X.to_json()}, {"W", W.to_json()}, {"V", V.to_json()}};
    j["linear"] = is_linear();
    if (linear) {
      j["A"] = to_json(linear->A);
      j["B"] = to_json(linear->B);
      j["C"] = to_json(linear->C);
    }
    return j;
  }
};

/// Forward-difference Jacobians with step sqrt(eps) * (1 + |z_i|).
inline Jacobians finite_difference_jacobians(const SystemModel& model, const Vec& x,
                                             const Vec& u, const Vec& w) {
  const double root_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  Jacobians jac;
  const Vec f0 = model.step(x, u, w);
  const Vec h0 = model.output(x, u);
  jac.fx.resize(model.n, model.n);
  jac.hx.resize(model.p, model.n);
  jac.fw.resize(model.n, model.q);
  for (int i = 0; i < model.n; ++i) {
    Vec xp = x;
    const double h = root_eps * (1.0 + std::abs(x(i)));
    xp(i) += h;
    const double hi = xp(i) - x(i);  // exactly representable step
    jac.fx.col(i) = (model.step(xp, u, w) - f0) / hi;
    jac.hx.col(i) = (model.output(xp, u) - h0) / hi;
  }
  if (model.additive_disturbance) {
    jac.fw = Mat::Identity(model.n, model.q);
  } else {
    for (int i = 0; i < model.q; ++i) {
      Vec wp = w;
      const double h = root_eps * (1.0 + std::abs(w(i)));
      wp(i) += h;
      const double hi = wp(i) - w(i);
      jac.fw.col(i) = (model.step(x, u, wp) - f0) / hi;
    }
  }
  return jac;
}

inline Jacobians SystemModel::jacobians(const Vec& x, const Vec& u, const Vec& w) const {
  if (jacobian_fn) return jacobian_fn(x, u, w);
  return finite_difference_jacobians(*this, x, u, w);
}

// ---------------------------------------------------------------------------
// Discretization
// ---------------------------------------------------------------------------

enum class Discretization { kEuler, kRk4 };

using ContinuousRhs = std::function<Vec(const Vec& x, const Vec& u)>;
using DiscreteMap = std::function<Vec(const Vec& x, const Vec& u)>;

inline DiscreteMap discretize(ContinuousRhs rhs, Discretization method, double dt) {
  if (method == Discretization::kEuler)
    return [rhs = std::move(rhs), dt](const Vec& x, const Vec& u) -> Vec {
      return x + dt * rhs(x, u);
    };
  return [rhs = std::move(rhs), dt](const Vec& x, const Vec& u) -> Vec {
    const Vec k1 = rhs(x, u);
    const Vec k2 = rhs(x + 0.5 * dt * k1, u);
    const Vec k3 = rhs(x + 0.5 * dt * k2, u);
    const Vec k4 = rhs(x + dt * k3, u);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  };
}

// Wraps a discrete drift map into an additive-disturbance step.
inline StepFn additive_step(DiscreteMap drift) {
  return [drift = std::move(drift)](const Vec& x, const Vec& u, const Vec& w) -> Vec {
    return drift(x, u) + w;
  };
}

// ---------------------------------------------------------------------------
// Model zoo
// ---------------------------------------------------------------------------

/// x+ = x + w, y = x + v; no input.
inline SystemModel scalar_integrator() {
  SystemModel m;
  m.id = "scalar";
  m.n = 1, m.m = 0, m.q = 1, m.p = 1;
  m.additive_disturbance = true;
  m.step_fn = [](const Vec& x, const Vec&, const Vec& w) -> Vec { return x + w; };
  m.output_fn = [](const Vec& x, const Vec&) -> Vec { return x; };
  m.jacobian_fn = [](const Vec&, const Vec&, const Vec&) {
    return Jacobians{Mat::Identity(1, 1), Mat::Identity(1, 1), Mat::Identity(1, 1)};
  };
  m.X = Box::all(1), m.W = Box::all(1), m.V = Box::all(1);
  m.linear = LinearMatrices{Mat::Identity(1, 1), Mat::Zero(1, 0), Mat::Identity(1, 1)};
  m.nominal_state = Vec::Zero(1);
  m.card = {{"description", "scalar integrator x+ = x + w, y = x + v"}};
  return m;
}

struct ReactorParams {
  double k1 = 0.16;
  double k2 = 0.0064;
  double dt = 0.1;
};

/// Euler-discretized two-species batch reactor 2A <-> B with additive input
/// and disturbance; y = x1 + x2.
inline SystemModel batch_reactor(ReactorParams prm = {}) {
  SystemModel m;
  m.id = "reactor";
  m.n = 2, m.m = 2, m.q = 2, m.p = 1;
  m.additive_disturbance = true;
  auto drift = [prm](const Vec& x, const Vec& u) -> Vec {
    Vec out(2);
    const double r = prm.k1 * x(0) * x(0);
    out(0) = x(0) + prm.dt * (-2.0 * r + 2.0 * prm.k2 * x(1)) + u(0);
    out(1) = x(1) + prm.dt * (r - prm.k2 * x(1)) + u(1);
    return out;
  };
  m.step_fn = additive_step(drift);
  m.output_fn = [](const Vec& x, const Vec&) -> Vec { return Vec::Constant(1, x(0) + x(1)); };
  m.jacobian_fn = [prm](const Vec& x, const Vec&, const Vec&) {
    Jacobians j;
    j.fx.resize(2, 2);
    j.fx << 1.0 - 4.0 * prm.dt * prm.k1 * x(0), 2.0 * prm.dt * prm.k2,
        2.0 * prm.dt * prm.k1 * x(0), 1.0 - prm.dt * prm.k2;
    j.fw = Mat::Identity(2, 2);
    j.hx = Mat::Ones(1, 2);
    return j;
  };
  m.X = Box::all(2), m.W = Box::all(2), m.V = Box::all(1);
  m.nominal_state = (Vec(2) << 3.0, 0.0).finished();
  m.card = {{"description", "Euler-discretized batch reactor"},
            {"parameters", {{"k1", prm.k1}, {"k2", prm.k2}, {"dt", prm.dt}}}};
  return m;
}

inline SystemModel linear_model(std::string id, Mat A, Mat B, Mat C) {
  SystemModel m;
  m.id = std::move(id);
  m.n = static_cast<int>(A.rows());
  m.m = static_cast<int>(B.cols());
  m.q = m.n;
  m.p = static_cast<int>(C.rows());
  m.additive_disturbance = true;
  m.step_fn = [A, B](const Vec& x, const Vec& u, const Vec& w) -> Vec {
    if (B.cols() == 0) return A * x + w;
    return A * x + B * u + w;
  };
  m.output_fn = [C](const Vec& x, const Vec&) -> Vec { return C * x; };
  m.jacobian_fn = [A, C](const Vec&, const Vec&, const Vec&) {
    return Jacobians{A, Mat::Identity(A.rows(), A.rows()), C};
  };
  m.X = Box::all(m.n), m.W = Box::all(m.n), m.V = Box::all(m.p);
  m.linear = LinearMatrices{std::move(A), std::move(B), std::move(C)};
  m.nominal_state = Vec::Zero(m.n);
  return m;
}

inline double spectral_radius(const Mat& A) {
  Eigen::EigenSolver<Mat> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Random stable LTI system, deterministic in `seed`. A is an orthogonal
/// similarity of a block-diagonal pole matrix (real poles and rotation
/// blocks, magnitudes below 0.98); B and C have standard normal entries.
inline SystemModel make_random_lti(int n, int m, int p, std::uint64_t seed) {
  if (n < 1 || m < 1 || p < 1) throw ValidationError("make_random_lti: dimensions must be >= 1");
  Rng rng(split_seed(seed, "lti-model"));
  Mat A;
  for (int attempt = 0;; ++attempt) {
    Mat D = Mat::Zero(n, n);
    int i = 0;
    while (i < n) {
      const double r = 0.98 * rng.uniform();
      if (i + 1 < n && rng.uniform() < 0.5) {
        const double a = std::numbers::pi * rng.uniform();
        D(i, i) = r * std::cos(a);
        D(i, i + 1) = -r * std::sin(a);
        D(i + 1, i) = r * std::sin(a);
        D(i + 1, i + 1) = r * std::cos(a);
        i += 2;
      } else {
        D(i, i) = (rng.uniform() < 0.5 ? -1.0 : 1.0) * r;
        i += 1;
      }
    }
    Eigen::HouseholderQR<Mat> qr(rng.normal_mat(n, n));
    const Mat V = qr.householderQ();
    A = V * D * V.transpose();
    if (spectral_radius(A) < 1.0) break;
    if (attempt > 100) throw Error("make_random_lti: failed to sample a stable system");
  }
  Mat B = rng.normal_mat(n, m);
  Mat C = rng.normal_mat(p, n);
  std::ostringstream id;
  id << "lti:" << n << ":" << m << ":" << p << ":" << seed;
  SystemModel model = linear_model(id.str(), std::move(A), std::move(B), std::move(C));
  model.card = {{"description", "random stable LTI system x+ = Ax + Bu + w, y = Cx + v"},
                {"parameters", {{"seed", seed}, {"spectral_radius", spectral_radius(*&model.linear->A)}}}};
  return model;
}

/// Parameters of the stirred-tank reactor, time in minutes.
struct CstrParams {
  double F0 = 0.1;      // inlet flow, m^3/min
  double T0 = 350.0;    // inlet temperature, K
  double c0 = 1.0;      // inlet concentration, kmol/m^3
  double r = 0.219;     // tank radius, m
  double k0 = 7.2e10;   // pre-exponential factor, 1/min
  double EoR = 8750.0;  // activation energy over gas constant, K
  double U = 54.94;     // heat transfer coefficient, kJ/(min m^2 K)
  double rho = 1000.0;  // density, kg/m^3
  double Cp = 0.239;    // heat capacity, kJ/(kg K)
  double dH = -5.0e4;   // heat of reaction, kJ/kmol
  double dt = 0.25;     // sampling time, min
};

inline ContinuousRhs cstr_rhs(CstrParams prm) {
  return [prm](const Vec& x, const Vec& u) -> Vec {
    const double c = x(0), T = x(1), h = x(2);
    const double Tc = u(0), F = u(1);
    const double area = std::numbers::pi * prm.r * prm.r;
    const double rate = prm.k0 * std::exp(-prm.EoR / T) * c;
    Vec dx(3);
    dx(0) = prm.F0 * (prm.c0 - c) / (area * h) - rate;
    dx(1) = prm.F0 * (prm.T0 - T) / (area * h) - prm.dH / (prm.rho * prm.Cp) * rate +
            2.0 * prm.U / (prm.r * prm.rho * prm.Cp) * (Tc - T);
    dx(2) = (prm.F0 - F) / area;
    return dx;
  };
}

/// RK4-discretized CSTR, x = [c, T, h], u = [Tc, F], y = T.
inline SystemModel cstr(CstrParams prm = {}) {
  SystemModel m;
  m.id = "cstr";
  m.n = 3, m.m = 2, m.q = 3, m.p = 1;
  m.additive_disturbance = true;
  m.step_fn = additive_step(discretize(cstr_rhs(prm), Discretization::kRk4, prm.dt));
  m.output_fn = [](const Vec& x, const Vec&) -> Vec { return Vec::Constant(1, x(1)); };
  m.X = Box{(Vec(3) << 0.5, 200.0, 0.5).finished(), (Vec(3) << 1.5, 400.0, 1.5).finished()};
  m.W = Box::all(3), m.V = Box::all(1);
  m.nominal_state = (Vec(3) << 0.878, 324.5, 0.659).finished();
  m.card = {{"description", "RK4-discretized CSTR, states [c, T, h], inputs [Tc, F]"},
            {"parameters",
             {{"F0", prm.F0}, {"T0", prm.T0}, {"c0", prm.c0}, {"r", prm.r}, {"k0", prm.k0},
              {"E_over_R", prm.EoR}, {"U", prm.U}, {"rho", prm.rho}, {"Cp", prm.Cp},
              {"dH", prm.dH}, {"dt", prm.dt}}},
            {"steady_state_input", {300.0, 0.1}},
            {"note", "parameters reproduce c=0.878, T=324.5 K at u=[300, 0.1]"}};
  return m;
}

struct QuadrotorParams {
  double mass = 1.9;
  Vec inertia = (Vec(3) << 5.9e-3, 5.9e-3, 10.7e-3).finished();
  double g = 9.8;
  double arm = 0.25;
  double cT = 1e-5;
  double cQ = 1e-6;
  double blade_drag = 1.14;  // B = blade_drag * e3^x
  double yaw_damping = 0.0297;  // D = yaw_damping * e3 e3^T
  double dt = 0.05;

  double hover_speed() const { return std::sqrt(mass * g / (4.0 * cT)); }
};

inline Eigen::Matrix3d skew(const Eigen::Vector3d& a) {
  Eigen::Matrix3d s;
  s << 0.0, -a(2), a(1), a(2), 0.0, -a(0), -a(1), a(0), 0.0;
  return s;
}

// Body-to-inertial rotation for roll-pitch-yaw angles (Z-Y-X convention).
inline Eigen::Matrix3d rotation_rpy(double phi, double theta, double psi) {
  return (Eigen::AngleAxisd(psi, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(theta, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(phi, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

// Maps body rates to Euler angle rates; singular at theta = +-pi/2.
inline Eigen::Matrix3d euler_rate_map(double phi, double theta) {
  const double ct = std::cos(theta);
  if (std::abs(ct) < 1e-9)
    throw SingularityError("quadrotor: Euler rate map is singular at pitch +-pi/2");
  const double sp = std::sin(phi), cp = std::cos(phi), tt = std::tan(theta);
  Eigen::Matrix3d G;
  G << 1.0, sp * tt, cp * tt, 0.0, cp, -sp, 0.0, sp / ct, cp / ct;
  return G;
}

// [T, tau] = M * omega^2.
inline Eigen::Matrix4d rotor_mixer(const QuadrotorParams& prm) {
  const double c = prm.cT, l = prm.arm, d = prm.cQ;
  Eigen::Matrix4d M;
  M << c, c, c, c, 0.0, -l * c, 0.0, l * c, l * c, 0.0, -l * c, 0.0, -d, d, -d, d;
  return M;
}

inline ContinuousRhs quadrotor_rhs(QuadrotorParams prm) {
  const Eigen::Matrix4d mixer = rotor_mixer(prm);
  return [prm, mixer](const Vec& x, const Vec& u) -> Vec {
    const Eigen::Vector3d v = x.segment<3>(6);
    const Eigen::Vector3d Om = x.segment<3>(9);
    const double phi = x(3), theta = x(4), psi = x(5);
    const Eigen::Vector4d wrench = mixer * u.head<4>().cwiseAbs2();
    const double thrust = wrench(0);
    const Eigen::Vector3d torque = wrench.tail<3>();
    const Eigen::Matrix3d R = rotation_rpy(phi, theta, psi);
    const Eigen::Vector3d e3 = Eigen::Vector3d::UnitZ();
    const Eigen::Matrix3d B = prm.blade_drag * skew(e3);
    const Eigen::Matrix3d D = prm.yaw_damping * e3 * e3.transpose();
    const Eigen::Vector3d J = prm.inertia.head<3>();
    Vec dx(12);
    dx.segment<3>(0) = v;
    dx.segment<3>(3) = euler_rate_map(phi, theta) * Om;
    dx.segment<3>(6) = prm.g * e3 - (thrust / prm.mass) * (R * e3) - (R * (B * Om)) / prm.mass;
    const Eigen::Vector3d JOm = J.cwiseProduct(Om);
    dx.segment<3>(9) = (-Om.cross(JOm) + torque - D * Om).cwiseQuotient(J);
    return dx;
  };
}

/// Euler-discretized quadrotor, x = [z, xi, v, Omega], u = rotor speeds
/// omega_1..4 (the thrust/torque map acts on omega^2), y = [z, xi].
inline SystemModel quadrotor(QuadrotorParams prm = {}) {
  SystemModel m;
  m.id = "quadrotor";
  m.n = 12, m.m = 4, m.q = 12, m.p = 6;
  m.additive_disturbance = true;
  m.step_fn = additive_step(discretize(quadrotor_rhs(prm), Discretization::kEuler, prm.dt));
  m.output_fn = [](const Vec& x, const Vec&) -> Vec { return x.head(6); };
  m.X = Box::all(12), m.W = Box::all(12), m.V = Box::all(6);
  m.nominal_state = Vec::Zero(12);
  m.card = {{"description",
             "Euler-discretized quadrotor with flexible blades; states [z, xi, v, Omega], "
             "inputs are rotor speeds omega (squared internally by the mixer)"},
            {"parameters",
             {{"mass", prm.mass}, {"inertia", to_json(prm.inertia)}, {"g", prm.g},
              {"arm", prm.arm}, {"cT", prm.cT}, {"cQ", prm.cQ}, {"blade_drag", prm.blade_drag},
              {"yaw_damping", prm.yaw_damping}, {"dt", prm.dt}}},
            {"hover_rotor_speed", prm.hover_speed()}};
  return m;
}

/// Registry lookup: scalar, reactor, cstr, quadrotor, lti:<n>:<m>:<p>:<seed>.
inline SystemModel make_model(const std::string& id) {
  if (id == "scalar") return scalar_integrator();
  if (id == "reactor") return batch_reactor();
  if (id == "cstr") return cstr();
  if (id == "quadrotor") return quadrotor();
  if (id.rfind("lti:", 0) == 0) {
    std::vector<std::string> parts;
    std::stringstream ss(id.substr(4));
    for (std::string tok; std::getline(ss, tok, ':');) parts.push_back(tok);
    if (parts.size() != 4) throw ValidationError("model id must be lti:<n>:<m>:<p>:<seed>");
    try {
      return make_random_lti(std::stoi(parts[0]), std::stoi(parts[1]), std::stoi(parts[2]),
                             std::stoull(parts[3]));
    } catch (const std::logic_error&) {
      throw ValidationError("malformed model id '" + id + "'");
    }
  }
  throw ValidationError("unknown model id '" + id + "'");
}

}  // namespace tpmhe
