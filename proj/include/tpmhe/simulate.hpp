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
#include <numbers>
#include <string>
#include <vector>

#include "tpmhe/core.hpp"
#include "tpmhe/models.hpp"
#include "tpmhe/random.hpp"

namespace tpmhe {

// ---------------------------------------------------------------------------
// Batch validation
// ---------------------------------------------------------------------------

struct Finding {
  std::string kind;  // "dimension", "constraint" or "non_finite"
  std::string message;
};

struct ValidationReport {
  std::vector<Finding> findings;
  bool ok() const { return findings.empty(); }
  bool has(const std::string& kind) const {
    for (const auto& f : findings)
      if (f.kind == kind) return true;
    return false;
  }
};

inline ValidationReport validate_batch(const DataBatch& batch, const SystemModel& model) {
  ValidationReport rep;
  auto add = [&](std::string kind, std::string msg) {
    rep.findings.push_back({std::move(kind), std::move(msg)});
  };
  if (batch.inputs.size() != batch.outputs.size())
    add("dimension", "inputs and outputs have different lengths (" +
                         std::to_string(batch.inputs.size()) + " vs " +
                         std::to_string(batch.outputs.size()) + ")");
  auto check_seq = [&](const std::vector<Vec>& seq, int dim, const char* name) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const TimeIndex t = batch.t0 + static_cast<TimeIndex>(i);
      if (seq[i].size() != dim) {
        add("dimension", std::string(name) + " at t=" + std::to_string(t) + " has dimension " +
                             std::to_string(seq[i].size()) + ", expected " + std::to_string(dim));
      } else if (!seq[i].allFinite()) {
        add("non_finite", std::string(name) + " at t=" + std::to_string(t) + " is not finite");
      }
    }
  };
  check_seq(batch.inputs, model.m, "u");
  check_seq(batch.outputs, model.p, "y");
  if (batch.truth) {
    const auto& tr = *batch.truth;
    if (tr.x.size() != batch.outputs.size())
      add("dimension", "truth x length differs from outputs length");
    if (tr.v.size() != batch.outputs.size())
      add("dimension", "truth v length differs from outputs length");
    if (!batch.outputs.empty() && tr.w.size() + 1 != batch.outputs.size())
      add("dimension", "truth w must have one element fewer than outputs");
    check_seq(tr.x, model.n, "x");
    check_seq(tr.w, model.q, "w");
    check_seq(tr.v, model.p, "v");
    auto check_set = [&](const std::vector<Vec>& seq, const Box& box, const char* name) {
      for (std::size_t i = 0; i < seq.size(); ++i)
        if (seq[i].size() == box.dim() && seq[i].allFinite() && !box.contains(seq[i]))
          add("constraint", std::string(name) + " at t=" +
                                std::to_string(batch.t0 + static_cast<TimeIndex>(i)) +
                                " violates its constraint set");
    };
    check_set(tr.x, model.X, "x");
    check_set(tr.w, model.W, "w");
    check_set(tr.v, model.V, "v");
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Noise and input profiles
// ---------------------------------------------------------------------------

/// Uniform noise on [-b, b] per component plus deterministic overlays:
/// a constant offset and, for w, amplitude * sin(frequency * t + phase).
struct NoiseSpec {
  Vec w_bounds;
  Vec v_bounds;
  Vec w_offset;  // empty: zero
  Vec v_offset;
  Vec w_amplitude;  // empty: no sinusoid
  double w_frequency = 0.0;  // rad per step
  Vec w_phase;

  void validate(const SystemModel& model) const {
    if (w_bounds.size() != model.q || v_bounds.size() != model.p)
      throw ValidationError("NoiseSpec: bound dimensions do not match the model");
    if ((w_bounds.array() < 0.0).any() || (v_bounds.array() < 0.0).any())
      throw ValidationError("NoiseSpec: bounds must be nonnegative");
    if (w_offset.size() && w_offset.size() != model.q)
      throw ValidationError("NoiseSpec: w offset dimension mismatch");
    if (v_offset.size() && v_offset.size() != model.p)
      throw ValidationError("NoiseSpec: v offset dimension mismatch");
    if (w_amplitude.size() && (w_amplitude.size() != model.q || w_phase.size() != model.q))
      throw ValidationError("NoiseSpec: sinusoid dimension mismatch");
  }

  Vec overlay_w(TimeIndex t) const {
    Vec o = w_offset.size() ? w_offset : Vec::Zero(w_bounds.size());
    if (w_amplitude.size())
      for (Eigen::Index i = 0; i < o.size(); ++i)
        o(i) += w_amplitude(i) * std::sin(w_frequency * static_cast<double>(t) + w_phase(i));
    return o;
  }
  Vec overlay_v() const { return v_offset.size() ? v_offset : Vec::Zero(v_bounds.size()); }

  Json to_json() const {
    Json j{{"w_bounds", tpmhe::to_json(w_bounds)}, {"v_bounds", tpmhe::to_json(v_bounds)}};
    if (w_offset.size()) j["w_offset"] = tpmhe::to_json(w_offset);
    if (v_offset.size()) j["v_offset"] = tpmhe::to_json(v_offset);
    if (w_amplitude.size()) {
      j["w_amplitude"] = tpmhe::to_json(w_amplitude);
      j["w_frequency"] = w_frequency;
      j["w_phase"] = tpmhe::to_json(w_phase);
    }
    return j;
  }

  static NoiseSpec from_json(const Json& j) {
    NoiseSpec s;
    s.w_bounds = vec_from_json(j.at("w_bounds"));
    s.v_bounds = vec_from_json(j.at("v_bounds"));
    if (j.contains("w_offset")) s.w_offset = vec_from_json(j["w_offset"]);
    if (j.contains("v_offset")) s.v_offset = vec_from_json(j["v_offset"]);
    if (j.contains("w_amplitude")) {
      s.w_amplitude = vec_from_json(j["w_amplitude"]);
      s.w_frequency = j.value("w_frequency", 0.0);
      s.w_phase = j.contains("w_phase") ? vec_from_json(j["w_phase"])
                                        : Vec::Zero(s.w_amplitude.size());
    }
    return s;
  }
};

/// Open-loop (or, for periodic_refill, state-dependent) input generator.
///   zero            u = 0
///   constant        u = value
///   sinusoid        u_i = offset_i + amplitude_i sin(2 pi t / period_i + phase_i)
///   trapezoid       u_1 alternates between high and low plateaus with
///                   linear ramps; other components constant
///   periodic_refill u = target - f(x, 0) at t = k * period (k >= 1), else 0
///   spiral_openloop quadrotor rotor speeds tracking a rotating tilt with a
///                   short climb pulse (inverse dynamics of the Euler model)
struct InputProfile {
  std::string kind = "zero";
  Json params = Json::object();

  Json to_json() const { return Json{{"kind", kind}, {"params", params}}; }
  static InputProfile from_json(const Json& j) {
    return InputProfile{j.at("kind").get<std::string>(), j.value("params", Json::object())};
  }

  Vec input(const SystemModel& model, TimeIndex t, const Vec& x) const;
};

namespace detail {

inline double smoothstep(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  return s * s * (3.0 - 2.0 * s);
}

// Desired roll/pitch/yaw for the spiral: a tilt of magnitude alpha rotating
// with the given period, faded in over `ramp` steps.
inline Eigen::Vector3d spiral_attitude(const Json& p, double t) {
  const double alpha = p.value("tilt", 0.05);
  const double period = p.value("period", 100.0);
  const double ramp = p.value("ramp", 40.0);
  const double a = alpha * smoothstep(t / ramp);
  const double ang = 2.0 * std::numbers::pi * t / period;
  return Eigen::Vector3d(a * std::sin(ang), -a * std::cos(ang), 0.0);
}

inline Vec spiral_input(const Json& p, TimeIndex t) {
  const QuadrotorParams prm;
  const double dt = prm.dt;
  const double climb_acc = p.value("climb_acceleration", 1.0);
  const double climb_steps = p.value("climb_steps", 20.0);
  const double td = static_cast<double>(t);
  const Eigen::Vector3d xi0 = spiral_attitude(p, td);
  const Eigen::Vector3d xi1 = spiral_attitude(p, td + 1.0);
  const Eigen::Vector3d xi2 = spiral_attitude(p, td + 2.0);
  // Body rates that realize the Euler angle increments under the Euler step.
  const Eigen::Vector3d om0 = euler_rate_map(xi0(0), xi0(1)).inverse() * (xi1 - xi0) / dt;
  const Eigen::Vector3d om1 = euler_rate_map(xi1(0), xi1(1)).inverse() * (xi2 - xi1) / dt;
  const Eigen::Vector3d J = prm.inertia.head<3>();
  const Eigen::Matrix3d D = prm.yaw_damping * Eigen::Vector3d::UnitZ() *
                            Eigen::Vector3d::UnitZ().transpose();
  const Eigen::Vector3d torque =
      J.cwiseProduct(om1 - om0) / dt + om0.cross(J.cwiseProduct(om0)) + D * om0;
  // Vertical thrust component compensates gravity, plus an initial climb pulse.
  const double up = td < climb_steps ? climb_acc : 0.0;
  const double thrust = prm.mass * (prm.g + up) / (std::cos(xi0(0)) * std::cos(xi0(1)));
  Eigen::Vector4d wrench(thrust, torque(0), torque(1), torque(2));
  const Eigen::Vector4d omega_sq = rotor_mixer(prm).inverse() * wrench;
  return omega_sq.cwiseMax(0.0).cwiseSqrt();
}

}  // namespace detail

inline Vec InputProfile::input(const SystemModel& model, TimeIndex t, const Vec& x) const {
  const double td = static_cast<double>(t);
  if (kind == "zero") return Vec::Zero(model.m);
  if (kind == "constant") {
    Vec u = vec_from_json(params.at("value"));
    if (u.size() != model.m) throw ValidationError("constant profile: dimension mismatch");
    return u;
  }
  if (kind == "sinusoid") {
    const Vec amp = vec_from_json(params.at("amplitude"));
    const Vec period = vec_from_json(params.at("period"));
    const Vec phase = vec_from_json(params.at("phase"));
    const Vec offset = params.contains("offset") ? vec_from_json(params["offset"]) : Vec::Zero(model.m);
    if (amp.size() != model.m || period.size() != model.m || phase.size() != model.m)
      throw ValidationError("sinusoid profile: dimension mismatch");
    Vec u(model.m);
    for (int i = 0; i < model.m; ++i)
      u(i) = offset(i) + amp(i) * std::sin(2.0 * std::numbers::pi * td / period(i) + phase(i));
    return u;
  }
  if (kind == "trapezoid") {
    const double high = params.value("high", 300.0);
    const double low = params.value("low", 275.0);
    const double plateau = params.value("plateau", 30.0);
    const double ramp = params.value("ramp", 10.0);
    Vec u = vec_from_json(params.at("base"));
    if (u.size() != model.m) throw ValidationError("trapezoid profile: dimension mismatch");
    const double period = 2.0 * (plateau + ramp);
    const double s = std::fmod(td, period);
    double v;
    if (s < plateau) v = high;
    else if (s < plateau + ramp) v = high + (low - high) * (s - plateau) / ramp;
    else if (s < 2.0 * plateau + ramp) v = low;
    else v = low + (high - low) * (s - 2.0 * plateau - ramp) / ramp;
    u(0) = v;
    return u;
  }
  if (kind == "periodic_refill") {
    const long period = params.value("period", 50L);
    const long count = params.value("count", 7L);
    const Vec target = vec_from_json(params.at("target"));
    if (t > 0 && t % period == 0 && t / period <= count) return target - model.drift(x, Vec::Zero(model.m));
    return Vec::Zero(model.m);
  }
  if (kind == "spiral_openloop") {
    if (model.m != 4) throw ValidationError("spiral_openloop profile requires the quadrotor");
    return detail::spiral_input(params, t);
  }
  throw ValidationError("unknown input profile '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// Simulates x_{t+1} = f(x_t, u_t, w_t), y_t = h(x_t, u_t) + v_t for
/// t = 0..T. Disturbance and noise come from independent substreams of seed.
inline DataBatch simulate(const SystemModel& model, const Vec& x0, const InputProfile& profile,
                          const NoiseSpec& noise, int T, std::uint64_t seed) {
  if (T < 0) throw ValidationError("simulate: T must be nonnegative");
  if (x0.size() != model.n) throw ValidationError("simulate: x0 dimension mismatch");
  if (!model.X.contains(x0)) throw SimulationError("simulate: x0 outside the state constraint set", 0);
  noise.validate(model);
  Rng rng_w(split_seed(seed, "w"));
  Rng rng_v(split_seed(seed, "v"));
  DataBatch batch;
  batch.t0 = 0;
  TruthRecord tr;
  Vec x = x0;
  for (TimeIndex t = 0; t <= T; ++t) {
    const Vec u = profile.input(model, t, x);
    const Vec v = rng_v.symmetric(noise.v_bounds) + noise.overlay_v();
    batch.inputs.push_back(u);
    batch.outputs.push_back(model.output(x, u) + v);
    tr.x.push_back(x);
    tr.v.push_back(v);
    if (t == T) break;
    const Vec w = rng_w.symmetric(noise.w_bounds) + noise.overlay_w(t);
    tr.w.push_back(w);
    x = model.step(x, u, w);
    if (!x.allFinite() || !model.X.contains(x))
      throw SimulationError("simulate: state left the constraint set at t=" + std::to_string(t + 1),
                            t + 1);
  }
  batch.truth = std::move(tr);
  batch.meta.model_id = model.id;
  batch.meta.seed = seed;
  batch.meta.generation = {{"x0", to_json(x0)}, {"profile", profile.to_json()},
                           {"noise", noise.to_json()}, {"T", T}};
  return batch;
}

/// Everything needed to regenerate one experiment's data.
struct SimulationSetup {
  SystemModel model;
  Vec x0;
  InputProfile profile;
  NoiseSpec noise;
  int T = 0;

  DataBatch run(std::uint64_t seed) const { return simulate(model, x0, profile, noise, T, seed); }
};

/// Default experiment setup for a registry model id. T < 0 selects the
/// model's default length.
inline SimulationSetup default_setup(const std::string& model_id, int T = -1) {
  SimulationSetup s;
  s.model = make_model(model_id);
  const SystemModel& m = s.model;
  if (m.id == "scalar") {
    s.x0 = Vec::Ones(1);
    s.noise.w_bounds = Vec::Zero(1);
    s.noise.v_bounds = Vec::Zero(1);
    s.noise.w_offset = Vec::Ones(1);
    s.noise.v_offset = Vec::Ones(1);
    s.T = 30;
  } else if (m.id == "reactor") {
    s.x0 = (Vec(2) << 3.0, 0.0).finished();
    s.profile = {"periodic_refill", {{"period", 50}, {"count", 7}, {"target", {3.0, 0.0}}}};
    s.noise.w_bounds = Vec::Constant(2, 0.05);
    s.noise.v_bounds = Vec::Constant(1, 0.5);
    s.T = 400;
  } else if (m.id == "cstr") {
    s.x0 = (Vec(3) << 0.8, 295.0, 0.7).finished();
    s.profile = {"trapezoid",
                 {{"high", 300.0}, {"low", 275.0}, {"plateau", 30.0}, {"ramp", 10.0},
                  {"base", {300.0, 0.1}}}};
    s.noise.w_bounds = (Vec(3) << 5e-3, 1.0, 5e-3).finished();
    s.noise.v_bounds = Vec::Constant(1, 3.0);
    s.T = 200;
  } else if (m.id == "quadrotor") {
    s.x0 = Vec::Zero(12);
    s.profile = {"spiral_openloop",
                 {{"tilt", 0.05}, {"period", 100.0}, {"ramp", 40.0},
                  {"climb_acceleration", 1.0}, {"climb_steps", 20.0}}};
    s.noise.w_bounds.resize(12);
    s.noise.w_bounds << Vec::Constant(3, 2e-2), Vec::Constant(3, 2e-5), Vec::Constant(3, 2e-3),
        Vec::Constant(3, 2e-6);
    s.noise.v_bounds.resize(6);
    s.noise.v_bounds << Vec::Constant(3, 2e-1), Vec::Constant(3, 5e-2);
    s.T = 200;
  } else if (m.id.rfind("lti:", 0) == 0) {
    // Input periods and phases are fixed by the model seed so that every
    // data seed sees the same known input.
    Rng rng(split_seed(fnv1a64(m.id), "lti-input"));
    Json amp = Json::array(), period = Json::array(), phase = Json::array();
    for (int i = 0; i < m.m; ++i) {
      amp.push_back(1.0);
      period.push_back(20.0 + 180.0 * rng.uniform());
      phase.push_back(2.0 * std::numbers::pi * rng.uniform());
    }
    s.profile = {"sinusoid", {{"amplitude", amp}, {"period", period}, {"phase", phase}}};
    s.x0 = Vec::Zero(m.n);
    s.noise.w_bounds = Vec::Constant(m.n, 0.015);
    s.noise.v_bounds = Vec::Constant(m.p, 0.03);
    s.noise.w_amplitude = Vec::Constant(m.n, 0.03);
    s.noise.w_frequency = 2.0 * std::numbers::pi / 500.0;
    Rng prng(split_seed(fnv1a64(m.id), "lti-overlay-phase"));
    s.noise.w_phase.resize(m.n);
    for (int i = 0; i < m.n; ++i) s.noise.w_phase(i) = 2.0 * std::numbers::pi * prng.uniform();
    s.T = 1200;
  } else {
    throw ValidationError("no default setup for model '" + m.id + "'");
  }
  if (T >= 0) s.T = T;
  return s;
}

}  // namespace tpmhe
