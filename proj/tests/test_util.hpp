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

#include <optional>
#include <vector>

#include "tpmhe/tpmhe.hpp"

namespace tpmhe::testing {

/// Independent dense least-squares solution of a linear window problem.
/// Decision z = (x_0, w_0, ..., w_{N-1}); states are explicit affine maps
/// of z, and the stacked weighted residual is minimized by QR.
inline std::vector<Vec> dense_linear_oracle(const SystemModel& m, const DataBatch& d, const CostSpec& cost,
                                            TimeIndex tau, int N, const std::optional<Prior>& prior = {}) {
  const auto& L = *m.linear;
  const int n = m.n, nz = n + N * n;
  // x_j = Mx[j] z + cx[j]
  std::vector<Mat> Mx;
  std::vector<Vec> cx;
  Mat M0 = Mat::Zero(n, nz);
  M0.leftCols(n) = Mat::Identity(n, n);
  Mx.push_back(M0);
  cx.push_back(Vec::Zero(n));
  for (int j = 0; j < N; ++j) {
    Mat Mn = L.A * Mx.back();
    Mn.block(0, n + j * n, n, n) += Mat::Identity(n, n);
    Vec cn = L.A * cx.back();
    if (m.m > 0) cn += L.B * d.u(tau + j);
    Mx.push_back(Mn);
    cx.push_back(cn);
  }
  std::vector<Mat> rows;
  std::vector<Vec> rhs;
  auto add = [&](const Mat& W, const Mat& J, const Vec& r) {
    const Mat S = Eigen::LLT<Mat>(W).matrixU();
    rows.push_back(S * J);
    rhs.push_back(S * r);
  };
  if (prior) add(prior->W, Mx[0], prior->mean - cx[0]);
  for (int j = 0; j < N; ++j) {
    Mat J = Mat::Zero(n, nz);
    J.block(0, n + j * n, n, n) = Mat::Identity(n, n);
    add(cost.Q(), J, Vec::Zero(n));
    add(cost.R(), L.C * Mx[static_cast<std::size_t>(j)], d.y(tau + j) - L.C * cx[static_cast<std::size_t>(j)]);
  }
  add(cost.G(), L.C * Mx.back(), d.y(tau + N) - L.C * cx.back());
  Eigen::Index total = 0;
  for (const auto& r : rows) total += r.rows();
  Mat A(total, nz);
  Vec b(total);
  Eigen::Index off = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    A.middleRows(off, rows[i].rows()) = rows[i];
    b.segment(off, rows[i].rows()) = rhs[i];
    off += rows[i].rows();
  }
  const Vec z = A.colPivHouseholderQr().solve(b);
  std::vector<Vec> xs;
  for (int j = 0; j <= N; ++j) xs.push_back(Mx[static_cast<std::size_t>(j)] * z + cx[static_cast<std::size_t>(j)]);
  return xs;
}

inline HorizonProblem make_problem(const SystemModel& m, const DataBatch& d, const CostSpec& c, TimeIndex tau,
                                   int N, SolverOptions opt = {}) {
  HorizonProblem P;
  P.model = &m;
  P.data = &d;
  P.cost = &c;
  P.tau = tau;
  P.N = N;
  P.options = opt;
  return P;
}

inline SolverOptions lm_options() {
  SolverOptions o;
  o.method = SolveMethod::kLevenbergMarquardt;
  o.grad_tol = 1e-10;
  o.max_iters = 200;
  return o;
}

inline double max_state_diff(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).cwiseAbs().maxCoeff());
  return m;
}

/// Small random LTI instance with data on [0, T].
struct LtiCase {
  SystemModel model;
  DataBatch data;
  CostSpec cost = CostSpec::diagonal(Vec::Ones(1), Vec::Ones(1), Vec::Ones(1));
};

inline LtiCase lti_case(int n, int m, int p, std::uint64_t seed, int T) {
  const std::string id = "lti:" + std::to_string(n) + ":" + std::to_string(m) + ":" + std::to_string(p) + ":" +
                         std::to_string(seed);
  const auto setup = default_setup(id, T);
  LtiCase c{setup.model, setup.run(seed), default_cost(setup.model)};
  return c;
}

}  // namespace tpmhe::testing
