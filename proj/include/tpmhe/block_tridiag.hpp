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
#include <vector>

#include "tpmhe/core.hpp"

namespace tpmhe {

/// Symmetric block-tridiagonal matrix with K diagonal blocks of size b:
/// diag[k] = H(k, k) and upper[k] = H(k, k+1).
struct BlockTridiagonal {
  std::vector<Mat> diag;
  std::vector<Mat> upper;

  BlockTridiagonal() = default;
  BlockTridiagonal(std::size_t blocks, Eigen::Index b)
      : diag(blocks, Mat::Zero(b, b)), upper(blocks ? blocks - 1 : 0, Mat::Zero(b, b)) {}

  std::size_t blocks() const { return diag.size(); }
  Eigen::Index block_size() const { return diag.empty() ? 0 : diag[0].rows(); }

  double mean_diagonal() const {
    double s = 0.0;
    Eigen::Index count = 0;
    for (const auto& d : diag) {
      s += d.diagonal().sum();
      count += d.rows();
    }
    return count ? s / static_cast<double>(count) : 0.0;
  }

  Vec multiply(const Vec& x) const {
    const Eigen::Index b = block_size();
    Vec y = Vec::Zero(x.size());
    for (std::size_t k = 0; k < blocks(); ++k) {
      const auto ki = static_cast<Eigen::Index>(k) * b;
      y.segment(ki, b) += diag[k] * x.segment(ki, b);
      if (k + 1 < blocks()) {
        y.segment(ki, b) += upper[k] * x.segment(ki + b, b);
        y.segment(ki + b, b) += upper[k].transpose() * x.segment(ki, b);
      }
    }
    return y;
  }

  Mat to_dense() const {
    const Eigen::Index b = block_size();
    const auto K = static_cast<Eigen::Index>(blocks());
    Mat H = Mat::Zero(K * b, K * b);
    for (Eigen::Index k = 0; k < K; ++k) {
      H.block(k * b, k * b, b, b) = diag[static_cast<std::size_t>(k)];
      if (k + 1 < K) {
        H.block(k * b, (k + 1) * b, b, b) = upper[static_cast<std::size_t>(k)];
        H.block((k + 1) * b, k * b, b, b) = upper[static_cast<std::size_t>(k)].transpose();
      }
    }
    return H;
  }
};

/// Solves (H + shift I) x = rhs by block Cholesky. Returns false if the
/// shifted matrix is not positive definite, or if a squared pivot falls
/// below rel_pivot_tol times the largest diagonal entry.
inline bool solve_block_tridiagonal(const BlockTridiagonal& H, double shift, const Vec& rhs,
                                    Vec& x, double rel_pivot_tol = 0.0) {
  const std::size_t K = H.blocks();
  const Eigen::Index b = H.block_size();
  if (K == 0) {
    x.resize(0);
    return true;
  }
  std::vector<Eigen::LLT<Mat>> L(K);
  std::vector<Mat> Bk(K > 0 ? K - 1 : 0);  // L_k^{-1} U_k
  double scale = 0.0;
  for (const auto& d : H.diag) scale = std::max(scale, d.diagonal().cwiseAbs().maxCoeff() + shift);
  const double min_pivot_sq = rel_pivot_tol * scale;
  Mat D = H.diag[0] + shift * Mat::Identity(b, b);
  for (std::size_t k = 0; k < K; ++k) {
    L[k].compute(D);
    if (L[k].info() != Eigen::Success) return false;
    const Mat Ld = L[k].matrixL();
    if (!Ld.allFinite() || (Ld.diagonal().array() <= 0.0).any()) return false;
    if (Ld.diagonal().cwiseAbs2().minCoeff() < min_pivot_sq) return false;
    if (k + 1 < K) {
      Bk[k] = L[k].matrixL().solve(H.upper[k]);
      D = H.diag[k + 1] + shift * Mat::Identity(b, b) - Bk[k].transpose() * Bk[k];
    }
  }
  std::vector<Vec> z(K);
  for (std::size_t k = 0; k < K; ++k) {
    Vec r = rhs.segment(static_cast<Eigen::Index>(k) * b, b);
    if (k > 0) r -= Bk[k - 1].transpose() * z[k - 1];
    z[k] = L[k].matrixL().solve(r);
  }
  x.resize(static_cast<Eigen::Index>(K) * b);
  for (std::size_t kk = K; kk-- > 0;) {
    Vec r = z[kk];
    if (kk + 1 < K) r -= Bk[kk] * x.segment(static_cast<Eigen::Index>(kk + 1) * b, b);
    x.segment(static_cast<Eigen::Index>(kk) * b, b) = L[kk].matrixU().solve(r);
  }
  return x.allFinite();
}

}  // namespace tpmhe
