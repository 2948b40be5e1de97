// Copyright 2026 The phri Authors
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


#ifndef PHRI_GAME_HPP
#define PHRI_GAME_HPP

#include <vector>

#include <json.hpp>

#include "phri/common.hpp"
#include "phri/dynamics.hpp"

namespace phri {

/// Quadratic weights of the two players plus the cooperation weight alpha.
struct GameWeights {
  Mat Q_hh, Q_hr, Q_rh, Q_rr;  // 2d×2d, symmetric PSD
  Mat R_h, R_r;                // d×d, symmetric PD
  double alpha = 0.8;

  int dof() const { return static_cast<int>(R_h.rows()); }
  void validate() const;
  /// Q_hh = Q_rr = diag(1,…,1, 1e-4,…,1e-4), zero cross weights,
  /// R_h = R_r = 5e-4·I, alpha = 0.8.
  static GameWeights defaults(int dof = 2, double alpha = 0.8);
};

struct BlendedCosts {
  Mat Q_c;  // 2d×2d
  Mat R_c;  // 2d×2d block diagonal
  Mat Q_h;
  Mat Q_r;
};

BlendedCosts combine_costs(const GameWeights& w);

struct CareOptions {
  int max_iterations = 100;
  double tolerance = 1e-10;
};

struct CareResult {
  Mat P;
  int iterations = 0;
  double residual = 0.0;  // Frobenius norm of the Riccati residual
};

/// Riccati residual AᵀP + PA − P·B·R⁻¹·Bᵀ·P + Q.
Mat care_residual(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
                  const Mat& P);

/// Solves Aᵀ·X + X·A + Q = 0 through the vectorized Kronecker system.
Mat solve_lyapunov(const Mat& A, const Mat& Q);

/// Continuous algebraic Riccati equation by Kleinman–Newton iteration from
/// a stabilizing gain obtained by Bass's pole-shifting construction.
/// Throws NumericalError on an unstabilizable pair or non-convergence.
CareResult solve_care(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
                      const CareOptions& options = {});

/// K = R⁻¹·Bᵀ·P.
Mat feedback_gain(const Mat& P, const Mat& B, const Mat& R);

bool is_hurwitz(const Mat& A, double margin = 0.0);

/// The cooperative LQ controller: immutable once built.
class GameController {
 public:
  GameController(const PlantParams& plant, const GameWeights& weights,
                 const CareOptions& options = {});

  int dof() const { return dof_; }
  const Mat& A() const { return A_; }
  const Mat& B() const { return B_; }
  const Mat& Q_c() const { return costs_.Q_c; }
  const Mat& R_c() const { return costs_.R_c; }
  const Mat& Q_h() const { return costs_.Q_h; }
  const Mat& Q_r() const { return costs_.Q_r; }
  const Mat& P() const { return P_; }
  const Mat& K() const { return K_; }
  double care_residual_norm() const { return residual_; }
  const GameWeights& weights() const { return weights_; }

  /// z_ref = Q_c⁻¹(Q_h·z_ref_h + Q_r·z_ref_r).
  Vec shared_reference(const Vec& z_ref_h, const Vec& z_ref_r) const;

  /// Full input u = −K(z − z_ref), rows [u_h; u_r].
  Vec control(const Vec& z, const Vec& z_ref) const;

  /// Robot slice u_r of −K(z − z_ref).
  Vec robot_action(const Vec& z, const Vec& z_ref) const;

  nlohmann::json dump() const;

 private:
  int dof_;
  GameWeights weights_;
  BlendedCosts costs_;
  Mat A_, B_, P_, K_;
  Eigen::FullPivLU<Mat> Q_c_lu_;
  double residual_ = 0.0;
};

/// Free-function form; throws InvalidArgument naming zero-weighted
/// coordinates when Q_c is singular.
Vec shared_reference(const Vec& z_ref_h, const Vec& z_ref_r,
                     const BlendedCosts& costs);

/// Reference state [position; velocity] taken from a predicted horizon at a
/// 1-based `pick_index`; velocity by backward difference, using
/// `current_position` as the predecessor of the first sample.
Vec reference_from_prediction(const Mat& prediction, const Vec& current_position,
                              int pick_index, double dt);

/// Trapezoidal quadrature of z̃ᵀQ_c z̃ + uᵀR_c u over samples spaced by dt,
/// truncated at horizon_T. Columns of each matrix are time samples.
double evaluate_game_cost(const Mat& z, const Mat& u, const Mat& z_ref,
                          const Mat& Q_c, const Mat& R_c, double dt,
                          double horizon_T);

/// Samples the closed loop ż = (A − B·K)z from z0 exactly (matrix
/// exponential per step) and returns its game cost. Used to check optimality.
double regulation_cost(const Mat& A, const Mat& B, const Mat& K, const Vec& z0,
                       const Mat& Q_c, const Mat& R_c, double dt,
                       double horizon_T);

}  // namespace phri

#endif  // PHRI_GAME_HPP
