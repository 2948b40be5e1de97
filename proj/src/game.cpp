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


#include "phri/game.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

namespace phri {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidArgument(message);
}

bool is_symmetric(const Mat& m, double tol) {
  return m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

double min_eigenvalue(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void check_psd(const Mat& m, int n, const std::string& name) {
  require(m.rows() == n && m.cols() == n, name + " must be " + std::to_string(n) + "x" +
                                              std::to_string(n));
  require(is_symmetric(m, 1e-12), name + " must be symmetric");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  require(min_eigenvalue(m) >= -1e-12 * scale, name + " must be positive semidefinite");
}

void check_pd(const Mat& m, int n, const std::string& name) {
  require(m.rows() == n && m.cols() == n, name + " must be " + std::to_string(n) + "x" +
                                              std::to_string(n));
  require(is_symmetric(m, 1e-12), name + " must be symmetric");
  require(min_eigenvalue(m) > 0.0, name + " must be positive definite");
}

nlohmann::json matrix_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

bool is_stabilizable(const Mat& A, const Mat& B) {
  const Eigen::Index n = A.rows();
  Eigen::EigenSolver<Mat> es(A, false);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::complex<double> lambda = es.eigenvalues()(i);
    if (lambda.real() < 0.0) continue;
    Eigen::MatrixXcd pbh(n, n + B.cols());
    pbh.leftCols(n) = A.cast<std::complex<double>>();
    pbh.leftCols(n).diagonal().array() -= lambda;
    pbh.rightCols(B.cols()) = B.cast<std::complex<double>>();
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(pbh);
    lu.setThreshold(1e-10);
    if (lu.rank() < n) return false;
  }
  return true;
}

// Bass: with β large enough that A + βI is anti-Hurwitz, the solution Z of
// (A + βI)Z + Z(A + βI)ᵀ = 2BBᵀ is positive definite for a controllable pair
// and K = BᵀZ⁻¹ places every closed-loop eigenvalue left of −β.
Mat stabilizing_gain(const Mat& A, const Mat& B) {
  const Eigen::Index n = A.rows();
  if (is_hurwitz(A)) return Mat::Zero(B.cols(), n);
  Eigen::EigenSolver<Mat> es(A, false);
  double shift = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) shift = std::max(shift, -es.eigenvalues()(i).real());
  shift += 1.0;
  const Mat F = A + shift * Mat::Identity(n, n);
  const Mat Z = solve_lyapunov(F.transpose(), -2.0 * B * B.transpose());
  Eigen::LLT<Mat> llt(0.5 * (Z + Z.transpose()));
  Mat K;
  if (llt.info() == Eigen::Success) {
    K = B.transpose() * llt.solve(Mat::Identity(n, n));
  } else {
    K = B.transpose() * Z.completeOrthogonalDecomposition().pseudoInverse();
  }
  if (!is_hurwitz(A - B * K)) {
    if (!is_stabilizable(A, B)) {
      throw NumericalError("solve_care: (A, B) is not stabilizable");
    }
    throw NumericalError("solve_care: could not construct a stabilizing initial gain");
  }
  return K;
}

}  // namespace

void GameWeights::validate() const {
  const int d = dof();
  require(d >= 1, "weights: R_h must be at least 1x1");
  check_psd(Q_hh, 2 * d, "Q_hh");
  check_psd(Q_hr, 2 * d, "Q_hr");
  check_psd(Q_rh, 2 * d, "Q_rh");
  check_psd(Q_rr, 2 * d, "Q_rr");
  check_pd(R_h, d, "R_h");
  check_pd(R_r, d, "R_r");
  require(alpha > 0.0 && alpha < 1.0, "weights: alpha must lie in (0, 1)");
}

GameWeights GameWeights::defaults(int dof, double alpha) {
  GameWeights w;
  Vec q(2 * dof);
  q.head(dof).setConstant(1.0);
  q.tail(dof).setConstant(1e-4);
  w.Q_hh = q.asDiagonal();
  w.Q_rr = w.Q_hh;
  w.Q_hr = Mat::Zero(2 * dof, 2 * dof);
  w.Q_rh = w.Q_hr;
  w.R_h = 5e-4 * Mat::Identity(dof, dof);
  w.R_r = w.R_h;
  w.alpha = alpha;
  w.validate();
  return w;
}

BlendedCosts combine_costs(const GameWeights& w) {
  w.validate();
  const int d = w.dof();
  const double a = w.alpha;
  BlendedCosts c;
  c.Q_c = a * (w.Q_hh + w.Q_hr) + (1.0 - a) * (w.Q_rh + w.Q_rr);
  c.R_c = Mat::Zero(2 * d, 2 * d);
  c.R_c.topLeftCorner(d, d) = a * w.R_h;
  c.R_c.bottomRightCorner(d, d) = (1.0 - a) * w.R_r;
  c.Q_h = a * w.Q_hh + (1.0 - a) * w.Q_hr;
  c.Q_r = a * w.Q_rh + (1.0 - a) * w.Q_rr;
  return c;
}

Mat care_residual(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const Mat& P) {
  const Mat RinvBt = R.llt().solve(B.transpose());
  return A.transpose() * P + P * A - P * B * RinvBt * P + Q;
}

Mat solve_lyapunov(const Mat& A, const Mat& Q) {
  require(A.rows() == A.cols() && Q.rows() == A.rows() && Q.cols() == A.cols(),
          "solve_lyapunov: A and Q must be square and the same size");
  const Eigen::Index n = A.rows();
  const Mat I = Mat::Identity(n, n);
  const Mat At = A.transpose();
  // vec(AᵀX) = (I ⊗ Aᵀ)vec(X), vec(XA) = (Aᵀ ⊗ I)vec(X), column-major vec.
  Mat L = Mat::Zero(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      L.block(i * n, j * n, n, n) += I(i, j) * At;
      L.block(i * n, j * n, n, n) += At(i, j) * I;
    }
  }
  Eigen::FullPivLU<Mat> lu(L);
  if (!lu.isInvertible()) {
    throw NumericalError("solve_lyapunov: A and -A share an eigenvalue");
  }
  const Vec x = lu.solve(-Eigen::Map<const Vec>(Q.data(), n * n));
  return Eigen::Map<const Mat>(x.data(), n, n);
}

bool is_hurwitz(const Mat& A, double margin) {
  Eigen::EigenSolver<Mat> es(A, false);
  return (es.eigenvalues().real().array() < -margin).all();
}

CareResult solve_care(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
                      const CareOptions& options) {
  const Eigen::Index n = A.rows(), m = B.cols();
  require(A.cols() == n && B.rows() == n, "solve_care: A must be n x n and B n x m");
  require(Q.rows() == n && Q.cols() == n, "solve_care: Q must be n x n");
  require(R.rows() == m && R.cols() == m, "solve_care: R must be m x m");
  Eigen::LLT<Mat> R_llt(R);
  require(R_llt.info() == Eigen::Success && is_symmetric(R, 1e-12),
          "solve_care: R must be symmetric positive definite");

  Mat K = stabilizing_gain(A, B);
  CareResult result;
  result.P = Mat::Zero(n, n);
  result.residual = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= options.max_iterations; ++it) {
    const Mat Acl = A - B * K;
    Mat P = solve_lyapunov(Acl, Q + K.transpose() * R * K);
    P = 0.5 * (P + P.transpose());
    K = R_llt.solve(B.transpose() * P);
    const double residual = care_residual(A, B, Q, R, P).norm();
    const double change = (P - result.P).norm();
    result.P = std::move(P);
    result.iterations = it;
    result.residual = residual;
    if (!std::isfinite(residual)) break;
    if (residual < options.tolerance) return result;
    // Rounding floor: Newton has stalled at machine precision.
    if (change <= 1e-14 * std::max(1.0, result.P.norm()) && residual < 1e-8) return result;
  }
  std::ostringstream msg;
  msg << "solve_care: no convergence after " << result.iterations
      << " iterations (last residual " << result.residual << ")";
  throw NumericalError(msg.str());
}

Mat feedback_gain(const Mat& P, const Mat& B, const Mat& R) {
  require(B.rows() == P.rows() && R.rows() == B.cols(), "feedback_gain: inconsistent shapes");
  Eigen::LLT<Mat> llt(R);
  require(llt.info() == Eigen::Success, "feedback_gain: R must be positive definite");
  return llt.solve(B.transpose() * P);
}

// ---------------------------------------------------------------------------

Vec shared_reference(const Vec& z_ref_h, const Vec& z_ref_r, const BlendedCosts& costs) {
  const Eigen::Index n = costs.Q_c.rows();
  require(z_ref_h.size() == n && z_ref_r.size() == n,
          "shared_reference: references must have length 2d");
  Eigen::FullPivLU<Mat> lu(costs.Q_c);
  if (!lu.isInvertible()) {
    std::ostringstream msg;
    msg << "shared_reference: Q_c is singular; zero-weighted coordinates:";
    for (Eigen::Index i = 0; i < n; ++i) {
      if (costs.Q_c.row(i).cwiseAbs().maxCoeff() == 0.0) msg << ' ' << i;
    }
    throw InvalidArgument(msg.str());
  }
  return lu.solve(costs.Q_h * z_ref_h + costs.Q_r * z_ref_r);
}

GameController::GameController(const PlantParams& plant, const GameWeights& weights,
                               const CareOptions& options)
    : dof_(plant.dof()), weights_(weights), costs_(combine_costs(weights)) {
  require(weights.dof() == dof_, "GameController: weights and plant disagree on dof");
  const StateSpace ss = build_state_space(plant);
  A_ = ss.A;
  B_ = ss.B();
  const CareResult care = solve_care(A_, B_, costs_.Q_c, costs_.R_c, options);
  P_ = care.P;
  residual_ = care.residual;
  K_ = feedback_gain(P_, B_, costs_.R_c);
  Q_c_lu_.compute(costs_.Q_c);
}

Vec GameController::shared_reference(const Vec& z_ref_h, const Vec& z_ref_r) const {
  if (!Q_c_lu_.isInvertible()) return phri::shared_reference(z_ref_h, z_ref_r, costs_);
  require(z_ref_h.size() == 2 * dof_ && z_ref_r.size() == 2 * dof_,
          "shared_reference: references must have length 2d");
  return Q_c_lu_.solve(costs_.Q_h * z_ref_h + costs_.Q_r * z_ref_r);
}

Vec GameController::control(const Vec& z, const Vec& z_ref) const {
  require(z.size() == 2 * dof_ && z_ref.size() == 2 * dof_,
          "GameController: state and reference must have length 2d");
  return -K_ * (z - z_ref);
}

Vec GameController::robot_action(const Vec& z, const Vec& z_ref) const {
  return control(z, z_ref).tail(dof_);
}

nlohmann::json GameController::dump() const {
  return {{"schema_version", kSchemaVersion},
          {"alpha", weights_.alpha},
          {"A", matrix_to_json(A_)},
          {"B", matrix_to_json(B_)},
          {"Q_c", matrix_to_json(costs_.Q_c)},
          {"R_c", matrix_to_json(costs_.R_c)},
          {"Q_h", matrix_to_json(costs_.Q_h)},
          {"Q_r", matrix_to_json(costs_.Q_r)},
          {"P", matrix_to_json(P_)},
          {"K_gt", matrix_to_json(K_)},
          {"care_residual", residual_}};
}

Vec reference_from_prediction(const Mat& prediction, const Vec& current_position,
                              int pick_index, double dt) {
  require(pick_index >= 1 && pick_index <= prediction.rows(),
          "reference_from_prediction: pick_index must lie in [1, N]");
  require(current_position.size() == prediction.cols(),
          "reference_from_prediction: position length must equal prediction width");
  require(dt > 0.0, "reference_from_prediction: dt must be > 0");
  const Eigen::Index d = prediction.cols();
  const Vec point = prediction.row(pick_index - 1).transpose();
  const Vec prev = pick_index == 1 ? current_position
                                   : Vec(prediction.row(pick_index - 2).transpose());
  Vec z(2 * d);
  z << point, (point - prev) / dt;
  return z;
}

double evaluate_game_cost(const Mat& z, const Mat& u, const Mat& z_ref, const Mat& Q_c,
                          const Mat& R_c, double dt, double horizon_T) {
  require(z.cols() == u.cols() && z.cols() == z_ref.cols(),
          "evaluate_game_cost: sequences must have the same length");
  require(dt > 0.0 && horizon_T >= 0.0, "evaluate_game_cost: dt must be > 0");
  if (z.cols() == 0) return 0.0;
  const auto last = std::min<Eigen::Index>(
      z.cols() - 1, static_cast<Eigen::Index>(std::floor(horizon_T / dt + 1e-9)));
  auto integrand = [&](Eigen::Index i) {
    const Vec e = z.col(i) - z_ref.col(i);
    return e.dot(Q_c * e) + u.col(i).dot(R_c * u.col(i));
  };
  double total = 0.0;
  for (Eigen::Index i = 0; i < last; ++i) total += 0.5 * dt * (integrand(i) + integrand(i + 1));
  return total;
}

double regulation_cost(const Mat& A, const Mat& B, const Mat& K, const Vec& z0,
                       const Mat& Q_c, const Mat& R_c, double dt, double horizon_T) {
  const Mat Acl = A - B * K;
  const Mat step = (Acl * dt).exp();
  const auto samples = static_cast<Eigen::Index>(std::floor(horizon_T / dt + 1e-9)) + 1;
  Mat z(z0.size(), samples);
  z.col(0) = z0;
  for (Eigen::Index i = 1; i < samples; ++i) z.col(i) = step * z.col(i - 1);
  const Mat u = -K * z;
  return evaluate_game_cost(z, u, Mat::Zero(z.rows(), samples), Q_c, R_c, dt, horizon_T);
}

}  // namespace phri
