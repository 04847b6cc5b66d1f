// Per-mode output/input splitting, observer gains and error dynamics.
#pragma once

#include <optional>
#include <sstream>
#include <string>

#include "smio/linalg.hpp"
#include "smio/model.hpp"
#include "smio/riccati.hpp"

namespace smio {

struct ModeDecomposition {
  Index p_H = 0;
  Matrix T1;     // p_H x l
  Matrix T2;     // (l - p_H) x l
  Matrix Sigma;  // p_H x p_H
  Matrix V1;     // rho x p_H
  Matrix V2;     // rho x (rho - p_H)
  Matrix C1, C2, D1, D2, G1, G2;
};

struct ObserverGains {
  Matrix M1;      // p_H x p_H
  Matrix M2;      // (rho - p_H) x (l - p_H)
  Matrix Ltilde;  // n x (l - p_H)
};

struct ErrorDynamics {
  Matrix Abar;
  Matrix Ae;
  Matrix Bew_star;
  Matrix Bev1_star;
  Matrix Bev2_star;
  Matrix Bew;
  Matrix Bev1;
  Matrix Bev2;
  double theta = 0.0;
};

namespace detail {

inline void flip_to_positive_peak(Eigen::Ref<Vector> v, bool* flipped) {
  Index idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  *flipped = v.size() > 0 && v(idx) < 0.0;
  if (*flipped) v = -v;
}

}  // namespace detail

/// SVD split of H^q into an attacked output channel (T1) and an attack-free
/// residual channel (T2), plus the matching split of the unknown input space.
inline ModeDecomposition decompose_mode(const SystemModel& model,
                                        const ModeHypothesis& mode) {
  const Matrix& Hq = mode.Hq;
  const Index l = model.l();
  const Index rho = mode.rho();
  if (Hq.rows() != l || mode.Gq.rows() != model.n() || mode.Gq.cols() != rho) {
    throw Error(ErrorCode::kInvalidArgument,
                "mode matrices do not match the model dimensions");
  }

  ModeDecomposition dec;
  Matrix U = identity(l);
  Matrix V = identity(rho);
  Vector sv(0);
  if (rho > 0) {
    Eigen::JacobiSVD<Matrix> svd(Hq, Eigen::ComputeFullU | Eigen::ComputeFullV);
    sv = svd.singularValues();
    const double smax = sv.size() > 0 ? sv(0) : 0.0;
    const double cutoff = static_cast<double>(std::max(l, rho)) *
                          std::numeric_limits<double>::epsilon() * smax;
    if (smax > 0.0) {
      for (Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > cutoff / 1e3 && sv(i) < cutoff * 1e3) {
          std::ostringstream msg;
          msg << "singular value " << sv(i) << " of H^" << mode.id
              << " is within a factor 1e3 of the rank cutoff " << cutoff;
          throw Error(ErrorCode::kRankAmbiguity, msg.str());
        }
      }
      dec.p_H = rank_with_cutoff(sv, cutoff);
      U = svd.matrixU();
      V = svd.matrixV();
    }
  }
  const Index p = dec.p_H;

  if (p > 0) {
    for (Index i = 0; i < l; ++i) {
      bool flipped = false;
      detail::flip_to_positive_peak(U.col(i), &flipped);
      if (i < p && flipped) V.col(i) = -V.col(i);
    }
    for (Index i = p; i < rho; ++i) {
      bool flipped = false;
      detail::flip_to_positive_peak(V.col(i), &flipped);
    }
  }

  dec.T1 = U.leftCols(p).transpose();
  dec.T2 = U.rightCols(l - p).transpose();
  dec.Sigma = sv.head(p).asDiagonal();
  dec.V1 = V.leftCols(p);
  dec.V2 = V.rightCols(rho - p);
  dec.C1 = dec.T1 * model.C;
  dec.C2 = dec.T2 * model.C;
  dec.D1 = dec.T1 * model.D;
  dec.D2 = dec.T2 * model.D;
  dec.G1 = mode.Gq * dec.V1;
  dec.G2 = mode.Gq * dec.V2;
  return dec;
}

/// (I - G2 M2 C2)(A - G1 M1 C1) for the given M1, M2.
inline Matrix abar_of(const ModeDecomposition& dec, const Matrix& M1,
                      const Matrix& M2, const Matrix& A) {
  const Index n = A.rows();
  return (identity(n) - dec.G2 * M2 * dec.C2) * (A - dec.G1 * M1 * dec.C1);
}

/// M1 = Sigma^{-1}, M2 = left inverse of C2 G2, Ltilde from the filter
/// Riccati equation on (Abar', C2') or the validated override.
inline ObserverGains synthesize_gains(
    const ModeDecomposition& dec, const SystemModel& model,
    const std::optional<Matrix>& override_ltilde = std::nullopt) {
  const Index n = model.n();
  const Index p = dec.p_H;
  const Index r = dec.T2.rows();
  ObserverGains gains;
  gains.M1 = Matrix::Zero(p, p);
  for (Index i = 0; i < p; ++i) gains.M1(i, i) = 1.0 / dec.Sigma(i, i);

  const Matrix CG = dec.C2 * dec.G2;
  gains.M2 = Matrix::Zero(CG.cols(), CG.rows());
  if (CG.cols() > 0) {
    if (CG.rows() < CG.cols()) {
      throw Error(ErrorCode::kInfeasible,
                  "C2*G2 has fewer rows than columns; no left inverse");
    }
    Eigen::JacobiSVD<Matrix> svd(CG, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double tol = 1e-10 * std::max(1.0, s(0));
    if (s(s.size() - 1) <= tol) {
      std::ostringstream msg;
      msg << "C2*G2 is rank deficient (smallest singular value "
          << s(s.size() - 1) << ")";
      throw Error(ErrorCode::kInfeasible, msg.str());
    }
    gains.M2 = svd.matrixV() * s.cwiseInverse().asDiagonal() *
               svd.matrixU().transpose();
  }

  const Matrix Abar = abar_of(dec, gains.M1, gains.M2, model.A);
  auto closed_loop = [&](const Matrix& L) {
    return Matrix((identity(n) - L * dec.C2) * Abar);
  };

  if (override_ltilde) {
    const Matrix& L = *override_ltilde;
    if (L.rows() != n || L.cols() != r) {
      std::ostringstream msg;
      msg << "Ltilde override must be " << n << "x" << r << ", got "
          << L.rows() << "x" << L.cols();
      throw Error(ErrorCode::kInvalidArgument, msg.str());
    }
    const double radius = spectral_radius(closed_loop(L));
    if (!(radius < 1.0)) {
      std::ostringstream msg;
      msg << "Ltilde override gives spectral radius " << radius;
      throw Error(ErrorCode::kUnstableOverride, msg.str());
    }
    gains.Ltilde = L;
    return gains;
  }

  if (r == 0) {
    gains.Ltilde = Matrix::Zero(n, 0);
  } else {
    const Matrix P = solve_dare(Abar.transpose(), dec.C2.transpose(),
                                identity(n), identity(r));
    const Matrix S = dec.C2 * P * dec.C2.transpose() + identity(r);
    gains.Ltilde = S.ldlt().solve(dec.C2 * P).transpose();
  }
  const double radius = spectral_radius(closed_loop(gains.Ltilde));
  if (!(radius < 1.0)) {
    std::ostringstream msg;
    msg << "no stabilizing gain: spectral radius of the error dynamics is "
        << radius;
    throw Error(ErrorCode::kSynthesisFailure, msg.str());
  }
  return gains;
}

inline ErrorDynamics error_dynamics(const ModeDecomposition& dec,
                                    const ObserverGains& gains,
                                    const SystemModel& model) {
  const Index n = model.n();
  const Matrix I = identity(n);
  ErrorDynamics ed;
  const Matrix proj = I - dec.G2 * gains.M2 * dec.C2;
  const Matrix corr = I - gains.Ltilde * dec.C2;
  ed.Abar = proj * (model.A - dec.G1 * gains.M1 * dec.C1);
  ed.Ae = corr * ed.Abar;
  ed.Bew_star = proj;
  ed.Bev1_star = -proj * (dec.G1 * gains.M1 * dec.T1);
  ed.Bev2_star = -dec.G2 * gains.M2 * dec.T2;
  ed.Bew = corr * ed.Bew_star;
  ed.Bev1 = corr * ed.Bev1_star;
  ed.Bev2 = corr * ed.Bev2_star - gains.Ltilde * dec.T2;
  ed.theta = norm2(ed.Ae);
  return ed;
}

/// Everything one mode-matched observer needs. The Phi matrices map the
/// previous state error and the noise samples to the input-estimate error:
///   d^_{k-1} - d_{k-1} = Phi_x e_{k-1} + Phi_w w_{k-1}
///                        + Phi_v1 v_{k-1} + Phi_v2 v_k
struct ModeDesign {
  ModeHypothesis mode;
  ModeDecomposition dec;
  ObserverGains gains;
  ErrorDynamics ed;
  Matrix Phi_x, Phi_w, Phi_v1, Phi_v2;
  double nPhi_x = 0.0, nPhi_w = 0.0, nPhi_v1 = 0.0, nPhi_v2 = 0.0;
  double nBew = 0.0, nBev1 = 0.0, nBev2 = 0.0;
  Matrix X;  // Bev1 + Ae Bev2
};

inline ModeDesign design_mode(
    const SystemModel& model, const ModeHypothesis& mode,
    const std::optional<Matrix>& override_ltilde = std::nullopt) {
  ModeDesign d;
  d.mode = mode;
  d.dec = decompose_mode(model, mode);
  d.gains = synthesize_gains(d.dec, model, override_ltilde);
  d.ed = error_dynamics(d.dec, d.gains, model);
  const auto& dec = d.dec;
  const auto& g = d.gains;
  const Matrix V1M1 = dec.V1 * g.M1;
  const Matrix V2M2 = dec.V2 * g.M2;
  const Matrix G1M1 = dec.G1 * g.M1;
  d.Phi_x = V1M1 * dec.C1 + V2M2 * dec.C2 * (model.A - G1M1 * dec.C1);
  d.Phi_w = V2M2 * dec.C2;
  d.Phi_v1 = V1M1 * dec.T1 - V2M2 * dec.C2 * G1M1 * dec.T1;
  d.Phi_v2 = V2M2 * dec.T2;
  d.nPhi_x = norm2(d.Phi_x);
  d.nPhi_w = norm2(d.Phi_w);
  d.nPhi_v1 = norm2(d.Phi_v1);
  d.nPhi_v2 = norm2(d.Phi_v2);
  d.nBew = norm2(d.ed.Bew);
  d.nBev1 = norm2(d.ed.Bev1);
  d.nBev2 = norm2(d.ed.Bev2);
  d.X = d.ed.Bev1 + d.ed.Ae * d.ed.Bev2;
  return d;
}

}  // namespace smio
