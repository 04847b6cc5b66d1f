// Mode-matched three-step observer with norm-ball set estimates.
#pragma once

#include <optional>
#include <utility>

#include "smio/decomposition.hpp"
#include "smio/linalg.hpp"

namespace smio {

struct SetEstimate {
  Vector center;
  double radius = 0.0;
};

struct ObserverState {
  Vector xhat_kk;
  Vector xhat_pred;
  Vector xhat_star;
  Vector dhat_prev;  // empty until the first full step
  Vector residual;   // T2 y_k - C2 xhat_star - D2 u_k
  double delta_x = 0.0;
  double delta_d = 0.0;
  int k = 0;

  // Cached (u_{k-1}, y_{k-1}); empty before the priming call.
  Vector u_prev;
  Vector y_prev;
  bool primed = false;

  // Closed-form radius accumulators: P = Ae^{k-1}, sums over i <= k-2.
  Matrix Ae_pow;
  double sum_w = 0.0;
  double sum_v = 0.0;
  double delta_x0 = 0.0;
  // ||Ae|| >= 1: the one-step recursion alone would diverge.
  bool radius_diverging = false;
};

inline ObserverState init_observer(const Vector& xhat0, double delta_x0) {
  if (!(delta_x0 >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "initial radius must be nonnegative");
  }
  ObserverState s;
  s.xhat_kk = xhat0;
  s.xhat_pred = xhat0;
  s.xhat_star = xhat0;
  s.delta_x = delta_x0;
  s.delta_x0 = delta_x0;
  s.Ae_pow = identity(xhat0.size());
  return s;
}

/// Advances the observer by one (u, y) pair. The first call only caches
/// (u_0, y_0); each later call finalizes d^_{k-1} and x^_{k|k}.
inline ObserverState step(ObserverState s, const ModeDesign& design,
                          const Vector& u, const Vector& y,
                          const SystemModel& model) {
  const auto& dec = design.dec;
  const auto& g = design.gains;
  const auto& ed = design.ed;
  if (s.xhat_kk.size() != model.n() || u.size() != model.m() ||
      y.size() != model.l()) {
    throw Error(ErrorCode::kInvalidArgument,
                "observer step: dimension mismatch");
  }
  if (!s.primed) {
    s.u_prev = u;
    s.y_prev = y;
    s.primed = true;
    s.residual = Vector::Zero(dec.T2.rows());
    return s;
  }

  const Vector d1 = g.M1 * (dec.T1 * s.y_prev - dec.C1 * s.xhat_kk -
                            dec.D1 * s.u_prev);
  s.xhat_pred = model.A * s.xhat_kk + model.B * s.u_prev + dec.G1 * d1;
  const Vector d2 =
      g.M2 * (dec.T2 * y - dec.C2 * s.xhat_pred - dec.D2 * u);
  s.dhat_prev = dec.V1 * d1 + dec.V2 * d2;
  s.xhat_star = s.xhat_pred + dec.G2 * d2;
  s.residual = dec.T2 * y - dec.C2 * s.xhat_star - dec.D2 * u;
  s.xhat_kk = s.xhat_star + g.Ltilde * s.residual;

  const double eta_w = model.eta_w;
  const double eta_v = model.eta_v;
  const double delta_prev = s.delta_x;
  s.delta_d = design.nPhi_x * delta_prev + design.nPhi_w * eta_w +
              (design.nPhi_v1 + design.nPhi_v2) * eta_v;

  const double recursive = ed.theta * delta_prev + design.nBew * eta_w +
                           (design.nBev1 + design.nBev2) * eta_v;
  const Matrix& P = s.Ae_pow;
  const double pw = norm2(P * ed.Bew);
  const double closed = norm2(ed.Ae * P) * s.delta_x0 +
                        eta_w * (s.sum_w + pw) +
                        eta_v * (norm2(P * ed.Bev1) + s.sum_v + design.nBev2);
  s.radius_diverging = ed.theta >= 1.0;
  s.delta_x = std::min(recursive, closed);
  s.sum_w += pw;
  s.sum_v += norm2(P * design.X);
  s.Ae_pow = ed.Ae * P;

  s.u_prev = u;
  s.y_prev = y;
  ++s.k;
  return s;
}

/// State ball (x^_{k|k}, delta^x_k) and input ball (d^_{k-1}, delta^d_{k-1}).
inline std::pair<SetEstimate, std::optional<SetEstimate>> set_estimates(
    const ObserverState& s) {
  SetEstimate x{s.xhat_kk, s.delta_x};
  if (s.k == 0) return {x, std::nullopt};
  return {x, SetEstimate{s.dhat_prev, s.delta_d}};
}

/// Input ball, throwing if no input estimate exists yet.
inline SetEstimate input_estimate(const ObserverState& s) {
  if (s.k == 0) {
    throw Error(ErrorCode::kNotReady,
                "input estimate requested before the first full step");
  }
  return SetEstimate{s.dhat_prev, s.delta_d};
}

}  // namespace smio
