// Residuals, residual-norm thresholds, mode elimination, fusion and the
// pairwise mode-detectability analyzer.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "smio/decomposition.hpp"
#include "smio/linalg.hpp"
#include "smio/model.hpp"
#include "smio/observer.hpp"

namespace smio {

inline Vector residual(const ModeDecomposition& dec, const Vector& xhat_star,
                       const Vector& u, const Vector& y) {
  return dec.T2 * y - dec.C2 * xhat_star - dec.D2 * u;
}

/// Floating-point slack added to the thresholds: the residual is computed
/// from signals of size `scale`, so its rounding error is a small multiple of
/// eps * scale. Without it, noise-free runs eliminate modes on rounding alone.
inline double roundoff_allowance(const ModeDecomposition& dec,
                                 const Vector& xhat_star, const Vector& u,
                                 const Vector& y) {
  const double scale = (dec.T2 * y).norm() + norm2(dec.C2) * xhat_star.norm() +
                       norm2(dec.D2) * u.norm();
  return 1e-10 * scale;
}

struct ResidualRecord {
  int mode_id = 0;
  int k = 0;
  Vector r;
  double r_norm = 0.0;
  std::optional<double> delta_inf;
  double delta_tri = 0.0;
  double delta_hat = 0.0;
  bool eliminated = false;
};

/// Maps the stacked uncertainty t_k = [e_0; w_0..w_{k-1}; v_0..v_k] to the
/// true-mode residual, plus the per-coordinate box radii of t_k.
struct StackedResidualModel {
  Matrix Aq_k;
  Vector bounds;
  int k = 0;
};

namespace detail {

// Columns of the stacked matrix for the one-step maps that do not go through
// the Ae power chain.
struct BoundaryBlocks {
  Matrix w_last;   // C2 Bew*
  Matrix v_first;  // C2 Bev1*            (only used at k = 1)
  Matrix v_prev;   // C2 (Bev1* + Abar Bev2)
  Matrix v_last;   // C2 Bev2* + T2
};

inline BoundaryBlocks boundary_blocks(const ErrorDynamics& ed,
                                      const ModeDecomposition& dec) {
  BoundaryBlocks b;
  b.w_last = dec.C2 * ed.Bew_star;
  b.v_first = dec.C2 * ed.Bev1_star;
  b.v_prev = dec.C2 * (ed.Bev1_star + ed.Abar * ed.Bev2);
  b.v_last = dec.C2 * ed.Bev2_star + dec.T2;
  return b;
}

}  // namespace detail

inline StackedResidualModel build_stacked(const ErrorDynamics& ed,
                                          const ModeDecomposition& dec, int k,
                                          double delta_x0 = 0.0,
                                          double eta_w = 0.0,
                                          double eta_v = 0.0) {
  if (k < 1) {
    throw Error(ErrorCode::kUnsupported, "stacked residual needs k >= 1");
  }
  const Index n = ed.Ae.rows();
  const Index l = dec.T2.cols();
  const Index r = dec.T2.rows();
  const Index kk = k;
  StackedResidualModel sm;
  sm.k = k;
  sm.Aq_k = Matrix::Zero(r, (n + l) * (kk + 1));
  sm.bounds.resize((n + l) * (kk + 1));
  sm.bounds.head(n).setConstant(delta_x0);
  sm.bounds.segment(n, n * kk).setConstant(eta_w);
  sm.bounds.tail(l * (kk + 1)).setConstant(eta_v);

  const auto b = detail::boundary_blocks(ed, dec);
  const Matrix X = ed.Bev1 + ed.Ae * ed.Bev2;
  const Index w0 = n;
  const Index v0 = n + n * kk;

  // Psi_i = C2 Abar Ae^i for i = 0..k-1.
  Matrix psi = dec.C2 * ed.Abar;
  for (int i = 0; i < k; ++i) {
    if (i == k - 1) sm.Aq_k.block(0, 0, r, n) = psi;
    if (i <= k - 2) {
      const Index j = k - 2 - i;  // w_j and v_j with lag i
      sm.Aq_k.block(0, w0 + n * j, r, n) = psi * ed.Bew;
      if (j == 0) {
        sm.Aq_k.block(0, v0, r, l) = psi * ed.Bev1;
      } else {
        sm.Aq_k.block(0, v0 + l * j, r, l) = psi * X;
      }
    }
    if (i + 1 < k) psi = psi * ed.Ae;
  }
  sm.Aq_k.block(0, w0 + n * (kk - 1), r, n) = b.w_last;
  sm.Aq_k.block(0, v0 + l * (kk - 1), r, l) = k == 1 ? b.v_first : b.v_prev;
  sm.Aq_k.block(0, v0 + l * kk, r, l) = b.v_last;
  return sm;
}

inline double eta_t(int k, Index n, Index l, double delta_x0, double eta_w,
                    double eta_v) {
  const double kd = static_cast<double>(k);
  return std::sqrt(static_cast<double>(n) * delta_x0 * delta_x0 +
                   kd * static_cast<double>(n) * eta_w * eta_w +
                   (kd + 1.0) * static_cast<double>(l) * eta_v * eta_v);
}

/// Upper bound on max ||A t|| over the box |t_j| <= bounds_j. Exact for a
/// single row and whenever the number of active columns fits the budget.
inline double threshold_inf(const StackedResidualModel& sm,
                            int enum_budget = 16) {
  const Matrix& A = sm.Aq_k;
  const Vector& b = sm.bounds;
  if (A.rows() == 0 || A.cols() == 0) return 0.0;
  if (A.rows() == 1) {
    return (A.row(0).transpose().cwiseAbs().array() * b.array()).sum();
  }

  std::vector<Vector> cols;
  for (Index j = 0; j < A.cols(); ++j) {
    if (b(j) > 0.0 && A.col(j).cwiseAbs().maxCoeff() > 0.0) {
      cols.push_back(A.col(j) * b(j));
    }
  }
  const int N = static_cast<int>(cols.size());
  if (N == 0) return 0.0;
  if (N <= enum_budget) {
    // Gray-code walk over the sign patterns; the first sign stays fixed
    // because v and -v have the same norm.
    Vector v = Vector::Zero(A.rows());
    for (const auto& c : cols) v += c;
    std::vector<int> sign(static_cast<std::size_t>(N), 1);
    double best = v.squaredNorm();
    const std::uint64_t total = std::uint64_t{1} << (N - 1);
    for (std::uint64_t g = 1; g < total; ++g) {
      const int bit = __builtin_ctzll(g) + 1;
      auto& s = sign[static_cast<std::size_t>(bit)];
      v -= 2.0 * s * cols[static_cast<std::size_t>(bit)];
      s = -s;
      best = std::max(best, v.squaredNorm());
    }
    return std::sqrt(best);
  }

  // Row-wise relaxation, taken in the left singular basis of A so the value
  // does not depend on how the residual channel was parametrized.
  Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU);
  const Vector rowsums = (svd.matrixU().transpose() * A).cwiseAbs() * b;
  return std::min(rowsums.norm(), svd.singularValues()(0) * b.norm());
}

/// Incremental evaluator of the triangle-inequality threshold. Keeps the
/// current Ae power chain and running sums so each step costs O(1) products.
class ThresholdTracker {
 public:
  ThresholdTracker() = default;
  ThresholdTracker(const ErrorDynamics& ed, const ModeDecomposition& dec,
                   double delta_x0, double eta_w, double eta_v)
      : ed_(&ed), delta_x0_(delta_x0), eta_w_(eta_w), eta_v_(eta_v) {
    const auto b = detail::boundary_blocks(ed, dec);
    n_w_last_ = norm2(b.w_last);
    n_v_first_ = norm2(b.v_first);
    n_v_prev_ = norm2(b.v_prev);
    n_v_last_ = norm2(b.v_last);
    X_ = ed.Bev1 + ed.Ae * ed.Bev2;
    psi_ = dec.C2 * ed.Abar;
  }

  /// delta^tri at step k; calls must use k = 1, 2, 3, ... in order.
  double next() {
    ++k_;
    // psi_ holds Psi_{k-1}; prev_bev1_ holds ||Psi_{k-2} Bev1||.
    double v_part = n_v_last_;
    if (k_ == 1) {
      v_part += n_v_first_;
    } else {
      v_part += n_v_prev_ + prev_bev1_ + sum_x_;
    }
    const double value = delta_x0_ * norm2(psi_) +
                         eta_w_ * (sum_w_ + n_w_last_) + eta_v_ * v_part;
    // Shift the chain: Psi_{k-1} contributes to the next step's sums.
    if (k_ >= 2) sum_x_ += prev_x_;
    sum_w_ += norm2(psi_ * ed_->Bew);
    prev_bev1_ = norm2(psi_ * ed_->Bev1);
    prev_x_ = norm2(psi_ * X_);
    psi_ = psi_ * ed_->Ae;
    return value;
  }

  int k() const { return k_; }

 private:
  const ErrorDynamics* ed_ = nullptr;
  double delta_x0_ = 0.0, eta_w_ = 0.0, eta_v_ = 0.0;
  double n_w_last_ = 0.0, n_v_first_ = 0.0, n_v_prev_ = 0.0, n_v_last_ = 0.0;
  Matrix X_;
  Matrix psi_;
  double sum_w_ = 0.0;  // sum_{i<=k-2} ||Psi_i Bew||
  double sum_x_ = 0.0;  // sum_{i<=k-3} ||Psi_i X||
  double prev_bev1_ = 0.0;
  double prev_x_ = 0.0;
  int k_ = 0;
};

/// delta^tri at step k, evaluated from scratch.
inline double threshold_tri(const ErrorDynamics& ed,
                            const ModeDecomposition& dec, int k, double eta_w,
                            double eta_v, double delta_x0) {
  if (k < 1) {
    throw Error(ErrorCode::kUnsupported, "triangle threshold needs k >= 1");
  }
  const auto b = detail::boundary_blocks(ed, dec);
  const Matrix X = ed.Bev1 + ed.Ae * ed.Bev2;
  double w_sum = norm2(b.w_last);
  double v_sum = norm2(b.v_last) + (k == 1 ? norm2(b.v_first) : norm2(b.v_prev));
  Matrix psi = dec.C2 * ed.Abar;
  for (int i = 0; i <= k - 2; ++i) {
    w_sum += norm2(psi * ed.Bew);
    v_sum += i == k - 2 ? norm2(psi * ed.Bev1) : norm2(psi * X);
    psi = psi * ed.Ae;
  }
  return delta_x0 * norm2(psi) + eta_w * w_sum + eta_v * v_sum;
}

/// Upper bound on lim_k delta^tri_k: exact partial sums of the two Ae power
/// series plus a geometric tail bound through the first contracting power
/// ||Ae^K|| < 1.
inline double tri_limit(const ErrorDynamics& ed, const ModeDecomposition& dec,
                        double eta_w, double eta_v, int max_power = 10000) {
  const Index n = ed.Ae.rows();
  const auto b = detail::boundary_blocks(ed, dec);
  const double boundary =
      eta_w * norm2(b.w_last) + eta_v * (norm2(b.v_prev) + norm2(b.v_last));
  if (eta_w == 0.0 && eta_v == 0.0) return 0.0;

  int K = 0;
  double theta_K = 0.0;
  Matrix pw = identity(n);
  for (int i = 1; i <= max_power; ++i) {
    pw = pw * ed.Ae;
    const double nk = norm2(pw);
    if (nk < 1.0) {
      K = i;
      theta_K = nk;
      break;
    }
  }
  if (K == 0) {
    std::ostringstream msg;
    msg << "no contracting power of Ae up to " << max_power
        << " (||Ae|| = " << ed.theta << ")";
    throw Error(ErrorCode::kDivergence, msg.str());
  }

  const Matrix X = ed.Bev1 + ed.Ae * ed.Bev2;
  const double nBew = norm2(ed.Bew);
  const double nX = norm2(X);
  // psi_norms[i] = ||Psi_i||, computed lazily.
  std::vector<double> psi_norms;
  Matrix psi = dec.C2 * ed.Abar;
  double partial = 0.0;
  double window = 0.0;  // sum_{i=N}^{N+K-1} ||Psi_i||
  auto advance = [&]() {
    psi_norms.push_back(norm2(psi));
    psi = psi * ed.Ae;
  };
  for (int i = 0; i < K; ++i) advance();
  for (int i = 0; i < K; ++i) window += psi_norms[static_cast<std::size_t>(i)];

  const int max_terms = 1000000;
  Matrix chain = dec.C2 * ed.Abar;
  for (int N = 0; N < max_terms; ++N) {
    const double tail =
        window * (eta_w * nBew + eta_v * nX) / (1.0 - theta_K);
    if (tail <= 1e-12 * std::max(partial + boundary, 1e-300) || tail == 0.0) {
      return boundary + partial + tail;
    }
    partial += eta_w * norm2(chain * ed.Bew) + eta_v * norm2(chain * X);
    chain = chain * ed.Ae;
    advance();
    window += psi_norms.back() - psi_norms[static_cast<std::size_t>(N)];
  }
  throw Error(ErrorCode::kDivergence, "tri_limit series did not settle");
}

inline bool eliminate(double r_norm, double delta_hat) {
  return r_norm > delta_hat;
}

struct ModeEstimate {
  int mode_id = 0;
  SetEstimate x;
  std::optional<SetEstimate> d;
};

struct GlobalEstimate {
  std::vector<int> active;
  std::vector<ModeEstimate> members;
};

inline GlobalEstimate fuse(const std::vector<int>& active,
                           const std::vector<ModeEstimate>& per_mode) {
  if (active.empty()) {
    throw Error(ErrorCode::kAllModesEliminated,
                "every mode hypothesis was eliminated");
  }
  GlobalEstimate g;
  g.active = active;
  for (int id : active) {
    for (const auto& est : per_mode) {
      if (est.mode_id == id) g.members.push_back(est);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Detectability analysis
// ---------------------------------------------------------------------------

struct PairRecord {
  int q = 0;
  int q_other = 0;
  bool dimension_matched = false;
  Matrix W;
  std::optional<double> sigma_min;
  std::optional<double> R_z;
  std::optional<double> threshold_ratio;
  std::optional<bool> condition_i;
  double subspace_distance = 0.0;
  bool condition_ii = false;
  std::string note;
};

struct DetectabilityReport {
  std::vector<PairRecord> pairs;
  bool condition_i_all = false;
  bool condition_ii_all = false;
  bool certified = false;
  std::optional<double> R_x;
  std::optional<double> R_y;
};

/// Mode-dependent quantities the analyzer needs for one mode.
struct AnalyzedMode {
  int id = 0;
  const ModeDecomposition* dec = nullptr;
  std::optional<double> tri_bar;  // absent when the limit diverges
};

inline PairRecord analyze_pair(const AnalyzedMode& a, const AnalyzedMode& b,
                               const SystemModel& model,
                               std::optional<double> R_x,
                               std::optional<double> R_y) {
  PairRecord rec;
  rec.q = a.id;
  rec.q_other = b.id;
  const auto& da = *a.dec;
  const auto& db = *b.dec;
  const Index ra = da.T2.rows();
  const Index rb = db.T2.rows();
  rec.dimension_matched = ra == rb;
  rec.subspace_distance =
      norm2(row_space_projector(da.T2) - row_space_projector(db.T2));
  rec.condition_ii = !rec.dimension_matched || rec.subspace_distance > 1e-8;
  if (!rec.dimension_matched) {
    rec.note = "residual dimensions differ";
    return rec;
  }
  const Index n = model.n();
  const Index l = model.l();
  const Index m = model.m();
  rec.W.resize(ra, n + l + 2 * ra + 2 * m);
  rec.W << da.C2 - db.C2, da.T2 - db.T2, -identity(ra), identity(ra), da.D2,
      -db.D2;
  rec.sigma_min = sigma_min(rec.W);
  if (R_x && R_y) {
    rec.R_z = *R_y * norm2(da.T2 - db.T2);
    if (a.tri_bar && b.tri_bar) {
      rec.threshold_ratio = (*a.tri_bar + *b.tri_bar + *rec.R_z) /
                            std::sqrt(*R_x * *R_x + model.eta_v * model.eta_v);
      rec.condition_i = *rec.sigma_min > *rec.threshold_ratio;
      rec.note = "condition (i) uses R_z = R_y*||T2^q - T2^q'||";
    } else {
      rec.condition_i = false;
      rec.note = "triangle-threshold limit diverges";
    }
  }
  return rec;
}

/// Ordered pairs q != q'. Certified when condition (i) holds for every pair
/// or condition (ii) holds for every pair.
inline DetectabilityReport detectability_report(
    const std::vector<AnalyzedMode>& modes, const SystemModel& model,
    std::optional<double> R_x = std::nullopt,
    std::optional<double> R_y = std::nullopt) {
  DetectabilityReport rep;
  rep.R_x = R_x;
  rep.R_y = R_y;
  bool all_i = R_x.has_value() && R_y.has_value();
  bool all_ii = true;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    for (std::size_t j = 0; j < modes.size(); ++j) {
      if (i == j) continue;
      auto rec = analyze_pair(modes[i], modes[j], model, R_x, R_y);
      all_i = all_i && rec.condition_i.value_or(false);
      all_ii = all_ii && rec.condition_ii;
      rep.pairs.push_back(std::move(rec));
    }
  }
  rep.condition_i_all = all_i;
  rep.condition_ii_all = all_ii;
  rep.certified = all_i || all_ii;
  return rep;
}

/// Stacked form of a (possibly false) mode's residual on data generated by
/// the true mode:
///   r^q_k = TT t_k + BB [u_k; ..; u_0] + DD [d_k; ..; d_0]
/// The true attack acts on observer q as additional process and measurement
/// noise, so TT is the mode's own stacked matrix, BB vanishes and DD is TT
/// composed with the attack-to-noise injection.
struct GeneralStacked {
  Matrix TT;
  Matrix BB;
  Matrix DD;
};

inline GeneralStacked stacked_residual_general(const ModeDesign& q,
                                               const ModeDesign& q_true,
                                               const SystemModel& model,
                                               int k) {
  if (q.dec.T2.rows() != q_true.dec.T2.rows()) {
    throw Error(ErrorCode::kUnsupported,
                "stacked form needs equal residual dimensions");
  }
  const Index n = model.n();
  const Index l = model.l();
  const Index m = model.m();
  const Index kk = k;
  const Index rho = q_true.mode.rho();
  GeneralStacked out;
  out.TT = build_stacked(q.ed, q.dec, k).Aq_k;
  out.BB = Matrix::Zero(out.TT.rows(), m * (kk + 1));
  Matrix Pi = Matrix::Zero((n + l) * (kk + 1), rho * (kk + 1));
  const Matrix& Gs = q_true.mode.Gq;
  const Matrix& Hs = q_true.mode.Hq;
  for (Index j = 0; j <= kk; ++j) {
    const Index col = rho * (kk - j);  // d_j sits at block k - j
    if (j < kk) Pi.block(n + n * j, col, n, rho) = Gs;
    Pi.block(n + n * kk + l * j, col, l, rho) = Hs;
  }
  out.DD = out.TT * Pi;
  return out;
}

}  // namespace smio
