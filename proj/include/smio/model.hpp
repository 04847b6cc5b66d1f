// Plant model, attack-location mode hypotheses and structural checks.
//
// The plant is the hidden-mode switched linear system
//
//   x_{k+1} = A x_k + B u_k + G^q d_k + w_k,   ||w_k||_2 <= eta_w
//   y_k     = C x_k + D u_k + H^q d_k + v_k,   ||v_k||_2 <= eta_v
//
// where the mode q selects which of the t_a vulnerable actuators (columns of
// G) and t_s vulnerable sensors (columns of H) carry the rho-sparse attack.
#pragma once

#include <algorithm>
#include <complex>
#include <sstream>
#include <string>
#include <vector>

#include "smio/linalg.hpp"

namespace smio {

struct SystemModel {
  Matrix A;  // n x n
  Matrix B;  // n x m
  Matrix C;  // l x n
  Matrix D;  // l x m
  Matrix G;  // n x t_a, vulnerable actuator directions
  Matrix H;  // l x t_s, vulnerable sensor directions
  double eta_w = 0.0;
  double eta_v = 0.0;
  double delta_x0 = 0.0;

  Index n() const { return A.rows(); }
  Index m() const { return B.cols(); }
  Index l() const { return C.rows(); }
  Index t_a() const { return G.cols(); }
  Index t_s() const { return H.cols(); }
};

struct Diagnostic {
  std::string field;
  std::string message;
};

/// Lists every violated dimension or sign invariant. Empty iff well-formed.
inline std::vector<Diagnostic> validate(const SystemModel& model) {
  std::vector<Diagnostic> out;
  const Index n = model.A.rows();
  const Index l = model.C.rows();
  const Index m = model.B.cols();
  auto expect = [&out](const char* field, const Matrix& mat, Index rows,
                       Index cols) {
    if (mat.rows() != rows || mat.cols() != cols) {
      std::ostringstream msg;
      msg << "dimension mismatch: expected " << rows << "x" << cols << ", got "
          << mat.rows() << "x" << mat.cols();
      out.push_back({field, msg.str()});
    }
  };
  if (n == 0) out.push_back({"A", "state dimension n must be positive"});
  if (model.A.rows() != model.A.cols()) {
    std::ostringstream msg;
    msg << "A must be square, got " << model.A.rows() << "x" << model.A.cols();
    out.push_back({"A", msg.str()});
  }
  if (l == 0) out.push_back({"C", "output dimension l must be positive"});
  expect("B", model.B, n, m);
  expect("C", model.C, l, n);
  expect("D", model.D, l, m);
  expect("G", model.G, n, model.G.cols());
  expect("H", model.H, l, model.H.cols());
  auto nonneg = [&out](const char* field, double value) {
    if (!(value >= 0.0) || !std::isfinite(value)) {
      out.push_back({field, "must be a finite nonnegative number"});
    }
  };
  nonneg("eta_w", model.eta_w);
  nonneg("eta_v", model.eta_v);
  nonneg("delta_x0", model.delta_x0);
  for (const auto* mat : {&model.A, &model.B, &model.C, &model.D, &model.G,
                          &model.H}) {
    if (!mat->allFinite()) {
      out.push_back({"matrices", "non-finite matrix entry"});
      break;
    }
  }
  return out;
}

/// One attack-location hypothesis. Channel indices are 1-based, matching the
/// usual "actuator 1, sensors 1,2,3" labelling. Columns of the rho-dimensional
/// unknown input are ordered: attacked actuators ascending, then attacked
/// sensors ascending.
struct ModeHypothesis {
  int id = 0;
  std::vector<int> actuator_set;
  std::vector<int> sensor_set;
  Matrix IG;  // t_a x rho selector
  Matrix IH;  // t_s x rho selector
  Matrix Gq;  // n x rho
  Matrix Hq;  // l x rho

  Index rho() const {
    return static_cast<Index>(actuator_set.size() + sensor_set.size());
  }

  std::string label() const {
    std::ostringstream os;
    auto list = [&os](const std::vector<int>& v) {
      for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    };
    if (actuator_set.empty() && sensor_set.empty()) return "no attack";
    if (!actuator_set.empty()) {
      os << (actuator_set.size() == 1 ? "actuator " : "actuators ");
      list(actuator_set);
    }
    if (!sensor_set.empty()) {
      if (!actuator_set.empty()) os << " & ";
      os << (sensor_set.size() == 1 ? "sensor " : "sensors ");
      list(sensor_set);
    }
    return os.str();
  }
};

inline ModeHypothesis make_mode(int id, std::vector<int> actuators,
                                std::vector<int> sensors, const Matrix& G,
                                const Matrix& H) {
  std::sort(actuators.begin(), actuators.end());
  std::sort(sensors.begin(), sensors.end());
  auto check = [](const std::vector<int>& set, Index limit, const char* what) {
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (set[i] < 1 || set[i] > limit) {
        throw Error(ErrorCode::kInvalidArgument,
                    std::string(what) + " index " + std::to_string(set[i]) +
                        " outside 1.." + std::to_string(limit));
      }
      if (i > 0 && set[i] == set[i - 1]) {
        throw Error(ErrorCode::kInvalidArgument,
                    std::string("duplicate ") + what + " index " +
                        std::to_string(set[i]));
      }
    }
  };
  check(actuators, G.cols(), "actuator");
  check(sensors, H.cols(), "sensor");

  ModeHypothesis mode;
  mode.id = id;
  mode.actuator_set = std::move(actuators);
  mode.sensor_set = std::move(sensors);
  const Index rho = mode.rho();
  mode.IG = Matrix::Zero(G.cols(), rho);
  mode.IH = Matrix::Zero(H.cols(), rho);
  Index col = 0;
  for (int a : mode.actuator_set) mode.IG(a - 1, col++) = 1.0;
  for (int s : mode.sensor_set) mode.IH(s - 1, col++) = 1.0;
  mode.Gq = G * mode.IG;
  mode.Hq = H * mode.IH;
  return mode;
}

/// All C(t_a + t_s, rho) attack-location hypotheses, lexicographic on the
/// channel list (actuators 1..t_a, then sensors 1..t_s). Ids start at 1.
inline std::vector<ModeHypothesis> enumerate_modes(int t_a, int t_s, int rho,
                                                   const Matrix& G,
                                                   const Matrix& H) {
  if (t_a < 0 || t_s < 0 || rho < 0) {
    throw Error(ErrorCode::kInvalidSparsity, "negative channel count or rho");
  }
  if (rho > t_a + t_s) {
    throw Error(ErrorCode::kInvalidSparsity,
                "rho = " + std::to_string(rho) + " exceeds t_a + t_s = " +
                    std::to_string(t_a + t_s));
  }
  if (G.cols() != t_a || H.cols() != t_s) {
    throw Error(ErrorCode::kInvalidArgument,
                "G/H column counts do not match t_a/t_s");
  }
  const int channels = t_a + t_s;
  std::vector<ModeHypothesis> modes;
  std::vector<int> pick(static_cast<std::size_t>(rho));
  for (int i = 0; i < rho; ++i) pick[static_cast<std::size_t>(i)] = i;
  int id = 1;
  while (true) {
    std::vector<int> acts;
    std::vector<int> sens;
    for (int c : pick) {
      if (c < t_a) {
        acts.push_back(c + 1);
      } else {
        sens.push_back(c - t_a + 1);
      }
    }
    modes.push_back(make_mode(id++, acts, sens, G, H));
    // Next combination in lexicographic order.
    int i = rho - 1;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] == channels - rho + i) --i;
    if (i < 0) break;
    ++pick[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < rho; ++j) {
      pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
  return modes;
}

// ---------------------------------------------------------------------------
// Invariant zeros / strong detectability
// ---------------------------------------------------------------------------

struct ZeroAnalysis {
  bool full_normal_rank = false;
  std::vector<std::complex<double>> zeros;
  bool strongly_detectable = false;
  std::string diagnostic;
};

/// Invariant zeros of the Rosenbrock pencil [zI - A, -Gq; C, Hq].
///
/// Staircase reduction: row-compress the feedthrough, column-compress the
/// part of C it leaves uncovered, and deflate the states that this part pins
/// down. Each deflation is a unimodular transformation, so the finite zeros
/// are preserved. The loop ends with a feedthrough of full row rank, where the
/// zeros are the eigenvalues of A - Gq Hq^{-1} C (square case).
inline ZeroAnalysis invariant_zeros(const Matrix& A, const Matrix& Gq,
                                    const Matrix& C, const Matrix& Hq) {
  ZeroAnalysis result;
  const Index m = Gq.cols();
  Matrix a = A;
  Matrix b = Gq;
  Matrix c = C;
  Matrix d = Hq;

  double scale = 1.0;
  for (const auto* mat : {&A, &Gq, &C, &Hq}) {
    if (mat->size() > 0) scale = std::max(scale, mat->norm());
  }
  const double tol = 1e-10 * scale;

  while (true) {
    const Index p = c.rows();
    const Index nn = a.rows();
    if (p == 0) break;

    Matrix U = identity(p);
    Index r = 0;
    if (m > 0) {
      Eigen::JacobiSVD<Matrix> svd(d, Eigen::ComputeFullU);
      r = rank_with_cutoff(svd.singularValues(), tol);
      U = svd.matrixU();
    }
    if (r == p) break;

    const Matrix u_range = U.leftCols(r);
    const Matrix u_perp = U.rightCols(p - r);
    const Matrix c_free = u_perp.transpose() * c;  // rows with zero feedthrough
    const Matrix c_fed = u_range.transpose() * c;
    const Matrix d_fed = u_range.transpose() * d;

    if (nn == 0) {
      c = c_fed;
      d = d_fed;
      continue;
    }
    Eigen::JacobiSVD<Matrix> csvd(c_free, Eigen::ComputeFullV);
    const Index rc = rank_with_cutoff(csvd.singularValues(), tol);
    if (rc == 0) {
      c = c_fed;
      d = d_fed;
      continue;
    }
    const Matrix& Q = csvd.matrixV();
    Matrix V(nn, nn);
    V << Q.rightCols(nn - rc), Q.leftCols(rc);
    const Matrix at = V.transpose() * a * V;
    const Matrix bt = V.transpose() * b;
    const Matrix ct = c_fed * V;
    const Index keep = nn - rc;

    Matrix a_next = at.topLeftCorner(keep, keep);
    Matrix b_next = bt.topRows(keep);
    Matrix c_next = vstack(at.bottomLeftCorner(rc, keep), ct.leftCols(keep));
    Matrix d_next = vstack(bt.bottomRows(rc), d_fed);
    a = std::move(a_next);
    b = std::move(b_next);
    c = std::move(c_next);
    d = std::move(d_next);
  }

  const Index p = c.rows();
  if (p < m) {
    result.full_normal_rank = false;
    result.diagnostic =
        "pencil is column-rank deficient for every z: the unknown input is "
        "not reconstructible from the outputs";
    return result;
  }
  result.full_normal_rank = true;
  if (a.rows() > 0) {
    Matrix reduced = a;
    if (m > 0) {
      reduced = a - b * d.fullPivLu().solve(c);
    }
    Eigen::EigenSolver<Matrix> es(reduced, false);
    for (Index i = 0; i < es.eigenvalues().size(); ++i) {
      result.zeros.push_back(es.eigenvalues()(i));
    }
  }
  result.strongly_detectable = true;
  for (const auto& z : result.zeros) {
    if (!(std::abs(z) < 1.0)) {
      result.strongly_detectable = false;
      std::ostringstream msg;
      msg << "invariant zero " << z.real() << (z.imag() < 0 ? "" : "+")
          << z.imag() << "i on or outside the unit circle";
      result.diagnostic = msg.str();
      break;
    }
  }
  return result;
}

/// True iff (A, Gq, C, Hq) is strongly detectable: the Rosenbrock pencil has
/// full column rank n + rho and all invariant zeros lie strictly inside the
/// unit circle.
inline bool check_strong_detectability(const Matrix& A, const Matrix& Gq,
                                       const Matrix& C, const Matrix& Hq) {
  return invariant_zeros(A, Gq, C, Hq).strongly_detectable;
}

/// Hypothesised true-mode attack: one rho-vector per time step.
struct AttackSignal {
  int mode_id = 0;
  std::vector<Vector> values;
};

/// The five-state benchmark plant with one vulnerable actuator and four
/// vulnerable sensors.
inline SystemModel benchmark_model() {
  SystemModel model;
  model.A.resize(5, 5);
  // clang-format off
  model.A << 0.5, 2.0, 0.0, 0.0, 0.0,
             0.0, 0.2, 1.0, 0.0, 1.0,
             0.0, 0.0, 0.3, 0.0, 1.0,
             0.0, 0.0, 0.0, 0.7, 1.0,
             0.0, 0.0, 0.0, 0.0, 0.1;
  // clang-format on
  model.B = Matrix::Zero(5, 1);
  model.C = identity(5);
  model.D = Matrix::Zero(5, 1);
  model.G.resize(5, 1);
  model.G << 1.0, 0.1, 0.1, 1.0, 0.0;
  model.H = Matrix::Zero(5, 4);
  model.H.topRows(4) = identity(4);
  model.eta_w = 0.02;
  model.eta_v = 1e-4;
  model.delta_x0 = 0.5;
  return model;
}

}  // namespace smio
