#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"

namespace smio {
namespace {

SystemModel small_model(const Matrix& A, const Matrix& C, const Matrix& G,
                        const Matrix& H) {
  SystemModel M;
  M.A = A;
  M.C = C;
  M.B = Matrix::Zero(A.rows(), 0);
  M.D = Matrix::Zero(C.rows(), 0);
  M.G = G;
  M.H = H;
  return M;
}

TEST(DecomposeMode, AxisAlignedColumn) {
  const Matrix H = (Matrix(2, 1) << 1.0, 0.0).finished();
  const auto M = small_model(Matrix::Zero(2, 2), identity(2), Matrix::Zero(2, 0), H);
  const auto q = make_mode(1, {}, {1}, M.G, M.H);
  const auto dec = decompose_mode(M, q);
  EXPECT_EQ(dec.p_H, 1);
  EXPECT_NEAR(dec.Sigma(0, 0), 1.0, 1e-15);
  EXPECT_TRUE(dec.T1.isApprox((Matrix(1, 2) << 1, 0).finished()));
  EXPECT_TRUE(dec.T2.isApprox((Matrix(1, 2) << 0, 1).finished()));
}

TEST(DecomposeMode, ZeroFeedthroughKeepsWholeOutput) {
  std::mt19937_64 rng(2);
  const Matrix G = testing::random_matrix(3, 1, rng);
  const auto M = small_model(Matrix::Zero(3, 3), testing::random_matrix(2, 3, rng),
                             G, Matrix::Zero(2, 0));
  const auto q = make_mode(1, {1}, {}, M.G, M.H);
  const auto dec = decompose_mode(M, q);
  EXPECT_EQ(dec.p_H, 0);
  EXPECT_EQ(dec.T1.rows(), 0);
  EXPECT_TRUE(dec.T2.isApprox(identity(2)));
  EXPECT_TRUE(dec.V2.isApprox(identity(1)));
  EXPECT_TRUE(dec.G2.isApprox(G));
}

TEST(DecomposeMode, BenchmarkModeFiveResidualIsFifthSensor) {
  const auto M = benchmark_model();
  const auto modes = enumerate_modes(1, 4, 4, M.G, M.H);
  const auto dec = decompose_mode(M, modes[4]);
  EXPECT_EQ(dec.p_H, 4);
  ASSERT_EQ(dec.T2.rows(), 1);
  EXPECT_TRUE(dec.T2.isApprox((Matrix(1, 5) << 0, 0, 0, 0, 1).finished()));
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(decompose_mode(M, modes[i]).p_H, 3);
  }
}

TEST(DecomposeMode, AmbiguousRankIsReported) {
  Matrix H = Matrix::Zero(2, 2);
  H(0, 0) = 1.0;
  H(1, 1) = 1e-14;
  const auto M = small_model(Matrix::Zero(2, 2), identity(2), Matrix::Zero(2, 0), H);
  const auto q = make_mode(1, {}, {1, 2}, M.G, M.H);
  try {
    decompose_mode(M, q);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRankAmbiguity);
    EXPECT_NE(std::string(e.what()).find("1e-14"), std::string::npos);
  }
}

void expect_decomposition_invariants(const SystemModel& M,
                                     const ModeHypothesis& q,
                                     const ModeDecomposition& dec) {
  const Index l = M.l();
  const Matrix T = vstack(dec.T1, dec.T2);
  EXPECT_LE((T * T.transpose() - identity(l)).norm(), 1e-10);
  const Matrix V = hstack(dec.V1, dec.V2);
  EXPECT_LE((V.transpose() * V - identity(q.rho())).norm(), 1e-10);
  EXPECT_LE(norm2(dec.T2 * q.Hq), 1e-10 * std::max(1.0, norm2(q.Hq)));
  EXPECT_LE((dec.T1 * q.Hq * dec.V1 - dec.Sigma).norm(), 1e-10);
  EXPECT_LE(norm2(dec.T1 * q.Hq * dec.V2), 1e-10);
  EXPECT_TRUE((dec.C1 - dec.T1 * M.C).isZero(1e-14));
  EXPECT_TRUE((dec.C2 - dec.T2 * M.C).isZero(1e-14));
  EXPECT_TRUE((dec.G1 - q.Gq * dec.V1).isZero(1e-14));
  EXPECT_TRUE((dec.G2 - q.Gq * dec.V2).isZero(1e-14));
}

TEST(DecomposeMode, InvariantsOnBenchmarkAndRandomModes) {
  const auto M = benchmark_model();
  for (const auto& q : enumerate_modes(1, 4, 4, M.G, M.H)) {
    expect_decomposition_invariants(M, q, decompose_mode(M, q));
  }
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = testing::random_dims(rng);
    const auto rs = testing::random_system(rng, d.n, d.l, d.m, d.t_a, d.t_s, d.rho);
    for (std::size_t i = 0; i < rs.modes.size(); ++i) {
      expect_decomposition_invariants(rs.model, rs.modes[i], rs.designs[i].dec);
    }
  }
}

TEST(SynthesizeGains, DiagonalSigmaInverse) {
  Matrix H = Matrix::Zero(3, 2);
  H(0, 0) = 2.0;
  H(1, 1) = 0.5;
  const auto M = small_model(0.5 * identity(3), identity(3), Matrix::Zero(3, 0), H);
  const auto q = make_mode(1, {}, {1, 2}, M.G, M.H);
  const auto dec = decompose_mode(M, q);
  const auto g = synthesize_gains(dec, M);
  EXPECT_TRUE(g.M1.isApprox((Matrix(2, 2) << 0.5, 0, 0, 2).finished()));
}

TEST(SynthesizeGains, ScalarOverrideAcceptedAndRejected) {
  const auto M = small_model(Matrix::Constant(1, 1, 0.5), identity(1),
                             Matrix::Zero(1, 0), Matrix::Zero(1, 0));
  const auto q = make_mode(1, {}, {}, M.G, M.H);
  const auto dec = decompose_mode(M, q);
  const auto g = synthesize_gains(dec, M, Matrix::Constant(1, 1, 0.5));
  const auto ed = error_dynamics(dec, g, M);
  EXPECT_NEAR(ed.Ae(0, 0), 0.25, 1e-15);
  try {
    synthesize_gains(dec, M, Matrix::Constant(1, 1, 3.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnstableOverride);
    // (1 - 3) * 0.5 = -1: on the unit circle, so rejected.
    EXPECT_NE(std::string(e.what()).find("radius 1"), std::string::npos);
  }
  EXPECT_THROW(synthesize_gains(dec, M, Matrix::Zero(2, 1)), Error);
}

TEST(SynthesizeGains, RankDeficientC2G2IsInfeasible) {
  const Matrix C = (Matrix(1, 2) << 1.0, 0.0).finished();
  const Matrix G = (Matrix(2, 1) << 0.0, 1.0).finished();
  const auto M = small_model(0.5 * identity(2), C, G, Matrix::Zero(1, 0));
  const auto q = make_mode(1, {1}, {}, M.G, M.H);
  const auto dec = decompose_mode(M, q);
  try {
    synthesize_gains(dec, M);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInfeasible);
  }
}

TEST(SynthesizeGains, UndetectablePairFailsSynthesis) {
  // Unstable, unmeasured second state: no gain can stabilize it.
  Matrix A = Matrix::Zero(2, 2);
  A(0, 0) = 0.5;
  A(1, 1) = 1.5;
  const Matrix C = (Matrix(1, 2) << 1.0, 0.0).finished();
  const auto M = small_model(A, C, Matrix::Zero(2, 0), Matrix::Zero(1, 0));
  const auto q = make_mode(1, {}, {}, M.G, M.H);
  const auto dec = decompose_mode(M, q);
  try {
    synthesize_gains(dec, M);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSynthesisFailure);
  }
}

TEST(SynthesizeGains, BenchmarkConditionsAndStability) {
  const auto M = benchmark_model();
  for (const auto& q : enumerate_modes(1, 4, 4, M.G, M.H)) {
    const auto dec = decompose_mode(M, q);
    const auto g = synthesize_gains(dec, M);
    const auto ed = error_dynamics(dec, g, M);
    EXPECT_LE((g.M1 * dec.Sigma - identity(dec.p_H)).norm(), 1e-10);
    EXPECT_LE((g.M2 * dec.C2 * dec.G2 - identity(dec.G2.cols())).norm(), 1e-10);
    EXPECT_LT(spectral_radius(ed.Ae), 1.0);
    EXPECT_GE(ed.theta, spectral_radius(ed.Ae) - 1e-12);
  }
}

TEST(SynthesizeGains, RiccatiGainSolvesFilterEquation) {
  std::mt19937_64 rng(21);
  const Matrix A = testing::scaled_to_radius(testing::random_matrix(3, 3, rng), 1.3);
  const Matrix C = testing::random_matrix(2, 3, rng);
  const Matrix P = solve_dare(A.transpose(), C.transpose(), identity(3), identity(2));
  const Matrix S = C * P * C.transpose() + identity(2);
  const Matrix rhs = A * P * A.transpose() -
                     A * P * C.transpose() * S.inverse() * C * P * A.transpose() +
                     identity(3);
  EXPECT_LE((P - rhs).norm(), 1e-9 * P.norm());
}

TEST(ErrorDynamics, NoCorrectionTerms) {
  std::mt19937_64 rng(3);
  // p_H = rho: G2 empty; Ltilde forced to zero.
  Matrix H = Matrix::Zero(2, 1);
  H(0, 0) = 1.0;
  const Matrix G = testing::random_matrix(2, 0, rng);
  auto M = small_model(0.3 * identity(2), identity(2), G, H);
  const auto q = make_mode(1, {}, {1}, M.G, M.H);
  const auto dec = decompose_mode(M, q);
  ASSERT_EQ(dec.G2.cols(), 0);
  const auto g = synthesize_gains(dec, M, Matrix::Zero(2, 1));
  const auto ed = error_dynamics(dec, g, M);
  EXPECT_TRUE(ed.Ae.isApprox(M.A - dec.G1 * g.M1 * dec.C1));
  EXPECT_TRUE(ed.Ae.isApprox(ed.Abar));
}

TEST(ErrorDynamics, NoUnknownInput) {
  const auto M = small_model(0.3 * identity(2), identity(2), Matrix::Zero(2, 0),
                             Matrix::Zero(2, 0));
  const auto q = make_mode(1, {}, {}, M.G, M.H);
  const auto dec = decompose_mode(M, q);
  const auto g = synthesize_gains(dec, M);
  EXPECT_EQ(g.M2.rows(), 0);
  const auto ed = error_dynamics(dec, g, M);
  EXPECT_TRUE(ed.Abar.isApprox(M.A));
  EXPECT_TRUE(ed.Bew_star.isApprox(identity(2)));
}

TEST(ErrorDynamics, RebuildFromDefinitions) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rs = testing::random_system(rng, 3, 3, 1, 1, 2, 2);
    for (const auto& d : rs.designs) {
      const auto& dec = d.dec;
      const auto& g = d.gains;
      const auto& A = rs.model.A;
      const Matrix I = identity(3);
      const Matrix Abar = (I - dec.G2 * g.M2 * dec.C2) * (A - dec.G1 * g.M1 * dec.C1);
      const Matrix Ae = (I - g.Ltilde * dec.C2) * Abar;
      const Matrix Bew_s = I - dec.G2 * g.M2 * dec.C2;
      const Matrix Bev1_s = -(I - dec.G2 * g.M2 * dec.C2) * (dec.G1 * g.M1 * dec.T1);
      const Matrix Bev2_s = -dec.G2 * g.M2 * dec.T2;
      const Matrix corr = I - g.Ltilde * dec.C2;
      const auto& ed = d.ed;
      EXPECT_LE((ed.Abar - Abar).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LE((ed.Ae - Ae).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LE((ed.Bew_star - Bew_s).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LE((ed.Bev1_star - Bev1_s).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LE((ed.Bev2_star - Bev2_s).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LE((ed.Bew - corr * Bew_s).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LE((ed.Bev1 - corr * Bev1_s).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LE((ed.Bev2 - (corr * Bev2_s - g.Ltilde * dec.T2)).cwiseAbs().maxCoeff(),
                1e-12);
      EXPECT_NEAR(ed.theta, norm2(Ae), 1e-12);
      EXPECT_GE(ed.theta + 1e-12, spectral_radius(ed.Ae));
    }
  }
}

}  // namespace
}  // namespace smio
