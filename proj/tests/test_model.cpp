#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"

namespace smio {
namespace {

long binomial(int n, int k) {
  long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

TEST(EnumerateModes, BenchmarkHasFiveModesInChannelOrder) {
  const auto M = benchmark_model();
  const auto modes = enumerate_modes(1, 4, 4, M.G, M.H);
  ASSERT_EQ(modes.size(), 5u);
  const std::vector<std::vector<int>> sensors = {
      {1, 2, 3}, {1, 2, 4}, {1, 3, 4}, {2, 3, 4}, {1, 2, 3, 4}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(modes[i].actuator_set, std::vector<int>{1});
    EXPECT_EQ(modes[i].sensor_set, sensors[i]);
  }
  EXPECT_TRUE(modes[4].actuator_set.empty());
  EXPECT_EQ(modes[4].sensor_set, sensors[4]);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(modes[i].id, int(i) + 1);
}

TEST(EnumerateModes, RhoZeroGivesOneEmptyMode) {
  std::mt19937_64 rng(3);
  const Matrix G = testing::random_matrix(3, 2, rng);
  const Matrix H = testing::random_matrix(2, 2, rng);
  const auto modes = enumerate_modes(2, 2, 0, G, H);
  ASSERT_EQ(modes.size(), 1u);
  EXPECT_EQ(modes[0].rho(), 0);
  EXPECT_EQ(modes[0].Gq.cols(), 0);
  EXPECT_EQ(modes[0].Hq.cols(), 0);
  EXPECT_EQ(modes[0].Gq.rows(), 3);
}

TEST(EnumerateModes, FourChannelsChooseTwo) {
  std::mt19937_64 rng(4);
  const auto modes = enumerate_modes(2, 2, 2, testing::random_matrix(3, 2, rng),
                                     testing::random_matrix(2, 2, rng));
  EXPECT_EQ(modes.size(), 6u);
}

TEST(EnumerateModes, RhoTooLargeIsInvalidSparsity) {
  try {
    enumerate_modes(1, 1, 3, Matrix::Zero(2, 1), Matrix::Zero(2, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidSparsity);
  }
}

TEST(EnumerateModes, ExhaustiveCountsAndSelectors) {
  std::mt19937_64 rng(5);
  for (int t_a = 0; t_a <= 4; ++t_a) {
    for (int t_s = 0; t_a + t_s <= 8; ++t_s) {
      const Matrix G = testing::random_matrix(3, t_a, rng);
      const Matrix H = testing::random_matrix(4, t_s, rng);
      for (int rho = 0; rho <= t_a + t_s; ++rho) {
        const auto modes = enumerate_modes(t_a, t_s, rho, G, H);
        ASSERT_EQ(static_cast<long>(modes.size()), binomial(t_a + t_s, rho));
        for (const auto& q : modes) {
          const Matrix S = vstack(q.IG, q.IH);
          ASSERT_EQ(S.cols(), rho);
          for (Index c = 0; c < rho; ++c) {
            EXPECT_DOUBLE_EQ(S.col(c).sum(), 1.0);
            EXPECT_DOUBLE_EQ(S.col(c).cwiseAbs().maxCoeff(), 1.0);
            for (Index c2 = c + 1; c2 < rho; ++c2) {
              EXPECT_DOUBLE_EQ(S.col(c).dot(S.col(c2)), 0.0);
            }
          }
          EXPECT_EQ((q.Gq - G * q.IG).norm(), 0.0);
          EXPECT_EQ((q.Hq - H * q.IH).norm(), 0.0);
          EXPECT_EQ(static_cast<int>(q.actuator_set.size() + q.sensor_set.size()),
                    rho);
        }
      }
    }
  }
}

TEST(MakeMode, OrdersActuatorsBeforeSensors) {
  const Matrix G = (Matrix(2, 2) << 1, 2, 3, 4).finished();
  const Matrix H = (Matrix(2, 2) << 5, 6, 7, 8).finished();
  const auto q = make_mode(1, {2}, {1}, G, H);
  EXPECT_EQ(q.Gq.col(0), G.col(1));
  EXPECT_EQ(q.Gq.col(1), Vector::Zero(2));
  EXPECT_EQ(q.Hq.col(0), Vector::Zero(2));
  EXPECT_EQ(q.Hq.col(1), H.col(0));
  EXPECT_THROW(make_mode(2, {1, 1}, {}, G, H), Error);
  EXPECT_THROW(make_mode(2, {3}, {}, G, H), Error);
}

TEST(StrongDetectability, BenchmarkModesAllPass) {
  const auto M = benchmark_model();
  for (const auto& q : enumerate_modes(1, 4, 4, M.G, M.H)) {
    const auto z = invariant_zeros(M.A, q.Gq, M.C, q.Hq);
    EXPECT_TRUE(z.full_normal_rank) << q.label();
    EXPECT_TRUE(z.strongly_detectable) << q.label() << " " << z.diagnostic;
  }
}

TEST(StrongDetectability, DeadbeatWithoutUnknownInput) {
  const Matrix A = Matrix::Zero(3, 3);
  EXPECT_TRUE(check_strong_detectability(A, Matrix::Zero(3, 0), identity(3),
                                         Matrix::Zero(3, 0)));
}

TEST(StrongDetectability, UnobservableUnstableScalar) {
  const Matrix A = Matrix::Constant(1, 1, 2.0);
  EXPECT_FALSE(check_strong_detectability(A, Matrix::Zero(1, 0),
                                          Matrix::Zero(1, 1),
                                          Matrix::Zero(1, 0)));
  const auto z = invariant_zeros(A, Matrix::Zero(1, 0), Matrix::Zero(1, 1),
                                 Matrix::Zero(1, 0));
  ASSERT_EQ(z.zeros.size(), 1u);
  EXPECT_NEAR(z.zeros[0].real(), 2.0, 1e-12);
  EXPECT_FALSE(z.diagnostic.empty());
}

TEST(StrongDetectability, ZeroInputColumnIsRankDeficient) {
  const auto z = invariant_zeros(Matrix::Zero(2, 2), Matrix::Zero(2, 1),
                                 identity(2), Matrix::Zero(2, 1));
  EXPECT_FALSE(z.full_normal_rank);
  EXPECT_FALSE(z.strongly_detectable);
}

TEST(StrongDetectability, KnownZeroOfSisoSystem) {
  // G(z) = (z - 0.5) / ((z - 0.2)(z - 0.3)) realized in controllable form.
  Matrix A(2, 2);
  A << 0.5, -0.06, 1.0, 0.0;
  Matrix B(2, 1);
  B << 1.0, 0.0;
  Matrix C(1, 2);
  C << 1.0, -0.5;
  const auto z = invariant_zeros(A, B, C, Matrix::Zero(1, 1));
  ASSERT_EQ(z.zeros.size(), 1u);
  EXPECT_NEAR(z.zeros[0].real(), 0.5, 1e-10);
  EXPECT_TRUE(z.strongly_detectable);
  C << 1.0, -1.5;
  EXPECT_FALSE(check_strong_detectability(A, B, C, Matrix::Zero(1, 1)));
}

TEST(StrongDetectability, AgreesWithBruteForceZeroLocation) {
  std::mt19937_64 rng(11);
  int compared = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const Index n = 2 + trial % 2;
    const Index l = std::uniform_int_distribution<int>(1, 3)(rng);
    const Index rho = std::uniform_int_distribution<int>(0, int(l))(rng);
    const double radius = std::uniform_real_distribution<double>(0.3, 1.6)(rng);
    const Matrix A = testing::scaled_to_radius(testing::random_matrix(n, n, rng), radius);
    const Matrix G = testing::random_matrix(n, rho, rng);
    Matrix C = testing::random_matrix(l, n, rng);
    Matrix H = testing::random_matrix(l, rho, rng);
    // Make some feedthroughs rank deficient so the staircase has work to do.
    if (trial % 3 == 0 && rho > 0) H.col(0).setZero();
    if (trial % 5 == 0 && l > 1) C.row(0).setZero();
    const auto brute = testing::brute_force_zeros(A, G, C, H, rng);
    const auto z = invariant_zeros(A, G, C, H);
    ASSERT_EQ(z.full_normal_rank, brute.full_normal_rank) << "trial " << trial;
    if (!brute.full_normal_rank) continue;
    bool near_circle = false;
    bool brute_ok = true;
    for (const auto& zz : brute.zeros) {
      if (std::abs(std::abs(zz) - 1.0) < 1e-3) near_circle = true;
      if (std::abs(zz) >= 1.0) brute_ok = false;
    }
    for (const auto& zz : z.zeros) {
      if (std::abs(std::abs(zz) - 1.0) < 1e-3) near_circle = true;
    }
    if (near_circle) continue;
    EXPECT_EQ(z.strongly_detectable, brute_ok) << "trial " << trial;
    // Every reported zero drops the rank of the Rosenbrock matrix.
    for (const auto& zz : z.zeros) {
      EXPECT_LT(testing::rel_sigma_min(testing::rosenbrock(A, G, C, H, zz)), 1e-6);
    }
    EXPECT_EQ(z.zeros.size(), brute.zeros.size()) << "trial " << trial;
    ++compared;
  }
  EXPECT_GT(compared, 200);
}

TEST(Validate, BenchmarkIsClean) {
  EXPECT_TRUE(validate(benchmark_model()).empty());
}

TEST(Validate, WrongBRowsGivesOneEntry) {
  auto M = benchmark_model();
  M.B = Matrix::Zero(4, 1);
  const auto d = validate(M);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].field, "B");
}

TEST(Validate, NegativeEtaGivesOneEntry) {
  auto M = benchmark_model();
  M.eta_w = -1.0;
  const auto d = validate(M);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].field, "eta_w");
}

}  // namespace
}  // namespace smio
