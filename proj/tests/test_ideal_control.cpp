#include <gtest/gtest.h>

#include <random>

#include "bubbletrack/ideal_control.hpp"
#include "bubbletrack/numerics.hpp"
#include "bubbletrack/realization.hpp"
#include "test_support.hpp"

using namespace bubbletrack;
using bubbletrack::testing::error_kind;
using bubbletrack::testing::pi;

namespace {

const BoxDomain unit{Eigen::Vector3d(1, 1, 1), 1.0};

// A one-mode set with a prescribed frequency, for scalar oscillator oracles.
ModeSet scalar_mode(double omega) {
  ModeSet m;
  m.domain = unit;
  m.modes.push_back({{1, 1, 1}, omega * omega, omega});
  return m;
}

ModalTrajectory as_modal(const ReferenceTrajectory& r, const ModeSet& modes) {
  ModalTrajectory t{r.p, r.pd, Eigen::VectorXd(static_cast<Eigen::Index>(modes.size()))};
  for (size_t k = 0; k < modes.size(); ++k) t.omega_sq(static_cast<Eigen::Index>(k)) = modes.modes[k].omega * modes.modes[k].omega;
  return t;
}

double ideal_tracking_error(double dt) {
  const ModeSet modes = mode_set(unit, {{1, 1, 1}, {2, 1, 1}});
  const std::vector<Eigen::Vector3d> centers = {{0.31, 0.42, 0.57}, {0.66, 0.28, 0.39}};
  const CouplingMatrix C = coupling_matrix(modes, centers);
  const RightInverse L = right_inverse(C);
  const ReferenceTrajectory r = reference_trajectory_gen(modes, {1.0, -0.6}, 2.0, 4.0, dt, 0.5);
  const Signal q = ideal_source(r, L, modes, 1.0);
  const ModalTrajectory sim = integrate_modal(modes, C, q, 1.0);
  return tracking_error(sim, r) / energy_norm_sup(r, as_modal(r, modes).omega_sq);
}

}  // namespace

TEST(CouplingMatrix, MidpointFundamental) {
  const ModeSet ms = mode_set(unit, {{1, 1, 1}});
  const CouplingMatrix C = coupling_matrix(ms, {{0.5, 0.5, 0.5}});
  ASSERT_EQ(C.entries.rows(), 1);
  EXPECT_NEAR(C.entries(0, 0), 2.828427124746190, 1e-12);
}

TEST(CouplingMatrix, EntriesEqualModeEvaluations) {
  const ModeSet ms = mode_set(unit, {{1, 2, 1}, {3, 1, 2}});
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::vector<Eigen::Vector3d> centers(3);
  for (auto& c : centers) c = {u(rng), u(rng), u(rng)};
  const CouplingMatrix C = coupling_matrix(ms, centers);
  for (int k = 0; k < 2; ++k)
    for (int a = 0; a < 3; ++a) EXPECT_EQ(C.entries(k, a), eval_mode(unit, ms.modes[static_cast<size_t>(k)].index, centers[static_cast<size_t>(a)]));
}

TEST(CouplingMatrix, NodalCenterGivesZeroColumn) {
  const ModeSet ms = mode_set(unit, {{2, 1, 1}});
  const CouplingMatrix C = coupling_matrix(ms, {{0.5, 0.3, 0.3}});
  EXPECT_NEAR(C.entries(0, 0), 0.0, 1e-15);
  EXPECT_EQ(error_kind([&] { right_inverse(C); }), "RankDeficient");
}

TEST(RightInverse, DiagonalExample) {
  Eigen::MatrixXd C(2, 3);
  C << 1, 0, 0, 0, 2, 0;
  const RightInverse L = right_inverse(C);
  Eigen::MatrixXd want(3, 2);
  want << 1, 0, 0, 0.5, 0, 0;
  EXPECT_LT((L.entries - want).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((C * L.entries - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(RightInverse, DuplicatedRowIsRankDeficient) {
  Eigen::MatrixXd C(2, 3);
  C << 1, 2, 3, 1, 2, 3;
  EXPECT_EQ(error_kind([&] { right_inverse(C); }), "RankDeficient");
}

TEST(RightInverse, RandomFullRank) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  Eigen::MatrixXd C(3, 5);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) C(i, j) = g(rng);
  const RightInverse L = right_inverse(C);
  EXPECT_LT((C * L.entries - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
  // Least norm: L agrees with C^T (C C^T)^{-1}.
  const Eigen::MatrixXd ln = C.transpose() * (C * C.transpose()).inverse();
  EXPECT_LT((L.entries - ln).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RankProbe, SingleModeGeneric) {
  const ModeSet ms = mode_set(unit, {{1, 1, 1}});
  EXPECT_GE(rank_probe(ms, 1, 1000, 42), 0.99);
}

TEST(RankProbe, NodalPlaneForcesDegeneracy) {
  const ModeSet ms = mode_set(unit, {{2, 1, 1}});
  const Region plane{Eigen::Vector3d(0.5, 0.0, 0.0), Eigen::Vector3d(0.5, 1.0, 1.0)};
  EXPECT_EQ(rank_probe(ms, 1, 200, 42, 1e-8, plane), 0.0);
}

TEST(RankProbe, DegenerateFamily) {
  const ModeSet ms = mode_set(unit, {{2, 1, 1}, {1, 2, 1}, {1, 1, 2}});
  EXPECT_GE(rank_probe(ms, 4, 1000, 43), 0.99);
}

TEST(IdealSource, ZeroTrajectoryNeedsNoForcing) {
  const ModeSet ms = mode_set(unit, {{1, 1, 1}});
  const RightInverse L = right_inverse(coupling_matrix(ms, {{0.3, 0.4, 0.5}}));
  const ReferenceTrajectory r = reference_trajectory_gen(ms, {0.0}, 1.0, 2.0, 0.01);
  EXPECT_EQ(ideal_source(r, L, ms, 1.0).data.cwiseAbs().maxCoeff(), 0.0);
}

TEST(IdealSource, HomogeneousSolutionNeedsNoForcing) {
  const ModeSet ms = mode_set(unit, {{1, 1, 1}});
  const double w = ms.modes[0].omega;
  const RightInverse L = right_inverse(coupling_matrix(ms, {{0.3, 0.4, 0.5}}));
  const double dt = 1e-3;
  ReferenceTrajectory r{Signal(dt, 1000, 1), Signal(dt, 1000, 1), Signal(dt, 1000, 1), Signal(dt, 1000, 1)};
  for (Eigen::Index k = 0; k < 1000; ++k) {
    const double t = r.p.time(k);
    r.p.data(k, 0) = std::sin(w * t);
    r.pdd.data(k, 0) = -w * w * std::sin(w * t);
  }
  EXPECT_LT(ideal_source(r, L, ms, 1.0).data.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(IntegrateModal, ZeroForcing) {
  const ModeSet ms = mode_set(unit, {{1, 1, 1}});
  const Signal q(0.01, 100, 1);
  const ModalTrajectory t = integrate_modal(ms, coupling_matrix(ms, {{0.5, 0.5, 0.5}}), q, 1.0);
  EXPECT_EQ(t.p.data.cwiseAbs().maxCoeff(), 0.0);
}

TEST(IntegrateModal, ResonantSineClosedForm) {
  const ModeSet ms = scalar_mode(1.0);
  const double dt = 1e-3;
  Signal F(dt, 10001, 1);
  for (Eigen::Index k = 0; k < F.samples(); ++k) F.data(k, 0) = std::sin(F.time(k));
  const ModalTrajectory t = integrate_modal_forced(ms, F);
  for (Eigen::Index k = 0; k < F.samples(); k += 500) {
    const double s = F.time(k);
    EXPECT_NEAR(t.p.data(k, 0), 0.5 * (std::sin(s) - s * std::cos(s)), 1e-10);
    EXPECT_NEAR(t.pd.data(k, 0), 0.5 * s * std::sin(s), 1e-10);
  }
}

TEST(IntegrateModal, StepForcingClosedForm) {
  const ModeSet ms = scalar_mode(1.0);
  Signal F(1e-3, 5001, 1);
  F.data.setOnes();
  const ModalTrajectory t = integrate_modal_forced(ms, F);
  for (Eigen::Index k = 0; k < F.samples(); k += 250) EXPECT_NEAR(t.p.data(k, 0), 1.0 - std::cos(F.time(k)), 1e-11);
}

TEST(IntegrateModal, RejectsCoarseStep) {
  const ModeSet ms = scalar_mode(100.0);
  const Signal F(0.01, 10, 1);
  EXPECT_EQ(error_kind([&] { integrate_modal_forced(ms, F); }), "StepTooLarge");
}

TEST(TrackingError, IdenticalAndShifted) {
  const ModeSet ms = mode_set(unit, {{1, 1, 1}, {2, 1, 1}});
  const ReferenceTrajectory r = reference_trajectory_gen(ms, {1.0, 0.5}, 1.0, 2.0, 1e-3);
  ModalTrajectory sim = as_modal(r, ms);
  EXPECT_EQ(tracking_error(sim, r), 0.0);
  const double delta = 1e-3;
  sim.p.data.col(1).array() += delta;
  EXPECT_GE(tracking_error(sim, r), ms.modes[1].omega * delta * (1 - 1e-12));
}

TEST(IdealTracking, ExactToIntegratorTolerance) {
  const ModeSet ms = mode_set(unit, {{1, 1, 1}, {2, 1, 1}});
  const double dt = 2 * pi / (256 * ms.omega_max());
  const double e1 = ideal_tracking_error(dt);
  const double e2 = ideal_tracking_error(dt / 2);
  EXPECT_LT(e1, 1e-6);
  EXPECT_GE(std::log2(e1 / e2), 3.5);
}

TEST(EnergyBound, ZeroAndRandomForcings) {
  const ModeSet ms = mode_set(unit, {{1, 1, 1}, {2, 1, 1}, {1, 2, 1}});
  const std::vector<Eigen::Vector3d> centers = {{0.3, 0.4, 0.6}, {0.7, 0.35, 0.45}};
  const CouplingMatrix C = coupling_matrix(ms, centers);
  const double dt = 1e-3, T = 3.0;
  const auto n = static_cast<Eigen::Index>(std::llround(T / dt)) + 1;
  Signal q(dt, n, 2);
  EXPECT_EQ(energy_bound_check(integrate_modal(ms, C, q, 1.0), q, C.entries, 1.0, T), 0.0);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    // Random smooth combinations plus one narrow bump.
    for (Eigen::Index c = 0; c < 2; ++c) {
      const double a = g(rng), b = g(rng), f = 1.0 + 10.0 * std::abs(g(rng)), t0 = 0.2 + 2.5 * std::abs(std::sin(g(rng)));
      for (Eigen::Index k = 0; k < n; ++k) {
        const double t = k * dt;
        q.data(k, c) = a * std::sin(f * t) + b * std::exp(-std::pow((t - t0) / 0.01, 2));
      }
    }
    const double r = energy_bound_check(integrate_modal(ms, C, q, 1.0), q, C.entries, 1.0, T);
    EXPECT_GT(r, 0.0);
    worst = std::max(worst, r);
  }
  EXPECT_LE(worst, 1.05);
}
