#include <gtest/gtest.h>

#include "bubbletrack/transfer.hpp"
#include "test_support.hpp"

using namespace bubbletrack;
using bubbletrack::testing::chain;
using bubbletrack::testing::equidistant;
using bubbletrack::testing::error_kind;
using bubbletrack::testing::pi;
using bubbletrack::testing::single_cluster;

namespace {

constexpr double w0 = 2 * pi;
const cplx I1(0.0, 1.0);

BubbleEnsemble cluster(int m, double eps, double dtilde = 0.01, double cap = 1e-3, double p = 0.5) {
  return single_cluster(equidistant(m, dtilde * std::pow(eps, p)), w0, cap, eps, p);
}

// Pencil written out entry by entry.
Eigen::MatrixXcd pencil_oracle(const BubbleEnsemble& e, double c0, cplx s) {
  const auto M = static_cast<Eigen::Index>(e.size());
  Eigen::MatrixXcd P(M, M);
  for (Eigen::Index i = 0; i < M; ++i)
    for (Eigen::Index j = 0; j < M; ++j) {
      if (i == j) {
        P(i, j) = s * s / (e.omega_m[i] * e.omega_m[i]) + 1.0;
      } else {
        const double d = (e.positions[i] - e.positions[j]).norm();
        P(i, j) = s * s * e.eps * e.capacitance[j] * std::exp(-s * d / c0) / (4 * pi * d);
      }
    }
  return P;
}

}  // namespace

TEST(Pencil, SingleBubble) {
  const SMatrixEvaluator ev(cluster(1, 0.01), 1.0);
  const cplx s(0.3, 2.0);
  EXPECT_LT(std::abs(ev.pencil(s)(0, 0) - (s * s / (w0 * w0) + 1.0)), 1e-15);
  EXPECT_LT(std::abs(ev.det(I1 * w0)), 1e-14);
}

TEST(Pencil, IdentityAtZeroAndConjugateSymmetry) {
  const BubbleEnsemble e = cluster(3, 0.02);
  const SMatrixEvaluator ev(e, 1.0);
  EXPECT_LT((ev.pencil(0.0) - Eigen::MatrixXcd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-15);
  const cplx s(-0.2, 5.5);
  EXPECT_LT((ev.pencil(std::conj(s)) - ev.pencil(s).conjugate()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((ev.pencil(s) - pencil_oracle(e, 1.0, s)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Pencil, DerivativeMatchesFiniteDifference) {
  const SMatrixEvaluator ev(cluster(3, 0.02, 1.0), 1.0);
  const cplx s(-0.1, 6.0);
  const double h = 1e-6;
  const Eigen::MatrixXcd fd = (ev.pencil(s + h) - ev.pencil(s - h)) / (2 * h);
  EXPECT_LT((ev.pencil_derivative(s) - fd).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(TransferMatrices, CompositionOracle) {
  BubbleEnsemble e = cluster(2, 0.02);
  const BubbleEnsemble other = single_cluster(equidistant(2, 0.01 * std::sqrt(0.02)), 1.1 * w0, 1e-3, 0.02, 0.5,
                                              Eigen::Vector3d(0.4, 0, 0));
  e.cluster_centers.push_back(other.cluster_centers[0]);
  for (size_t i = 0; i < other.size(); ++i) {
    e.positions.push_back(other.positions[i]);
    e.cluster_of.push_back(1);
    e.omega_m.push_back(other.omega_m[i]);
    e.capacitance.push_back(other.capacitance[i]);
  }
  TransducerArray a;
  a.positions = {{3, 0, 0}, {0, 3, 0}, {0, 0, 3}};
  a.clock_advance = 1.0;
  const SMatrixEvaluator ev(e, 1.0, a);
  const cplx s(0.0, 6.5);
  Eigen::MatrixXcd G(4, 3);
  for (int i = 0; i < 4; ++i)
    for (int m = 0; m < 3; ++m) {
      const double r = (e.positions[static_cast<size_t>(i)] - a.positions[static_cast<size_t>(m)]).norm();
      G(i, m) = std::exp(-s * (r - 1.0)) / (4 * pi * r);
    }
  EXPECT_LT((ev.Gtr(s) - G).cwiseAbs().maxCoeff(), 1e-15);
  Eigen::MatrixXcd Hb = -e.eps * 1e-3 * s * s * pencil_oracle(e, 1.0, s).inverse();
  EXPECT_LT((ev.Hb(s) - Hb).cwiseAbs().maxCoeff(), 1e-12 * Hb.cwiseAbs().maxCoeff());
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(2, 4);
  B(0, 0) = B(0, 1) = B(1, 2) = B(1, 3) = 1.0;
  const Eigen::MatrixXcd H = B.cast<cplx>() * Hb * G;
  EXPECT_LT((ev.Hext(s) - H).cwiseAbs().maxCoeff(), 1e-12 * H.cwiseAbs().maxCoeff());
}

TEST(FindPole, SingleBubbleIsPurelyImaginary) {
  const SMatrixEvaluator ev(cluster(1, 0.01), 1.0);
  const PoleRecord r = find_pole(ev, cplx(-0.01, 0.98 * w0));
  EXPECT_LT(std::abs(r.s.real()), 1e-10 * w0);
  EXPECT_LT(std::abs(r.s.imag() - w0), 1e-10 * w0);
}

TEST(FindPole, PairRedShiftMatchesPrediction) {
  const BubbleEnsemble e = cluster(2, 0.01);
  const SMatrixEvaluator ev(e, 1.0);
  const PoleRecord r = find_pole(ev, I1 * w0);
  EXPECT_LT(r.s.imag(), w0);
  const double shift_pred = w0 * w0 * w0 * 1e-3 / (8 * pi) * 1.0 / 0.01 * std::pow(0.01, 0.5);
  EXPECT_NEAR(w0 - r.s.imag(), shift_pred, 0.05 * shift_pred);
  EXPECT_LT(r.s.real(), 0.0);
}

TEST(FindPole, ConjugateSeedGivesConjugatePole) {
  const SMatrixEvaluator ev(cluster(3, 0.01), 1.0);
  const PoleRecord r = principal_pole(ev, 0);
  const PoleRecord c = find_pole(ev, std::conj(r.s) + cplx(1e-4, 1e-4));
  EXPECT_LT(std::abs(c.s - std::conj(r.s)), 1e-9);
}

TEST(CountPoles, Examples) {
  const SMatrixEvaluator one(cluster(1, 0.01), 1.0);
  EXPECT_EQ(count_poles_in_disk(one, I1 * w0, w0 / 10).count, 1);
  EXPECT_EQ(count_poles_in_disk(one, I1 * 0.5 * w0, w0 / 10).count, 0);
  const BubbleEnsemble e = cluster(3, 0.01);
  const SMatrixEvaluator three(e, 1.0);
  const AsymptoticPole a = asymptotic_pole(e, 0, 1.0);
  const PoleCount pc = count_poles_in_disk(three, I1 * w0, 3 * (w0 - a.omega_pred));
  EXPECT_EQ(pc.count, 3);
  EXPECT_LT(pc.rounding_distance, 0.05);
}

TEST(CountPoles, ConservationOverClusters) {
  // Two pairs with distinct frequencies: each disk holds its own pair.
  BubbleEnsemble e = cluster(2, 0.01);
  const double w1 = 1.2 * w0;
  for (const auto& o : equidistant(2, 0.001)) {
    e.positions.push_back(Eigen::Vector3d(0.5, 0, 0) + o);
    e.cluster_of.push_back(1);
    e.omega_m.push_back(w1);
    e.capacitance.push_back(1e-3);
  }
  e.cluster_centers.push_back({0.5, 0, 0});
  const SMatrixEvaluator ev(e, 1.0);
  int total = 0;
  for (std::size_t a = 0; a < 2; ++a) {
    const AsymptoticPole ap = asymptotic_pole(e, a, 1.0);
    total += count_poles_in_disk(ev, I1 * e.cluster_omega(a), 3 * (e.cluster_omega(a) - ap.omega_pred)).count;
  }
  EXPECT_EQ(total, 4);
}

TEST(PoleSeparation, GapAtLeastHalfPrediction) {
  const BubbleEnsemble e = cluster(3, 0.005);
  const SMatrixEvaluator ev(e, 1.0);
  const PoleRecord r = principal_pole(ev, 0);
  const AsymptoticPole a = asymptotic_pole(e, 0, 1.0);
  EXPECT_GE(nearest_pole_distance(ev, r.s, 2 * a.gap_pred), 0.5 * a.gap_pred);
}

TEST(Residue, SingleBubbleClosedForm) {
  const double eps = 0.01, cap = 1e-3;
  const SMatrixEvaluator ev(cluster(1, eps, 0.01, cap), 1.0);
  const PoleRecord r = find_pole(ev, I1 * w0);
  const Eigen::MatrixXcd R = residue_at(ev, r, w0 / 10);
  // -eps C s^2 / (s^2/w^2 + 1) has residue -eps C (i w)^2 w^2 / (2 i w) at i w.
  const cplx want = -eps * cap * (I1 * w0) * (I1 * w0) * w0 * w0 / (2.0 * I1 * w0);
  EXPECT_LT(std::abs(R(0, 0) - want), 1e-10 * std::abs(want));
  EXPECT_NEAR(std::abs(R(0, 0)), eps * cap * w0 * w0 * w0 / 2, 1e-10 * std::abs(want));
}

TEST(Residue, RadiusIndependentAndConjugate) {
  const SMatrixEvaluator ev(cluster(2, 0.01), 1.0);
  const PoleRecord r = principal_pole(ev, 0);
  const double rad = default_residue_radius(ev, r);
  const Eigen::MatrixXcd R1 = residue_at(ev, r, rad), R2 = residue_at(ev, r, rad / 2);
  EXPECT_LT((R1 - R2).norm(), 1e-8 * R1.norm());
  PoleRecord c = r;
  c.s = std::conj(r.s);
  c.omega = -r.omega;
  EXPECT_LT((residue_at(ev, c, rad) - R1.conjugate()).norm(), 1e-8 * R1.norm());
}

TEST(Interaction, EquidistantSpectrum) {
  const BubbleEnsemble e = single_cluster(equidistant(4, 0.1), w0, 1e-3, 0.01, 0.5);
  const InteractionMatrix im = interaction_matrix(e, 0);
  EXPECT_NEAR(im.mu1, 3.0, 1e-12);
  EXPECT_NEAR(im.mu2, -1.0, 1e-12);
  EXPECT_NEAR(im.gap, 4.0, 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(im.M);
  const Eigen::Vector4d want(-1, -1, -1, 3);
  EXPECT_LT((es.eigenvalues() - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Interaction, ChainOfThree) {
  const BubbleEnsemble e = single_cluster(chain(3, 0.1), w0, 1e-3, 0.01, 0.5);
  const InteractionMatrix im = interaction_matrix(e, 0);
  const double x = im.mu1;
  EXPECT_NEAR(x * x * x - 2.25 * x - 1.0, 0.0, 1e-10);
  EXPECT_NEAR(x, 1.686, 1e-3);
  const auto [lo, hi] = toeplitz_bounds(3);
  EXPECT_GE(x, lo);
  EXPECT_LE(x, hi);
}

TEST(Interaction, PerronDataAgainstEigen) {
  for (int m = 2; m <= 8; ++m) {
    const BubbleEnsemble e = single_cluster(chain(m, 0.1), w0, 1e-3, 0.01, 0.5);
    const InteractionMatrix im = interaction_matrix(e, 0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(im.M);
    const auto& ev = es.eigenvalues();
    EXPECT_NEAR(im.mu1, ev(m - 1), 1e-10);
    EXPECT_NEAR(im.mu2, ev(m - 2), 1e-9);
    EXPECT_GT(im.gap, 0.0);
    EXPECT_GT(im.v.minCoeff(), 0.0);
    EXPECT_GT(im.w.minCoeff(), 0.0);
    const auto [lo, hi] = toeplitz_bounds(m);
    EXPECT_GE(im.mu1, lo - 1e-12);
    EXPECT_LE(im.mu1, hi + 1e-12);
  }
}

TEST(Interaction, SingleBubbleEmpty) {
  const InteractionMatrix im = interaction_matrix(cluster(1, 0.01), 0);
  EXPECT_EQ(im.mu1, 0.0);
}

TEST(ToeplitzBounds, Examples) {
  auto [l6, h6] = toeplitz_bounds(6);
  EXPECT_NEAR(l6, 137.0 / 60.0, 1e-14);
  EXPECT_NEAR(h6, 11.0 / 3.0, 1e-14);
  EXPECT_EQ(toeplitz_bounds(2), (std::pair<double, double>{1.0, 2.0}));
  EXPECT_EQ(toeplitz_bounds(3), (std::pair<double, double>{1.5, 2.0}));
  EXPECT_EQ(error_kind([] { toeplitz_bounds(1); }), "InvalidClusterSize");
}

TEST(AsymptoticPole, Formulas) {
  const AsymptoticPole one = asymptotic_pole(cluster(1, 0.01), 0, 1.0);
  EXPECT_EQ(one.omega_pred, w0);
  EXPECT_EQ(one.eta_pred, 0.0);
  EXPECT_TRUE(std::isinf(one.gap_pred));
  const double eps = 0.01, cap = 1e-3;
  // Unit scaled spacing: mu1 = 1.
  const BubbleEnsemble e = cluster(2, eps, 1.0, cap);
  const AsymptoticPole a = asymptotic_pole(e, 0, 1.0);
  EXPECT_NEAR(a.omega_pred, w0 - w0 * w0 * w0 * cap * std::sqrt(eps) / (8 * pi), 1e-12);
  const AsymptoticPole b = asymptotic_pole(cluster(2, eps, 1.0, 2 * cap), 0, 1.0);
  EXPECT_NEAR(w0 - b.omega_pred, 2 * (w0 - a.omega_pred), 1e-12);
  EXPECT_NEAR(b.gap_pred, 2 * a.gap_pred, 1e-12);
}

TEST(GainSweep, OffBandLinearInEpsilon) {
  const SpectralBand band({{1.3 * w0, 1.5 * w0}});
  const auto g1 = gain_sweep(SMatrixEvaluator(cluster(1, 0.01), 1.0), band, 16);
  const auto g2 = gain_sweep(SMatrixEvaluator(cluster(1, 0.02), 1.0), band, 16);
  double m1 = 0, m2 = 0;
  for (size_t k = 0; k < g1.size(); ++k) {
    m1 = std::max(m1, g1[k].norm_hb);
    m2 = std::max(m2, g2[k].norm_hb);
  }
  EXPECT_NEAR(m2 / m1, 2.0, 1e-6);
  EXPECT_TRUE(gain_sweep(SMatrixEvaluator(cluster(1, 0.01), 1.0), band, 0).empty());
}

TEST(GainSweep, LorentzianPeak) {
  const double eps = 0.01, cap = 1e-3;
  const SMatrixEvaluator ev(cluster(2, eps, 0.01, cap), 1.0);
  const PoleRecord r = principal_pole(ev, 0);
  const SpectralBand band({{r.omega - 0.5 * r.eta, r.omega + 0.5 * r.eta}});
  double peak = 0.0;
  for (const auto& g : gain_sweep(ev, band, 33)) peak = std::max(peak, g.norm_hb);
  const double lorentz = eps * cap * w0 * w0 * w0 / (2 * r.eta);
  EXPECT_GT(peak, 0.5 * lorentz);
  EXPECT_LT(peak, 2.0 * lorentz);
}

TEST(TuneCluster, Examples) {
  EXPECT_NEAR(tune_cluster(cluster(1, 0.01), 0, 1.05 * w0, 1.0), 1.05 * w0, 1e-9 * w0);
  // Spacing well below a wavelength, where the first-order shift applies.
  const double eps = 0.01, cap = 1e-4, dtilde = 0.1, target = 1.02 * w0;
  const BubbleEnsemble e = cluster(2, eps, dtilde, cap);
  const double tuned = tune_cluster(e, 0, target, 1.0);
  const double first_order = target + target * target * target * cap / dtilde * std::sqrt(eps) / (8 * pi);
  EXPECT_NEAR(tuned, first_order, 0.05 * (first_order - target));
  const SMatrixEvaluator ev(e.with_cluster_omega(0, tuned), 1.0);
  EXPECT_NEAR(principal_pole(ev, 0).omega, target, 1e-8 * target);
  EXPECT_EQ(error_kind([&] { tune_cluster(e, 0, 3 * w0, 1.0); }), "NoConvergence");
}

TEST(Accessibility, Examples) {
  TransducerArray a;
  a.positions = {{5, 0, 0}};
  a.rho_c = 2.0;
  const SpectralBand band({{6.0, 7.0}});
  EXPECT_NEAR(transducer_accessibility(a, {Eigen::Vector3d::Zero()}, band, 8, 1.0), 2.0 / (4 * pi * 5), 1e-15);
  // Centers mirror-symmetric about a plane holding every transducer.
  TransducerArray sym;
  sym.positions = {{0, 5, 0}, {0, -5, 0}, {0, 0, 5}};
  const std::vector<Eigen::Vector3d> centers = {{0.3, 0, 0}, {-0.3, 0, 0}};
  EXPECT_LT(transducer_accessibility(sym, centers, band, 8, 1.0), 1e-15);
  TransducerArray more = sym;
  more.positions.push_back({4, 1, 0});
  EXPECT_GT(transducer_accessibility(more, centers, band, 8, 1.0), 1e-6);
  TransducerArray fewer = more;
  fewer.positions.pop_back();
  fewer.positions.push_back({3, 0, 2});
  TransducerArray both = fewer;
  both.positions.push_back({4, 1, 0});
  EXPECT_GE(transducer_accessibility(both, centers, band, 8, 1.0), transducer_accessibility(fewer, centers, band, 8, 1.0));
}

TEST(TracePerturbation, LinearInClusterRadius) {
  TransducerArray a;
  a.positions = {{4, 0, 0}, {0, 4, 1}};
  auto pert = [&](double r) {
    const SMatrixEvaluator ev(single_cluster(equidistant(3, r), w0, 1e-3, 0.01, 0.5), 1.0, a);
    return trace_perturbation(ev, w0);
  };
  EXPECT_NEAR(pert(0.02) / pert(0.01), 2.0, 0.2);
}
