#include <gtest/gtest.h>

#include <random>

#include "bubbletrack/bubbles.hpp"
#include "bubbletrack/fft.hpp"
#include "bubbletrack/numerics.hpp"
#include "bubbletrack/realization.hpp"
#include "test_support.hpp"

using namespace bubbletrack;
using bubbletrack::testing::error_kind;
using bubbletrack::testing::pi;
using bubbletrack::testing::single_cluster;

namespace {

Signal tone(double omega, double dt, double T, double phase = 0.0) {
  const auto n = static_cast<Eigen::Index>(std::llround(T / dt)) + 1;
  Signal s(dt, n, 1);
  for (Eigen::Index k = 0; k < n; ++k) s.data(k, 0) = std::sin(omega * s.time(k) + phase);
  return s;
}

double interior_norm(const Eigen::VectorXd& v) {
  const auto n = v.size(), lo = n / 10, len = n - 2 * lo;
  return v.segment(lo, len).norm();
}

// Slowly modulated carrier, spectrally concentrated well inside [w - 2, w + 2].
Signal gaussian_packet(double omega, double dt, double T, double width) {
  const auto n = static_cast<Eigen::Index>(std::llround(T / dt)) + 1;
  Signal s(dt, n, 1);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double t = s.time(k);
    s.data(k, 0) = std::exp(-0.5 * std::pow((t - 0.5 * T) / width, 2)) * std::cos(omega * t);
  }
  return s;
}

}  // namespace

TEST(BandFilter, Profile) {
  const BandFilter f({{10.0, 12.0}}, 1.0);
  EXPECT_EQ(f.chi(11.0), 1.0);
  EXPECT_EQ(f.chi(-11.0), 1.0);
  EXPECT_EQ(f.chi(10.0), 1.0);
  EXPECT_NEAR(f.chi(9.5), 0.5, 1e-15);
  EXPECT_NEAR(f.chi(12.5), 0.5, 1e-15);
  EXPECT_EQ(f.chi(8.9), 0.0);
  EXPECT_EQ(f.chi(13.1), 0.0);
  EXPECT_EQ(f.chi(0.0), 0.0);
  EXPECT_EQ(f.support_hi(), 13.0);
  EXPECT_EQ(error_kind([] { BandFilter({{0.5, 2.0}}, 1.0); }), "InvalidBand");
  EXPECT_EQ(error_kind([] { BandFilter({{2.0, 3.0}, {3.5, 4.0}}, 0.5); }), "InvalidBand");
}

TEST(Bandpass, PassesInBandTone) {
  const BandFilter f({{8.0, 12.0}}, 2.0);
  const Signal x = tone(10.0, 0.01, 100.0);
  const Signal y = bandpass(x, f);
  EXPECT_LT(interior_norm(y.data.col(0) - x.data.col(0)), 1e-3 * interior_norm(x.data.col(0)));
}

TEST(Bandpass, RejectsOutOfBandTone) {
  const BandFilter f({{8.0, 12.0}}, 1.0);
  const Signal x = tone(20.0, 0.01, 60.0);
  const Signal y = bandpass(x, f);
  EXPECT_LT(interior_norm(y.data.col(0)), 1e-3 * interior_norm(x.data.col(0)));
}

TEST(Bandpass, Idempotent) {
  const BandFilter f({{8.0, 12.0}}, 1.0);
  const Signal x = gaussian_packet(10.0, 0.05, 80.0, 5.0);
  const Signal y = bandpass(x, f);
  const Signal z = bandpass(y, f);
  EXPECT_LT((z.data - y.data).norm(), 1e-10 * y.data.norm());
}

TEST(ReferenceTrajectory, ZeroAmplitudeAndSaturation) {
  const BoxDomain d(Eigen::Vector3d(1, 1, 1), 1.0);
  const ModeSet ms = mode_set(d, {{1, 1, 1}, {2, 1, 1}});
  const ReferenceTrajectory z = reference_trajectory_gen(ms, {0.0, 0.0}, 1.0, 3.0, 1e-3);
  EXPECT_EQ(z.p.data.cwiseAbs().maxCoeff(), 0.0);
  const ReferenceTrajectory r = reference_trajectory_gen(ms, {1.0, 0.5}, 1.0, 3.0, 1e-3);
  for (Eigen::Index k = 1000; k < r.p.samples(); k += 37)
    for (int m = 0; m < 2; ++m)
      EXPECT_NEAR(r.p.data(k, m), (m == 0 ? 1.0 : 0.5) * std::sin(ms.modes[static_cast<size_t>(m)].omega * r.p.time(k)), 1e-13);
  EXPECT_EQ(r.p.data.row(0).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.pd.data.row(0).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ReferenceTrajectory, DerivativeConsistency) {
  const BoxDomain d(Eigen::Vector3d(1, 1, 1), 1.0);
  const ModeSet ms = mode_set(d, {{1, 1, 1}});
  double prev = 0.0;
  for (int level = 0; level < 2; ++level) {
    const double dt = 2e-3 / (1 << level);
    const ReferenceTrajectory r = reference_trajectory_gen(ms, {1.0}, 1.0, 2.0, dt, 0.2);
    double err = 0.0;
    for (Eigen::Index k = 1; k + 1 < r.p.samples(); ++k) {
      const double fd1 = (r.p.data(k + 1, 0) - r.p.data(k - 1, 0)) / (2 * dt);
      const double fd2 = (r.pd.data(k + 1, 0) - r.pd.data(k - 1, 0)) / (2 * dt);
      const double fd3 = (r.pdd.data(k + 1, 0) - r.pdd.data(k - 1, 0)) / (2 * dt);
      err = std::max({err, std::abs(fd1 - r.pd.data(k, 0)), std::abs(fd2 - r.pdd.data(k, 0)) / 10,
                      std::abs(fd3 - r.pddd.data(k, 0)) / 100});
    }
    if (level == 1) EXPECT_NEAR(prev / err, 4.0, 0.4);
    prev = err;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(ProjectToBand, Examples) {
  const BandFilter f({{8.0, 12.0}}, 1.0);
  const Signal x = gaussian_packet(10.0, 0.05, 80.0, 5.0);
  const BandLimitedSource s = project_to_band_space(x, {f});
  EXPECT_LT(s.discarded[0], 1e-3);
  Signal dc = x;
  dc.data.array() += 3.0;
  const BandLimitedSource t = project_to_band_space(dc, {f});
  EXPECT_LT(std::abs(t.q.data.col(0).mean()), 1e-3 * 3.0);
  const Signal zero(0.05, 100, 1);
  const BandLimitedSource u = project_to_band_space(zero, {f});
  EXPECT_EQ(u.q.data.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(u.discarded[0], 0.0);
}

TEST(SolveBin, LeastNormSolution) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  Eigen::MatrixXcd H(2, 4);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) H(i, j) = {g(rng), g(rng)};
  const Eigen::VectorXcd q = Eigen::VectorXcd::Random(2);
  const BinSolution b = solve_bin(H, q);
  EXPECT_LT((H * b.y - q).norm(), 1e-12);
  EXPECT_LT(b.identity_defect, 1e-12);
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(H, Eigen::ComputeFullV);
  for (int k = 2; k < 4; ++k) {
    const Eigen::VectorXcd other = b.y + std::complex<double>(0.3, -0.2) * svd.matrixV().col(k);
    EXPECT_LT((H * other - q).norm(), 1e-12);
    EXPECT_GT(other.norm(), b.y.norm());
  }
}

namespace {

struct ScalarChain {
  BubbleEnsemble e = single_cluster({Eigen::Vector3d::Zero()}, 2 * pi, 1e-3, 0.02, 0.5);
  TransducerArray a;
  ScalarChain() {
    a.positions = {{3, 0, 0}};
    a.clock_advance = 2.5;
  }
};

}  // namespace

TEST(Synthesis, ZeroTargetGivesZeroControl) {
  ScalarChain c;
  const SMatrixEvaluator ev(c.e, 1.0, c.a);
  const BandFilter f({{7.0, 7.5}}, 0.3);
  const BandLimitedSource s = project_to_band_space(Signal(0.01, 2000, 1), {f});
  const RealizedControl r = synthesize_controls(s, ev);
  EXPECT_EQ(r.lambda.data.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(control_cost(r), 0.0);
}

TEST(Synthesis, ScalarChainRealizesTarget) {
  ScalarChain c;
  const SMatrixEvaluator ev(c.e, 1.0, c.a);
  const double w = 7.5, dt = 2e-3, T = 120.0;
  const BandFilter f({{w - 1.0, w + 1.0}}, 0.3);
  const BandLimitedSource s = project_to_band_space(gaussian_packet(w, dt, T, 10.0), {f});
  const RealizedControl r = synthesize_controls(s, ev);
  EXPECT_LT(r.identity_defect, 1e-10);
  EXPECT_LT(r.imag_residue, 1e-12);
  // Push the control through the time-domain chain.
  const IncidentTraces tr = incident_traces(c.a, r.lambda, r.lambda_dd, c.e.positions, 1.0);
  const Signal Y = integrate_delayed(build_system(c.e, 1.0), tr.u_tt, T, dt);
  const Signal Q = cluster_outputs(c.e, source_amplitudes(c.e, Y));
  EXPECT_LT(realization_error(Q, s), 1e-6);
}

TEST(RealizationError, Examples) {
  const Signal q = gaussian_packet(3.0, 0.01, 40.0, 5.0);
  EXPECT_EQ(realization_error(q, q), 0.0);
  const double delta = 1e-3;
  double prev = 0.0;
  for (double f : {20.0, 40.0, 80.0}) {
    Signal Q = q;
    for (Eigen::Index k = 0; k < Q.samples(); ++k) Q.data(k, 0) += delta * std::sqrt(2.0 / 40.0) * std::sin(f * Q.time(k));
    const double e = realization_error(Q, q);
    EXPECT_GE(e, delta / l2_norm(q));
    EXPECT_GT(e, prev);
    prev = e;
  }
}

TEST(ControlCost, Homogeneous) {
  RealizedControl r;
  r.lambda = r.lambda_d = r.lambda_dd = Signal(0.01, 100, 2);
  EXPECT_EQ(control_cost(r), 0.0);
  for (Eigen::Index k = 0; k < 100; ++k) {
    r.lambda.data(k, 0) = std::sin(0.1 * k);
    r.lambda_d.data(k, 0) = std::cos(0.1 * k);
    r.lambda_dd.data(k, 1) = 0.5;
  }
  RealizedControl s = r;
  s.lambda.data *= -3.0;
  s.lambda_d.data *= -3.0;
  s.lambda_dd.data *= -3.0;
  EXPECT_NEAR(control_cost(s), 3.0 * control_cost(r), 1e-12);
}

TEST(Synthesis, OffResonanceBandFlagged) {
  ScalarChain c;
  const SMatrixEvaluator ev(c.e, 1.0, c.a);
  const BandFilter f({{20.0, 21.0}}, 0.3);
  const BandLimitedSource s = project_to_band_space(gaussian_packet(20.5, 2e-3, 60.0, 10.0), {f});
  SynthesisOptions opt;
  opt.min_cluster_gain = 1.0;
  EXPECT_EQ(error_kind([&] { synthesize_controls(s, ev, opt); }), "IllConditionedBand");
}
