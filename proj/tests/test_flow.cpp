#include "psprop/flow.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace psprop;

namespace {

FlowOptions rk4(double step = 1e-3) {
  FlowOptions o;
  o.method = FlowMethod::rk4;
  o.step = step;
  return o;
}

double sym_err(const CMat& M) { return (M - M.transpose()).cwiseAbs().maxCoeff(); }

ModelPtr quartic() { return polynomial_model({{0, 2, 1.0}, {2, 0, 0.5}, {4, 0, 0.25}, {1, 1, 0.3}}); }

}  // namespace

TEST(Integrate, FreeActionAtShortTime) {
  const auto b = integrate_characteristics(builtin_model("free"), PhasePoint(1, 0.5), 0.2, rk4());
  EXPECT_NEAR(b.samples().back().action, 0.05, 1e-12);
  EXPECT_NEAR(b.samples().back().X(0), 1.2, 1e-12);
}

TEST(Integrate, LinearEndpointAndAction) {
  for (auto m : {FlowMethod::rk4, FlowMethod::adaptive, FlowMethod::exact}) {
    FlowOptions o;
    o.method = m;
    const auto b = integrate_characteristics(builtin_model("linear"), PhasePoint(0, 0), 1.0, o);
    const auto& s = b.samples().back();
    EXPECT_NEAR(s.X(0), -1.0, 1e-10);
    EXPECT_NEAR(s.X(1), -1.0, 1e-10);
    EXPECT_NEAR(s.action, 2.0 / 3.0, 1e-10);
  }
}

TEST(Integrate, ZeroDurationGivesInitialFrame) {
  const auto b = integrate_characteristics(quartic(), PhasePoint(0.3, 0.1), 0.0, rk4());
  ASSERT_EQ(b.size(), 1u);
  const auto& s = b.samples()[0];
  EXPECT_EQ(s.frame.A(0, 0), cplx(1, 0));
  EXPECT_EQ(s.frame.B(0, 0), cplx(0, 1));
  EXPECT_EQ(s.action, 0.0);
  EXPECT_EQ(s.logdetA, cplx(0));
}

TEST(Integrate, StepIsTimeOverCeiling) {
  const auto b = integrate_characteristics(builtin_model("free"), PhasePoint(0, 1), 0.0105, rk4());
  ASSERT_EQ(b.size(), 12u);  // ceil(10.5) = 11 steps
  EXPECT_DOUBLE_EQ(b.samples().back().t, 0.0105);
  EXPECT_NEAR(b.samples()[1].t, 0.0105 / 11, 1e-17);
}

TEST(Integrate, RejectsBadInput) {
  EXPECT_THROW(integrate_characteristics(builtin_model("free"), PhasePoint(0, 0), -1.0), RangeError);
  EXPECT_THROW(integrate_characteristics(builtin_model("free", 2), PhasePoint(0, 0), 1.0), DomainError);
  FlowOptions o;
  o.method = FlowMethod::exact;
  EXPECT_THROW(integrate_characteristics(quartic(), PhasePoint(0, 0), 1.0, o), ConfigError);
}

TEST(Integrate, NumericalFlowMatchesClosedFormOnBuiltins) {
  for (const char* k : {"free", "linear", "harmonic"}) {
    const auto m = builtin_model(k);
    const Vec X0 = PhasePoint(0.7, -0.3).stacked();
    for (auto meth : {FlowMethod::rk4, FlowMethod::adaptive}) {
      FlowOptions o;
      o.method = meth;
      const auto b = integrate_characteristics(m, PhasePoint(0.7, -0.3), 2.0, o);
      for (const auto& s : b.samples()) {
        EXPECT_LE((s.X - m->exact_flow(X0, s.t)).cwiseAbs().maxCoeff(), 1e-9) << k;
        EXPECT_LE((flow_jacobian(s) - m->exact_jacobian(X0, s.t)).cwiseAbs().maxCoeff(), 1e-9) << k;
        EXPECT_NEAR(s.action, m->exact_action(X0, s.t), 1e-9) << k;
      }
    }
  }
}

TEST(Integrate, AdaptiveStepUnderflowReportsLastTime) {
  // H = p^2 - q^4 escapes to infinity in finite time.
  const auto m = polynomial_model({{0, 2, 1.0}, {4, 0, -1.0}});
  FlowOptions o;
  o.method = FlowMethod::adaptive;
  try {
    integrate_characteristics(m, PhasePoint(1.0, 1.0), 5.0, o);
    FAIL() << "expected a hard error";
  } catch (const IntegrationError& e) {
    EXPECT_NE(std::string(e.what()).find("t="), std::string::npos) << e.what();
  } catch (const ModelError&) {
  } catch (const BranchError&) {
  }
}

TEST(Anisotropy, InitialFrameGivesIdentityTimesI) {
  const CMat Z = anisotropy_Z({CMat::Identity(2, 2), I1 * CMat::Identity(2, 2)});
  EXPECT_LE((Z - I1 * CMat::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Anisotropy, FreeAndLinearAtHalf) {
  for (const char* k : {"free", "linear"}) {
    const auto b = integrate_characteristics(builtin_model(k), PhasePoint(0.2, 0.4), 0.5, rk4());
    const CMat Z = anisotropy_Z(b.samples().back().frame);
    EXPECT_NEAR(std::abs(Z(0, 0) - cplx(0.5, 0.5)), 0.0, 1e-12) << k;
  }
}

TEST(Anisotropy, HarmonicStaysAtI) {
  // A = cos 2t + i sin 2t, B = -sin 2t + i cos 2t, so Z = B / A = i for all t.
  const auto m = builtin_model("harmonic");
  for (double t : {0.3, pi / 2, 2.0}) {
    const auto s = propagate_to(*m, PhasePoint(1, 0).stacked(), t, rk4());
    EXPECT_NEAR(std::abs(anisotropy_Z(s.frame)(0, 0) - I1), 0.0, 1e-12) << t;
  }
}

TEST(Anisotropy, SingularFrameIsCaustic) {
  CMat A = CMat::Zero(1, 1), B = CMat::Identity(1, 1);
  EXPECT_THROW(anisotropy_Z({A, B}), CausticError);
}

TEST(Jacobian, FreeUnitTime) {
  const auto b = integrate_characteristics(builtin_model("free"), PhasePoint(0, 0), 1.0, rk4());
  const Mat M = flow_jacobian(b, 1.0);
  Mat ref(2, 2);
  ref << 1, 2, 0, 1;
  EXPECT_LE((M - ref).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((flow_jacobian(b, 0.0) - Mat::Identity(2, 2)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Jacobian, HarmonicQuarterPeriod) {
  const auto b = integrate_characteristics(builtin_model("harmonic"), PhasePoint(0.5, 0.5), pi / 4, rk4());
  Mat ref(2, 2);
  ref << 0, 1, -1, 0;
  EXPECT_LE((flow_jacobian(b, pi / 4) - ref).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Jacobian, OffSampleTimeAndRange) {
  const auto b = integrate_characteristics(builtin_model("free"), PhasePoint(0, 0), 1.0, rk4(0.1));
  Mat ref(2, 2);
  ref << 1, 2 * 0.537, 0, 1;
  EXPECT_LE((flow_jacobian(b, 0.537) - ref).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(flow_jacobian(b, 1.5), RangeError);
  EXPECT_THROW(flow_jacobian(b, -0.1), RangeError);
}

TEST(Amplitude, StartsAtOne) {
  const auto b = integrate_characteristics(builtin_model("linear"), PhasePoint(0, 0), 1.0, rk4());
  EXPECT_EQ(amplitude_a(b, 0.0), cplx(1));
}

TEST(Amplitude, FreeHalf) {
  const auto b = integrate_characteristics(builtin_model("free"), PhasePoint(0, 0), 0.5, rk4());
  const cplx a = amplitude_a(b, 0.5);
  // (1 + i)^{-1/2} = 2^{-1/4} e^{-i pi / 8}
  EXPECT_NEAR(a.real(), 0.77688698701502, 1e-12);
  EXPECT_NEAR(a.imag(), -0.32179712645279, 1e-12);
}

TEST(Amplitude, SubQuadraticMatchesPrincipalRoot) {
  for (const char* k : {"free", "linear"}) {
    const auto b = integrate_characteristics(builtin_model(k), PhasePoint(0.1, 0.2), 3.0, rk4());
    for (double t : {0.25, 1.0, 3.0}) {
      const cplx ref = 1.0 / std::sqrt(1.0 + 2.0 * I1 * t);
      EXPECT_NEAR(std::abs(amplitude_a(b, t) - ref), 0.0, 1e-11) << k << " " << t;
    }
  }
}

TEST(Amplitude, HarmonicBranchIsTrackedPastPrincipalRange) {
  // det A = e^{2it}: the continued amplitude is e^{-it}, which leaves the
  // principal branch of the square root for t > pi/2.
  for (auto meth : {FlowMethod::rk4, FlowMethod::exact}) {
    FlowOptions o;
    o.method = meth;
    const auto b = integrate_characteristics(builtin_model("harmonic"), PhasePoint(1, 0), 5.0, o);
    for (double t : {1.0, 2.0, 3.5, 5.0}) {
      EXPECT_NEAR(std::abs(amplitude_a(b, t) - std::exp(-I1 * t)), 0.0, 1e-10) << t;
      EXPECT_NEAR(b.at(t).logdetA.imag(), 2 * t, 1e-10);
    }
  }
}

TEST(Amplitude, CoarseExactSamplingIsABranchError) {
  FlowOptions o;
  o.method = FlowMethod::exact;
  o.step = 1.0;  // increments of arg det A equal 2 rad
  EXPECT_THROW(integrate_characteristics(builtin_model("harmonic"), PhasePoint(1, 0), 3.0, o), BranchError);
}

TEST(Amplitude, ModulusIsQuarterPowerOfImZ) {
  const auto b = integrate_characteristics(quartic(), PhasePoint(0.4, -0.6), 1.0, rk4());
  for (const auto& s : b.samples()) {
    const double imz = anisotropy_Z(s.frame)(0, 0).imag();
    EXPECT_NEAR(std::abs(amplitude_a(s)), std::pow(imz, 0.25), 1e-9);
  }
}

// Identities of the variational forms along random trajectories of a quartic model.
TEST(Identities, HoldAlongQuarticTrajectories) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  const auto m = quartic();
  for (int trial = 0; trial < 20; ++trial) {
    const PhasePoint X0(u(rng), u(rng));
    const double H0 = m->value(X0.stacked());
    const auto b = integrate_characteristics(m, X0, 1.0, rk4());
    const Mat J = symplectic_J(1);
    for (std::size_t k = 0; k < b.size(); k += 50) {
      const auto& s = b.samples()[k];
      const CMat& A = s.frame.A;
      const CMat& B = s.frame.B;
      EXPECT_LE((A.transpose() * B - B.transpose() * A).cwiseAbs().maxCoeff(), 1e-8);
      EXPECT_LE((A.adjoint() * B - B.adjoint() * A - 2.0 * I1 * CMat::Identity(1, 1)).cwiseAbs().maxCoeff(), 1e-8);
      EXPECT_LE((A.conjugate() * B.transpose() - A * B.adjoint() - 2.0 * I1 * CMat::Identity(1, 1))
                    .cwiseAbs()
                    .maxCoeff(),
                1e-8);
      const CMat Z = anisotropy_Z(s.frame);
      EXPECT_LE(sym_err(Z), 1e-12);
      EXPECT_LE((Mat(Z.imag()) - Mat((A * A.adjoint()).inverse().real())).cwiseAbs().maxCoeff(), 1e-8);
      const CMat Zi = Z.inverse();
      EXPECT_LE((Mat(-Zi.imag()) - Mat((B * B.adjoint()).inverse().real())).cwiseAbs().maxCoeff(), 1e-8);
      const Mat M = flow_jacobian(s);
      EXPECT_LE((M.transpose() * J * M - J).cwiseAbs().maxCoeff(), 1e-8);
      EXPECT_LE(std::abs(m->value(s.X) - H0), 1e-9 * (1 + std::abs(H0)));
    }
  }
}

TEST(Identities, HoldInTwoDimensions) {
  const auto m = builtin_model("harmonic", 2);
  Vec X0(4);
  X0 << 0.3, -0.2, 0.5, 0.1;
  const auto b = integrate_characteristics(m, PhasePoint::from_stacked(X0), 1.3, rk4());
  const auto& s = b.samples().back();
  const CMat I2 = CMat::Identity(2, 2);
  EXPECT_LE((s.frame.A.transpose() * s.frame.B - s.frame.B.transpose() * s.frame.A).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((s.frame.A.adjoint() * s.frame.B - s.frame.B.adjoint() * s.frame.A - 2.0 * I1 * I2).cwiseAbs().maxCoeff(),
            1e-10);
  EXPECT_LE((anisotropy_Z(s.frame) - I1 * I2).cwiseAbs().maxCoeff(), 1e-10);
}

// dZ/dt + Z Hpp Z + Hqp Z + Z Hpq + Hqq = 0, checked by central differences of stored samples.
TEST(Identities, RiccatiResidual) {
  const auto m = quartic();
  const auto b = integrate_characteristics(m, PhasePoint(0.8, -0.2), 1.0, rk4());
  const auto& S = b.samples();
  double worst = 0;
  for (std::size_t k = 1; k + 1 < S.size(); k += 25) {
    const double h = S[k + 1].t - S[k].t;
    const cplx dZ = (anisotropy_Z(S[k + 1].frame)(0, 0) - anisotropy_Z(S[k - 1].frame)(0, 0)) / (2 * h);
    const cplx Z = anisotropy_Z(S[k].frame)(0, 0);
    const Mat H = m->hessian(S[k].X);
    const cplx r = dZ + Z * H(1, 1) * Z + H(0, 1) * Z + Z * H(1, 0) + H(0, 0);
    worst = std::max(worst, std::abs(r));
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(Identities, SymplecticWithinTenTimesTolerance) {
  FlowOptions o;
  o.method = FlowMethod::adaptive;
  const auto b = integrate_characteristics(quartic(), PhasePoint(1.1, 0.4), 2.0, o);
  const Mat J = symplectic_J(1);
  for (const auto& s : b.samples()) {
    const Mat M = flow_jacobian(s);
    EXPECT_LE((M.transpose() * J * M - J).cwiseAbs().maxCoeff(), 10 * 1e-9);
  }
}

TEST(Ehrenfest, BoundedRotationNeverWarns) {
  FlowOptions o;
  o.hbar = 0.1;
  const auto b = integrate_characteristics(builtin_model("harmonic"), PhasePoint(1, 1), 20.0, o);
  EXPECT_TRUE(ehrenfest_guard(b).empty());
}

TEST(Ehrenfest, FreeMotionWarnsOnceAtCrossing) {
  // ||[[1, 2t], [0, 1]]||_2 = t + sqrt(1 + t^2) reaches hbar^{-1/2} at t = (1/hbar - 1) / (2 hbar^{-1/2}).
  FlowOptions o;
  o.hbar = 0.1;
  const auto b = integrate_characteristics(builtin_model("free"), PhasePoint(0, 0), 3.0, o);
  const auto w = ehrenfest_guard(b);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_NEAR(w[0].t, 1.4230249470757708, 1e-3);
  EXPECT_GT(w[0].t, 1.4230249470757708);
}

TEST(Ehrenfest, DisabledWithoutHbar) {
  const auto b = integrate_characteristics(builtin_model("free"), PhasePoint(0, 0), 100.0);
  EXPECT_TRUE(ehrenfest_guard(b).empty());
}

TEST(Ehrenfest, LargerHbarFiresEarlier) {
  double prev = 0;
  for (double hbar : {0.001, 0.01, 0.1}) {
    FlowOptions o;
    o.hbar = hbar;
    const auto w = ehrenfest_guard(integrate_characteristics(builtin_model("free"), PhasePoint(0, 0), 20.0, o));
    ASSERT_EQ(w.size(), 1u);
    if (prev > 0) {
      EXPECT_LT(w[0].t, prev);
    }
    prev = w[0].t;
  }
}

TEST(Concurrency, IndependentTrajectoriesMatchSerial) {
  const auto m = quartic();
  std::vector<FrameState> serial(16), par(16);
  for (int i = 0; i < 16; ++i) serial[i] = propagate_to(*m, PhasePoint(0.1 * i, -0.05 * i).stacked(), 0.7, rk4());
  parallel_for(16, 4, [&](std::size_t i) {
    par[i] = propagate_to(*m, PhasePoint(0.1 * i, -0.05 * i).stacked(), 0.7, rk4());
  });
  for (int i = 0; i < 16; ++i) {
    EXPECT_EQ(serial[i].X, par[i].X);
    EXPECT_EQ(serial[i].logdetA, par[i].logdetA);
  }
}
