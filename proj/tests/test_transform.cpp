#include "psprop/oracles.hpp"
#include "psprop/transform.hpp"
#include "psprop/wkb.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace psprop;

namespace {

ComplexField packet_field(const PhasePoint& c, double hbar, const Axis& x) {
  ComplexField f = ComplexField::position({x}, hbar);
  f.fill([&](const Vec& v) { return gaussian_packet(c, hbar, v); });
  return f;
}

double max_abs_diff(const ComplexField& a, const ComplexField& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Wave-packet grid resolving sqrt(hbar)/4 on [-L, L]^2.
std::vector<Axis> phase_grid(double L, double hbar) {
  const int n = static_cast<int>(std::ceil(2 * L / (std::sqrt(hbar) / 4))) + 1;
  return {Axis(-L, L, n), Axis(-L, L, n)};
}

}  // namespace

TEST(Packet, ValuesAtSimplePoints) {
  EXPECT_NEAR(std::abs(gaussian_packet(PhasePoint(0, 0), 1.0, 0.0) - std::pow(pi, -0.25)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(gaussian_packet(PhasePoint(0, 0), 1.0, 1.0) - std::pow(pi, -0.25) * std::exp(-0.5)), 0.0,
              1e-15);
  EXPECT_THROW(gaussian_packet(PhasePoint(0, 0), 0.0, 1.0), DomainError);
}

TEST(Packet, Normalized) {
  const auto f = packet_field(PhasePoint(0.4, -1.2), 0.1, Axis(-6, 6, 2401));
  EXPECT_NEAR(f.norm(), 1.0, 1e-10);
}

TEST(Overlap, SimpleValues) {
  EXPECT_EQ(overlap(PhasePoint(0.3, 0.7), PhasePoint(0.3, 0.7), 0.2), cplx(1));
  EXPECT_NEAR(std::abs(overlap(PhasePoint(0, 0), PhasePoint(1, 0), 1.0) - 0.77880078307140), 0.0, 1e-12);
}

TEST(Overlap, MatchesQuadratureAndModulus) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  const double hbar = 0.3;
  const Axis x(-10, 10, 4001);
  for (int trial = 0; trial < 10; ++trial) {
    const PhasePoint X(u(rng), u(rng)), Y(u(rng), u(rng));
    const auto gx = packet_field(X, hbar, x), gy = packet_field(Y, hbar, x);
    const cplx num = gx.inner(gy);
    const cplx ref = overlap(X, Y, hbar);
    EXPECT_NEAR(std::abs(num - ref), 0.0, 1e-10);
    EXPECT_NEAR(std::abs(ref), std::exp(-(X.stacked() - Y.stacked()).squaredNorm() / (4 * hbar)), 1e-14);
  }
}

TEST(Bergmann, CoincidenceValue) {
  EXPECT_NEAR(std::abs(bergmann_kernel(PhasePoint(1, 2), PhasePoint(1, 2), 1.0) - 1 / (2 * pi)), 0.0, 1e-15);
}

TEST(Bergmann, ReproducesTransformedStates) {
  const double hbar = 0.1;
  const auto grid = phase_grid(3.0, hbar);
  const auto psi = packet_field(PhasePoint(0, 0), hbar, Axis(-6, 6, 1201));
  const auto Psi = wave_packet_transform(psi, grid);
  double err = 0;
  for (double q : {0.0, 0.3, -0.5})
    for (double p : {0.0, 0.2, -0.4}) {
      cplx s = 0;
      for (std::size_t k = 0; k < Psi.size(); ++k)
        s += Psi.weight(k) * bergmann_kernel(PhasePoint(q, p), PhasePoint::from_stacked(Psi.point(k)), hbar) * Psi[k];
      const cplx ref = std::pow(2 * pi * hbar, -0.5) * overlap(PhasePoint(q, p), PhasePoint(0, 0), hbar);
      err = std::max(err, std::abs(s - ref));
    }
  EXPECT_LE(err, 1e-6);
}

TEST(Transform, PacketGivesOverlap) {
  const double hbar = 0.2;
  const PhasePoint c(0.5, -0.3);
  const auto psi = packet_field(c, hbar, Axis(-8, 8, 1601));
  const auto Psi = wave_packet_transform(psi, {Axis(-2, 2, 21), Axis(-2, 2, 21)});
  double err = 0;
  for (std::size_t k = 0; k < Psi.size(); ++k) {
    const cplx ref = std::pow(2 * pi * hbar, -0.5) * overlap(PhasePoint::from_stacked(Psi.point(k)), c, hbar);
    err = std::max(err, std::abs(Psi[k] - ref));
  }
  EXPECT_LE(err, 1e-12);
}

TEST(Transform, InitialStateMatchesPhaseDisplay) {
  const double hbar = 0.05;
  const auto psi = standard_wkb_data().sample(Axis(-8, 8, 1601), hbar);
  const auto Psi = wave_packet_transform(psi, {Axis(-3, 3, 61), Axis(-3, 3, 61)});
  double err_adopted = 0, err_verbatim = 0;
  for (std::size_t k = 0; k < Psi.size(); ++k) {
    const Vec X = Psi.point(k);
    err_adopted = std::max(err_adopted, std::abs(Psi[k] - oracles::initial_phase_state(X(0), X(1), hbar)));
    err_verbatim = std::max(
        err_verbatim, std::abs(Psi[k] - oracles::initial_phase_state(X(0), X(1), hbar, oracles::Reading::verbatim)));
  }
  EXPECT_LE(err_adopted, 1e-6);
  // The literal display has the opposite sign on its i p q term and differs at O(1).
  EXPECT_GT(err_verbatim, 0.1);
}

TEST(Transform, PlancherelAndParseval) {
  const double hbar = 0.1;
  const Axis x(-8, 8, 1601);
  const auto grid = phase_grid(4.5, hbar);
  std::vector<ComplexField> states;
  states.push_back(packet_field(PhasePoint(0, 0), hbar, x));
  states.push_back(packet_field(PhasePoint(0.7, -1.0), hbar, x));
  states.push_back(packet_field(PhasePoint(-1.2, 0.4), hbar, x));
  states.push_back(standard_wkb_data().sample(x, hbar));
  std::vector<ComplexField> T;
  for (const auto& s : states) T.push_back(wave_packet_transform(s, grid));
  for (std::size_t i = 0; i < states.size(); ++i) {
    EXPECT_NEAR(T[i].norm(), states[i].norm(), 1e-6) << i;
    for (std::size_t j = 0; j < i; ++j) EXPECT_NEAR(std::abs(T[i].inner(T[j]) - states[i].inner(states[j])), 0.0, 1e-6);
  }
}

TEST(Transform, TruncationErrorCarriesBoundaryMass) {
  const double hbar = 0.1;
  const auto psi = packet_field(PhasePoint(0, 0), hbar, Axis(-0.5, 0.5, 101));
  try {
    wave_packet_transform(psi, {Axis(-1, 1, 5), Axis(-1, 1, 5)});
    FAIL();
  } catch (const TruncationError& e) {
    EXPECT_NE(std::string(e.what()).find("mass fraction"), std::string::npos);
  }
}

TEST(Transform, CoarsePhaseGridWarns) {
  Diagnostics dg;
  const double hbar = 0.1;
  wave_packet_transform(packet_field(PhasePoint(0, 0), hbar, Axis(-6, 6, 601)), {Axis(-1, 1, 3), Axis(-1, 1, 3)}, {},
                        &dg);
  EXPECT_FALSE(dg.empty());
}

TEST(Inverse, RoundTripPacket) {
  const double hbar = 0.1;
  const auto psi = packet_field(PhasePoint(1, -1), hbar, Axis(-4, 6, 401));
  const auto Psi = wave_packet_transform(psi, {Axis(-2.5, 4.5, 113), Axis(-4.5, 2.5, 113)});
  const auto back = inverse_transform(Psi, psi.axes());
  EXPECT_LE(max_abs_diff(back, psi), 1e-6);
}

TEST(Inverse, RoundTripWkbState) {
  const double hbar = 0.05;
  // The chirp x^2/2hbar needs dx well below hbar/|x| out to the tails.
  const Axis x(-9.5, 9.5, 3801);
  const auto psi = standard_wkb_data().sample(x, hbar);
  const auto Psi = wave_packet_transform(psi, phase_grid(7.5, hbar));
  const auto back = inverse_transform(Psi, {Axis(-3, 3, 121)});
  double err = 0;
  for (std::size_t k = 0; k < back.size(); ++k) {
    const double xv = back.point(k)(0);
    err = std::max(err, std::abs(back[k] - oracles::initial_position_state(xv, hbar)));
  }
  EXPECT_LE(err, 1e-5);
}

TEST(Inverse, ZeroMapsToZero) {
  const auto Psi = ComplexField::phase({Axis(-1, 1, 11), Axis(-1, 1, 11)}, 0.1);
  const auto back = inverse_transform(Psi, {Axis(-1, 1, 21)});
  EXPECT_EQ(back.max_abs(), 0.0);
}

TEST(FockBargmann, TransformedStatesAreSecondOrder) {
  const double hbar = 0.1;
  const auto psi = standard_wkb_data(0.05).sample(Axis(-8, 8, 1601), hbar);
  std::vector<double> C;
  for (int n : {41, 81, 161}) {
    const auto Psi = wave_packet_transform(psi, {Axis(-3, 3, n), Axis(-3, 3, n)});
    const double h = 6.0 / (n - 1);
    C.push_back(fock_bargmann_residual(Psi) / (h * h));
  }
  EXPECT_NEAR(C[1] / C[0], 1.0, 0.25);
  EXPECT_NEAR(C[2] / C[1], 1.0, 0.25);
}

// Without the e^{ipq/2hbar} twist the residual does not shrink with the grid.
TEST(FockBargmann, UntwistedGaussianIsNotInTheRange) {
  const double hbar = 0.1;
  std::vector<double> r;
  for (int n : {81, 161}) {
    auto Psi = ComplexField::phase({Axis(-2, 2, n), Axis(-2, 2, n)}, hbar);
    Psi.fill([&](const Vec& X) { return std::exp(-X.squaredNorm() / (2 * hbar)); });
    r.push_back(fock_bargmann_residual(Psi));
  }
  EXPECT_GT(r[1], 0.05);
  EXPECT_NEAR(r[1] / r[0], 1.0, 0.05);
}

TEST(FockBargmann, ZeroFieldIsZero) {
  EXPECT_EQ(fock_bargmann_residual(ComplexField::phase({Axis(-1, 1, 5), Axis(-1, 1, 5)}, 0.1)), 0.0);
}

TEST(Husimi, CoherentState) {
  const double hbar = 0.5;
  const auto psi = packet_field(PhasePoint(0, 0), hbar, Axis(-12, 12, 961));
  const auto r = husimi_check(psi, {Axis(-3, 3, 25), Axis(-3, 3, 25)});
  EXPECT_LE(r.max_diff, 1e-4);
  for (double h : r.husimi.values) EXPECT_GE(h, 0.0);
}

TEST(Husimi, WkbStateRelativeToPeak) {
  const double hbar = 0.1;
  const auto psi = standard_wkb_data().sample(Axis(-8, 8, 1281), hbar);
  const auto r = husimi_check(psi, {Axis(-3, 3, 49), Axis(-3, 3, 49)});
  EXPECT_LE(r.max_rel_diff, 1e-3);
  EXPECT_LE(r.max_diff, 1e-3);
}

TEST(Husimi, NarrowPositionGridIsRejected) {
  const auto psi = packet_field(PhasePoint(0, 0), 0.1, Axis(-3, 3, 301));
  EXPECT_THROW(husimi_check(psi, {Axis(-3, 3, 13), Axis(-3, 3, 13)}), TruncationError);
}

TEST(Fields, AxisAndFieldValidation) {
  EXPECT_THROW(Axis(1, 0, 5), DomainError);
  EXPECT_THROW(Axis(0, 1, 1), DomainError);
  EXPECT_THROW(ComplexField::phase({Axis(0, 1, 3)}, 0.1), DomainError);
  EXPECT_THROW(ComplexField::position({Axis(0, 1, 3)}, 0.0), DomainError);
}

TEST(Fields, ParallelTransformIsBitIdentical) {
  const double hbar = 0.1;
  const auto psi = standard_wkb_data(0.05).sample(Axis(-8, 8, 801), hbar);
  TransformOptions serial, par;
  par.threads = 4;
  const auto a = wave_packet_transform(psi, {Axis(-2, 2, 31), Axis(-2, 2, 31)}, serial);
  const auto b = wave_packet_transform(psi, {Axis(-2, 2, 31), Axis(-2, 2, 31)}, par);
  EXPECT_EQ(a.values(), b.values());
}
