#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "nbbp/betaprime.hpp"
#include "oracles.hpp"

using namespace nbbp;

namespace {
constexpr double kPhiBoundary = 1e-12;
const BetaPrimeParams kUnitShape{1.0, kPhiBoundary};  // a = 1, b = 2 in the limit
}  // namespace

TEST(BetaPrime, ShapesAndValidation) {
  const BetaPrimeParams p{0.5, 1.0};
  EXPECT_DOUBLE_EQ(p.shape_a(), 1.0);
  EXPECT_DOUBLE_EQ(p.shape_b(), 3.0);
  EXPECT_THROW((BetaPrimeParams{0.0, 1.0}.validate()), DomainError);
  EXPECT_THROW((BetaPrimeParams{1.0, -1.0}.validate()), DomainError);
  EXPECT_THROW((BetaPrimeParams{1.0, NAN}.validate()), DomainError);
  EXPECT_THROW(BetaPrimeLaw(BetaPrimeParams{-1.0, 1.0}), DomainError);
}

TEST(BetaPrime, PdfBoundaryShape) {
  EXPECT_NEAR(bp_pdf(1.0, kUnitShape), 0.25, 1e-11);
}

TEST(BetaPrime, PdfKnownValue) {
  // a = 1, b = 3: f(t) = 3 (1 + t)^-4, so f(2) = 1/27.
  EXPECT_NEAR(bp_pdf(2.0, {0.5, 1.0}), 0.037037037037037035, 1e-15);
  const double total = oracle::integrate_half_line([](double t) { return bp_pdf(t, {0.5, 1.0}); });
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(BetaPrime, PdfAtZeroLimits) {
  EXPECT_EQ(bp_pdf(0.0, {2.0, 1.0}), 0.0);                 // a = 4
  EXPECT_NEAR(bp_pdf(0.0, {0.5, 1.0}), 3.0, 1e-13);        // a = 1: density b
  EXPECT_TRUE(std::isinf(bp_pdf(0.0, {0.2, 1.0})));        // a = 0.4
  EXPECT_THROW(bp_pdf(-1e-3, {1.0, 1.0}), DomainError);
  EXPECT_THROW(bp_pdf(NAN, {1.0, 1.0}), DomainError);
}

TEST(BetaPrime, NormalizationGrid) {
  for (double mu : {0.5, 1.0, 5.0}) {
    for (double phi : {0.5, 1.0, 10.0}) {
      const BetaPrimeLaw law({mu, phi});
      const double total = oracle::integrate_half_line([&](double t) { return law.pdf(t); });
      EXPECT_NEAR(total, 1.0, 1e-7) << "mu=" << mu << " phi=" << phi;
    }
  }
}

TEST(BetaPrime, CdfKnownValues) {
  EXPECT_EQ(bp_cdf(0.0, {1.3, 2.0}), 0.0);
  EXPECT_NEAR(bp_cdf(1.0, kUnitShape), 0.75, 1e-11);
  EXPECT_EQ(bp_cdf(INFINITY, {1.3, 2.0}), 1.0);
  EXPECT_THROW(bp_cdf(-1.0, {1.3, 2.0}), DomainError);
}

TEST(BetaPrime, CdfMatchesIntegratedPdf) {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> lt(-3.0, 3.0), lmu(-1.5, 2.0), lphi(-1.0, 3.0);
  for (int k = 0; k < 200; ++k) {
    const double t = std::exp(lt(rng));
    const BetaPrimeLaw law({std::exp(lmu(rng)), std::exp(lphi(rng))});
    // Integrate the smaller tail directly so the comparison is absolute.
    const double lower = oracle::integrate([&](double s) { return law.pdf(s); }, 0.0, t, 1e-13);
    EXPECT_NEAR(law.cdf(t), lower, 1e-8) << "t=" << t << " a=" << law.shape_a() << " b=" << law.shape_b();
  }
}

TEST(BetaPrime, CdfNondecreasingAndTailsSumToOne) {
  const BetaPrimeLaw law({0.8, 3.0});
  double prev = 0.0;
  for (double t = 1e-6; t < 1e6; t *= 1.05) {
    const BpTails tt = law.tails(t);
    EXPECT_GE(tt.cdf, prev);
    EXPECT_NEAR(tt.cdf + tt.sf, 1.0, 1e-14);
    prev = tt.cdf;
  }
}

TEST(BetaPrime, FiniteDifferenceOfCdfMatchesPdf) {
  for (double mu : {0.3, 1.0, 4.0}) {
    for (double phi : {0.5, 2.0, 20.0}) {
      const BetaPrimeLaw law({mu, phi});
      for (double u : {0.05, 0.25, 0.5, 0.75, 0.95}) {
        const double t = law.quantile(u);
        const double h = 1e-5 * t;
        const double fd = (law.cdf(t + h) - law.cdf(t - h)) / (2.0 * h);
        EXPECT_NEAR(fd / law.pdf(t), 1.0, 1e-6) << "mu=" << mu << " phi=" << phi << " u=" << u;
      }
    }
  }
}

TEST(BetaPrime, QuantileKnownValue) {
  EXPECT_NEAR(bp_quantile(0.75, kUnitShape), 1.0, 1e-10);
  EXPECT_THROW(bp_quantile(0.0, kUnitShape), DomainError);
  EXPECT_THROW(bp_quantile(1.0, kUnitShape), DomainError);
}

TEST(BetaPrime, QuantileRoundtrip) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uu(0.0, 1.0), lmu(-1.5, 2.0), lphi(-1.5, 3.0);
  for (int k = 0; k < 1000; ++k) {
    double u = uu(rng);
    if (u <= 0.0) u = 0.5;
    const BetaPrimeLaw law({std::exp(lmu(rng)), std::exp(lphi(rng))});
    const double t = law.quantile(u);
    EXPECT_NEAR(law.cdf(t), u, 1e-9) << "u=" << u << " a=" << law.shape_a() << " b=" << law.shape_b();
  }
}

TEST(BetaPrime, UpperTailQuantileKeepsPrecision) {
  const BetaPrimeLaw law({1.0, 2.0});
  for (double s : {1e-6, 1e-10, 1e-14}) {
    const double t = law.quantile_tails(1.0 - s, s);
    EXPECT_NEAR(law.sf(t) / s, 1.0, 1e-9);
  }
}

TEST(BetaPrime, QuantileMonotoneTowardZero) {
  const BetaPrimeLaw law({0.7, 1.5});
  double prev = law.quantile(0.5);
  for (double u = 0.25; u > 1e-12; u *= 0.5) {
    const double t = law.quantile(u);
    EXPECT_LT(t, prev);
    EXPECT_GT(t, 0.0);
    prev = t;
  }
  EXPECT_LT(prev, 1e-6);
}

TEST(BetaPrime, HazardDefinition) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lt(-2.0, 2.0);
  const BetaPrimeLaw law({1.4, 0.9});
  for (int k = 0; k < 100; ++k) {
    const double t = std::exp(lt(rng));
    EXPECT_NEAR(law.hazard(t) / (law.pdf(t) / (1.0 - law.cdf(t))), 1.0, 1e-12);
  }
  EXPECT_NEAR(bp_hazard(1.0, kUnitShape), 1.0, 1e-10);
  EXPECT_THROW(law.hazard(0.0), DomainError);
}

TEST(BetaPrime, HazardOverflowSignal) {
  EXPECT_TRUE(std::isinf(BetaPrimeLaw({1.0, 200.0}).hazard(1e300)));
}

TEST(BetaPrime, HazardShapeBySmallShape) {
  // a' > 1: zero at the origin, a single interior maximum, then decay.
  const BetaPrimeLaw unimodal({2.0, 1.0});
  std::vector<double> h;
  for (double t = 1e-4; t < 1e3; t *= 1.2) h.push_back(unimodal.hazard(t));
  const auto peak = std::max_element(h.begin(), h.end()) - h.begin();
  ASSERT_GT(peak, 0);
  ASSERT_LT(peak, static_cast<long>(h.size()) - 1);
  for (long i = 1; i <= peak; ++i) EXPECT_GT(h[i], h[i - 1]);
  for (std::size_t i = static_cast<std::size_t>(peak) + 1; i < h.size(); ++i) EXPECT_LT(h[i], h[i - 1]);

  // a' < 1: the density diverges at the origin and the hazard only falls.
  const BetaPrimeLaw decreasing({0.3, 1.0});
  double prev = INFINITY;
  for (double t = 1e-4; t < 1e3; t *= 1.2) {
    const double v = decreasing.hazard(t);
    EXPECT_LT(v, prev) << "t=" << t;
    prev = v;
  }
}

TEST(BetaPrime, Moments) {
  const BpMoments m = bp_moments({2.0, 4.0});
  EXPECT_EQ(m.mean, 2.0);
  EXPECT_DOUBLE_EQ(m.variance, 1.5);
  // Classical shape formulas reduce to the same values.
  const double a = 10.0, b = 6.0;
  EXPECT_DOUBLE_EQ(a / (b - 1.0), 2.0);
  EXPECT_DOUBLE_EQ(a * (a + b - 1.0) / ((b - 2.0) * (b - 1.0) * (b - 1.0)), 1.5);
  for (double phi : {0.1, 1.0, 50.0}) EXPECT_EQ(bp_moments({2.0, phi}).mean, 2.0);
}

TEST(BetaPrime, MonteCarloMean) {
  const BetaPrimeParams p{2.0, 4.0};
  const BetaPrimeLaw law(p);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> uu(0.0, 1.0);
  const int n = 1000000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    double u = uu(rng);
    if (u <= 0.0) u = 0.5;
    sum += law.quantile(u);
  }
  const double se = std::sqrt(bp_moments(p).variance / n);
  EXPECT_NEAR(sum / n, p.mu, 3.0 * se);
}
