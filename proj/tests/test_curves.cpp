#include <gtest/gtest.h>

#include <cmath>

#include "two_settle/curves.hpp"

using namespace two_settle;

namespace {

EffectiveRTCurve unit_affine(double pf = 0.0, double a = 1.0, double pc = 0.0) {
    return {ConventionalCurve::affine(a, pc), pf};
}

}  // namespace

TEST(Conventional, EvalExamples) {
    EXPECT_DOUBLE_EQ(eval_conventional(ConventionalCurve::affine(1.0, 0.0), 0.5), 0.5);
    EXPECT_DOUBLE_EQ(eval_conventional(ConventionalCurve::affine(1.0, 0.2), 0.1), 0.0);
    EXPECT_DOUBLE_EQ(eval_conventional(ConventionalCurve::power(2.0, 0.5, 0.0), 4.0), 4.0);
    EXPECT_THROW(eval_conventional(ConventionalCurve::affine(1.0), -0.1), DomainError);
}

TEST(Conventional, InverseExamples) {
    EXPECT_DOUBLE_EQ(conventional_inverse(ConventionalCurve::affine(1.0, 0.0), 0.3), 0.3);
    EXPECT_DOUBLE_EQ(conventional_inverse(ConventionalCurve::affine(2.0, 1.0), 4.0), 3.0);
    EXPECT_DOUBLE_EQ(conventional_inverse(ConventionalCurve::power(2.0, 0.5, 0.7), 0.0), 0.7);
    EXPECT_THROW(conventional_inverse(ConventionalCurve::affine(1.0), -1.0), DomainError);
}

TEST(Conventional, PowerInverseRoundTrip) {
    auto c = ConventionalCurve::power(1.5, 0.4, 0.3);
    for (double q : {0.01, 0.2, 1.0, 3.0}) EXPECT_NEAR(c.value(c.inverse(q)), q, 1e-12);
}

TEST(Conventional, ValidateRejectsBadParameters) {
    EXPECT_THROW(ConventionalCurve::affine(0.0).validate(), ConfigError);
    EXPECT_THROW(ConventionalCurve::power(1.0, 1.5).validate(), ConfigError);
    EXPECT_THROW(ConventionalCurve::affine(1.0, -0.1).validate(), ConfigError);
}

TEST(EffectiveCurve, FloorAtDaDispatch) {
    EffectiveRTCurve c{ConventionalCurve::affine(1.0), 0.4};
    EXPECT_DOUBLE_EQ(c.value(0.1), 0.4);
    EXPECT_DOUBLE_EQ(c.value(0.9), 0.9);
    EXPECT_DOUBLE_EQ(c.derivative(0.3), 0.0);
    EXPECT_DOUBLE_EQ(c.derivative(0.5), 1.0);
    EXPECT_DOUBLE_EQ(c.increment_inverse(0.5), 0.9);
}

TEST(Antiderivative, Examples) {
    auto c = unit_affine();
    EXPECT_NEAR(antiderivative_F(c, 1, 3, 1.0), 2.0, 1e-14);
    EXPECT_NEAR(antiderivative_F(c, 1, 3, 0.25), 1.0, 1e-14);
    // C-bar' = 0 below the DA price
    EffectiveRTCurve flat{ConventionalCurve::affine(1.0), 5.0};
    for (int k : {1, 2}) EXPECT_EQ(antiderivative_F(flat, k, 3, 2.0), 0.0);
    EXPECT_THROW(antiderivative_F(c, 3, 3, 1.0), DomainError);
    EXPECT_THROW(antiderivative_F(c, 1, 3, 0.0), DomainError);
}

TEST(Antiderivative, LogBranch) {
    auto c = unit_affine(0.0, 2.0);
    EXPECT_NEAR(antiderivative_F(c, 2, 3, std::exp(1.0)), 2.0, 1e-13);
    EXPECT_NEAR(antiderivative_F(c, 2, 3, 1.0), 0.0, 1e-15);
}

TEST(Antiderivative, QuadratureMatchesClosedForm) {
    for (double pf : {0.0, 0.3}) {
        auto c = unit_affine(pf, 1.7);
        for (auto [k, n] : {std::pair{1, 3}, {1, 4}, {2, 4}, {2, 3}, {1, 2}}) {
            BranchKernel closed(c, n - k, FMethod::closed_form), quad(c, n - k, FMethod::quadrature);
            for (int i = 0; i <= 40; ++i) {
                double p = 1e-4 * std::pow(1e5, i / 40.0);
                EXPECT_NEAR(quad.F(p), closed.F(p), 1e-8) << "pf=" << pf << " k=" << k << " n=" << n << " p=" << p;
            }
        }
    }
}

TEST(Antiderivative, PowerQuadratureMatchesClosedFormAtZeroThreshold) {
    EffectiveRTCurve c{ConventionalCurve::power(1.3, 0.6, 0.0), 0.0};
    for (int m : {1, 2, 3}) {
        BranchKernel closed(c, m, FMethod::closed_form), quad(c, m, FMethod::quadrature);
        for (double p : {1e-3, 0.05, 0.5, 1.0, 4.0}) EXPECT_NEAR(quad.F(p), closed.F(p), 1e-8) << m << " " << p;
    }
}

TEST(Antiderivative, PowerWithThresholdDerivativeMatches) {
    EffectiveRTCurve c{ConventionalCurve::power(1.0, 0.5, 0.2), 0.1};
    BranchKernel ker(c, 2);
    for (double p : {0.3, 0.7, 2.0}) {
        double h = 1e-5 * p;
        double d = (ker.F(p + h) - ker.F(p - h)) / (2 * h);
        EXPECT_NEAR(d, c.derivative(p) * std::pow(p, -0.5), 1e-5);
    }
    EXPECT_EQ(ker.F(0.15), 0.0);
}

TEST(Branch, EvalExamples) {
    auto c = unit_affine();
    BranchSolution b{1, 3, 2.0};
    EXPECT_EQ(eval_branch(b, c, 0.0), 0.0);
    EXPECT_NEAR(eval_branch(b, c, 1.0), 1.0, 1e-14);
    EXPECT_NEAR(eval_branch(b, c, 0.25), 0.75, 1e-14);
}

TEST(Branch, ClosedFormOracle) {
    auto c = unit_affine();
    for (auto [n, k] : {std::pair{3, 1}, {4, 1}, {4, 2}}) {
        int m = n - k;
        double cc = 1.3;
        for (int i = 1; i <= 100; ++i) {
            double p = 0.02 * i;
            double expect = cc * std::pow(p, 1.0 / m) - p / (m - 1);
            EXPECT_NEAR(eval_branch({k, n, cc}, c, p), expect, 1e-8);
        }
    }
}

TEST(Branch, OdeResidual) {
    auto c = unit_affine(0.2);
    for (auto [n, k] : {std::pair{3, 1}, {4, 1}, {4, 2}, {3, 2}}) {
        BranchKernel ker(c, n - k);
        double cc = 2.0;
        for (int i = 1; i <= 100; ++i) {
            double p = 0.25 + 0.01 * i;
            double h = 1e-6 * p;
            double d = (ker.sigma(p + h, cc) - ker.sigma(p - h, cc)) / (2 * h);
            double r = p * (n - k) * d - ker.sigma(p, cc) + p * c.derivative(p);
            EXPECT_LE(std::abs(r), 1e-8);
        }
    }
}

TEST(Branch, IncreasingInConstant) {
    auto c = unit_affine();
    BranchKernel ker(c, 2);
    for (double p : {0.1, 1.0, 3.0}) EXPECT_LT(ker.sigma(p, 1.0), ker.sigma(p, 1.01));
}

TEST(Breakpoint, Examples) {
    auto c = unit_affine();
    BranchSolution b{1, 3, 2.0};
    auto g1 = branch_breakpoint(b, c, 1.0);
    ASSERT_TRUE(g1);
    // tangency: sigma - 1 = -(1 - sqrt p)^2 resolves p only to about sqrt(eps)
    EXPECT_NEAR(*g1, 1.0, 3e-8);
    auto g2 = branch_breakpoint(b, c, 0.75);
    ASSERT_TRUE(g2);
    EXPECT_NEAR(*g2, 0.25, 1e-10);
    EXPECT_EQ(*branch_breakpoint(b, c, 0.0), 0.0);
    EXPECT_FALSE(branch_breakpoint(b, c, 1.5));
}

TEST(Breakpoint, NonincreasingInConstant) {
    auto c = unit_affine(0.1);
    double prev = 1e300;
    for (double cc = 1.5; cc < 4.0; cc += 0.25) {
        auto g = branch_breakpoint({1, 3, cc}, c, 0.5);
        ASSERT_TRUE(g);
        EXPECT_LE(*g, prev + 1e-12);
        prev = *g;
    }
}

TEST(Monotone, GridAgreesWithAnalytic) {
    auto c = unit_affine(0.05);
    BranchKernel ker(c, 2);
    for (double cc : {0.5, 1.0, 1.5, 2.0, 3.0})
        for (double hi : {0.2, 0.8, 2.0})
            EXPECT_EQ(branch_monotone(ker, cc, 0.0, hi, 200, true), branch_monotone(ker, cc, 0.0, hi, 200, false))
                << cc << " " << hi;
}
