#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "icpvi/special.hpp"

using icpvi::special::f_survival;
using icpvi::special::regularized_incomplete_beta;
using icpvi::special::student_t_two_sided_p;

TEST_CASE("incomplete beta satisfies the reflection identity") {
    for (const double a : {0.5, 1.0, 2.0, 5.0}) {
        for (const double b : {0.5, 1.0, 2.0, 5.0}) {
            for (double x = 0.1; x < 0.95; x += 0.1) {
                const double lhs = regularized_incomplete_beta(a, b, x) +
                                   regularized_incomplete_beta(b, a, 1.0 - x);
                REQUIRE_THAT(lhs, Catch::Matchers::WithinAbs(1.0, 1e-10));
            }
        }
    }
}

TEST_CASE("incomplete beta edge values") {
    REQUIRE(regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0);
    REQUIRE(regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0);
    REQUIRE(regularized_incomplete_beta(2.0, 3.0, -0.5) == 0.0);
    REQUIRE(regularized_incomplete_beta(2.0, 3.0, 1.5) == 1.0);
    REQUIRE_THROWS_AS(regularized_incomplete_beta(0.0, 1.0, 0.5), icpvi::ValidationError);
    REQUIRE_THROWS_AS(regularized_incomplete_beta(1.0, -1.0, 0.5), icpvi::ValidationError);
}

TEST_CASE("incomplete beta matches the reference implementation") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> param(0.1, 20.0);
    std::uniform_real_distribution<double> arg(0.001, 0.999);
    for (int i = 0; i < 500; ++i) {
        const double a = param(rng);
        const double b = param(rng);
        const double x = arg(rng);
        const double ours = regularized_incomplete_beta(a, b, x);
        const double ref = boost::math::ibeta(a, b, x);
        REQUIRE_THAT(ours, Catch::Matchers::WithinAbs(ref, 1e-10));
    }
}

TEST_CASE("Student-t two-sided p matches the reference implementation") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> tval(-8.0, 8.0);
    std::uniform_int_distribution<int> dfval(1, 60);
    for (int i = 0; i < 300; ++i) {
        const double t = tval(rng);
        const double df = dfval(rng);
        const boost::math::students_t dist(df);
        const double ref = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
        REQUIRE_THAT(student_t_two_sided_p(t, df), Catch::Matchers::WithinAbs(ref, 1e-12));
    }
    REQUIRE(student_t_two_sided_p(0.0, 10.0) == 1.0);
    REQUIRE(student_t_two_sided_p(std::numeric_limits<double>::infinity(), 10.0) == 0.0);
}

TEST_CASE("F survival matches the reference implementation") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> fval(0.01, 50.0);
    std::uniform_int_distribution<int> dfval(1, 40);
    for (int i = 0; i < 300; ++i) {
        const double f = fval(rng);
        const double d1 = dfval(rng);
        const double d2 = dfval(rng);
        const boost::math::fisher_f dist(d1, d2);
        const double ref = boost::math::cdf(boost::math::complement(dist, f));
        REQUIRE_THAT(f_survival(f, d1, d2), Catch::Matchers::WithinAbs(ref, 1e-12));
    }
    REQUIRE(f_survival(0.0, 3.0, 4.0) == 1.0);
    REQUIRE(f_survival(std::numeric_limits<double>::infinity(), 3.0, 4.0) == 0.0);
}
