#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "dse/error.hpp"
#include "dse/speckle.hpp"
#include "dse/tile.hpp"

using namespace dse;

namespace {

// Trapezoid quadrature of speckle_pdf over [0, hi] with the given step.
// For looks < 1 the density diverges at 0, so integrate in u = sqrt(n)
// instead: dn = 2u du keeps the integrand finite everywhere.
double pdf_mass(double looks, double hi, double step) {
    if (looks >= 1.0) {
        double sum = 0.0;
        double prev = speckle_pdf(0.0, looks);
        long n_steps = std::lround(hi / step);
        for (long i = 1; i <= n_steps; ++i) {
            double cur = speckle_pdf(static_cast<double>(i) * step, looks);
            sum += 0.5 * (prev + cur) * step;
            prev = cur;
        }
        return sum;
    }
    double u_hi = std::sqrt(hi);
    double u_step = step;
    auto integrand = [&](double u) {
        // 2 u p(u^2) = 2 L^L u^(2L-1) e^(-L u^2) / Gamma(L); finite at u=0
        // for L = 1/2 (exponent 0), the only sub-unit looks value we test.
        if (u == 0.0) return 2.0 * std::pow(looks, looks) / std::tgamma(looks);
        return 2.0 * u * speckle_pdf(u * u, looks);
    };
    double sum = 0.0;
    double prev = integrand(0.0);
    long n_steps = std::lround(u_hi / u_step);
    for (long i = 1; i <= n_steps; ++i) {
        double cur = integrand(static_cast<double>(i) * u_step);
        sum += 0.5 * (prev + cur) * u_step;
        prev = cur;
    }
    return sum;
}

}  // namespace

TEST_CASE("speckle: zero input stays zero and parameters are validated") {
    Tile zeros(16, 16, 1, TileKind::SarLinear, 0.0f);
    Tile out = simulate_speckle(zeros, {4.0, 1});
    for (auto v : out.data) CHECK(v == 0.0f);
    CHECK(out.kind == TileKind::SarLinear);

    CHECK_THROWS_AS(simulate_speckle(zeros, {0.0, 1}), ConfigError);
    CHECK_THROWS_AS(simulate_speckle(zeros, {-2.0, 1}), ConfigError);
    Tile db(4, 4, 1, TileKind::SarDb);
    CHECK_THROWS_AS(simulate_speckle(db, {4.0, 1}), KindError);
}

TEST_CASE("speckle: L=4 noise has mean 1 and variance 1/4 at a million pixels") {
    Tile ones(1000, 1000, 1, TileKind::SarLinear, 1.0f);
    Tile noisy = simulate_speckle(ones, {4.0, 7});
    double sum = 0, sumsq = 0;
    for (auto v : noisy.data) {
        sum += v;
        sumsq += static_cast<double>(v) * v;
    }
    double n = static_cast<double>(noisy.data.size());
    double mean = sum / n;
    double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean - 1.0) < 0.005);
    CHECK(std::abs(var - 0.25) < 0.01);
}

TEST_CASE("speckle: noise mean stays within 5 sigma for several look counts") {
    for (double looks : {1.0, 4.0, 10.0}) {
        Tile ones(1000, 1000, 1, TileKind::SarLinear, 1.0f);
        Tile noisy = simulate_speckle(ones, {looks, 900 + static_cast<uint64_t>(looks)});
        double sum = 0;
        for (auto v : noisy.data) sum += v;
        double mean = sum / 1e6;
        double se = std::sqrt(1.0 / looks) / 1000.0;
        CHECK(std::abs(mean - 1.0) < 5.0 * se);
    }
}

TEST_CASE("speckle: huge look counts leave the image almost clean") {
    Tile clean(64, 64, 1, TileKind::SarLinear, 0.5f);
    Tile noisy = simulate_speckle(clean, {1e6, 13});
    for (size_t i = 0; i < clean.data.size(); ++i) {
        double rel = std::abs(noisy.data[i] / clean.data[i] - 1.0);
        CHECK(rel < 0.01);
    }
}

TEST_CASE("speckle: realization is deterministic in the seed") {
    Tile clean(32, 32, 1, TileKind::SarLinear, 0.7f);
    Tile a = simulate_speckle(clean, {4.0, 99});
    Tile b = simulate_speckle(clean, {4.0, 99});
    CHECK(a.data == b.data);
    Tile c = simulate_speckle(clean, {4.0, 100});
    CHECK(a.data != c.data);
}

TEST_CASE("speckle: pdf anchor values") {
    CHECK(speckle_pdf(1.0, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(speckle_pdf(0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(speckle_pdf(-0.1, 1.0), DomainError);
    CHECK_THROWS_AS(speckle_pdf(1.0, 0.0), ConfigError);
}

TEST_CASE("speckle: pdf integrates to one for L in {0.5, 1, 4, 16}") {
    for (double looks : {0.5, 1.0, 4.0, 16.0}) {
        double mass = pdf_mass(looks, 50.0, 1e-3);
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("speckle: look estimation recovers the simulation parameter") {
    Tile constant(16, 16, 1, TileKind::SarLinear, 3.0f);
    auto est = estimate_looks(constant);
    CHECK(est.zero_variance);
    CHECK(std::isinf(est.value));

    {
        Tile clean(256, 256, 1, TileKind::SarLinear, 1.0f);
        auto e4 = estimate_looks(simulate_speckle(clean, {4.0, 41}));
        CHECK(!e4.zero_variance);
        CHECK(e4.value > 3.8);
        CHECK(e4.value < 4.2);
    }

    for (double looks : {1.0, 4.0, 10.0}) {
        Tile clean(1000, 1000, 1, TileKind::SarLinear, 2.0f);
        auto est_l = estimate_looks(simulate_speckle(clean, {looks, 51}));
        CHECK(std::abs(est_l.value / looks - 1.0) < 0.05);
    }

    Tile tiny(4, 4, 1, TileKind::SarLinear, 1.0f);
    CHECK_THROWS_AS(estimate_looks(tiny), ArgumentError);
    Tile zero_mean(16, 16, 1, TileKind::SarLinear, 0.0f);
    CHECK_THROWS_AS(estimate_looks(zero_mean), ArgumentError);
}
