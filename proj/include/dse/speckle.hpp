#pragma once

#include <cstdint>

#include "dse/tile.hpp"

namespace dse {

struct SpeckleParams {
    double looks = 1.0;  // L > 0
    uint64_t seed = 0;
};

// Multiplicative speckle: Y = X * N with N i.i.d. Gamma(shape L, rate L),
// so E[N] = 1 and Var[N] = 1/L. The noise stream is indexed per sample,
// making the realization independent of evaluation order.
Tile simulate_speckle(const Tile& clean, const SpeckleParams& params);

// Density of the unit-mean multi-look speckle distribution:
// p(n) = L^L n^(L-1) e^(-L n) / Gamma(L).
double speckle_pdf(double n, double looks);

struct LooksEstimate {
    double value = 0.0;        // +infinity when the region variance is zero
    bool zero_variance = false;
};

// Method-of-moments equivalent-number-of-looks estimate over a homogeneous
// region: L_hat = mean^2 / variance.
LooksEstimate estimate_looks(const Tile& region);

}  // namespace dse
