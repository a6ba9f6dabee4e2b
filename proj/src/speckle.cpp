#include "dse/speckle.hpp"

#include <cmath>
#include <limits>

#include "dse/rng.hpp"

namespace dse {

Tile simulate_speckle(const Tile& clean, const SpeckleParams& params) {
    if (!(params.looks > 0.0)) throw ConfigError("speckle looks must be > 0");
    if (clean.kind != TileKind::SarLinear)
        throw KindError(std::string("simulate_speckle expects SAR_LINEAR, got ") +
                        tile_kind_name(clean.kind));

    Tile out = clean;
    for (size_t i = 0; i < out.data.size(); ++i) {
        RngStream rng(params.seed, i);
        out.data[i] = static_cast<float>(
            static_cast<double>(clean.data[i]) * rng.gamma(params.looks, params.looks));
    }
    return out;
}

double speckle_pdf(double n, double looks) {
    if (!(looks > 0.0)) throw ConfigError("speckle looks must be > 0");
    if (n < 0.0) throw DomainError("speckle_pdf domain is n >= 0");
    if (n == 0.0) {
        if (looks > 1.0) return 0.0;
        if (looks == 1.0) return 1.0;
        return std::numeric_limits<double>::infinity();
    }
    return std::exp(looks * std::log(looks) + (looks - 1.0) * std::log(n) -
                    looks * n - std::lgamma(looks));
}

LooksEstimate estimate_looks(const Tile& region) {
    const size_t n = region.data.size();
    if (n < 100) throw ArgumentError("estimate_looks needs at least 100 pixels");

    double mean = 0.0;
    for (float v : region.data) mean += v;
    mean /= static_cast<double>(n);
    if (!(mean > 0.0)) throw ArgumentError("estimate_looks needs a positive-mean region");

    double ss = 0.0;
    for (float v : region.data) {
        const double d = static_cast<double>(v) - mean;
        ss += d * d;
    }
    const double var = ss / static_cast<double>(n - 1);

    LooksEstimate est;
    if (var == 0.0) {
        est.value = std::numeric_limits<double>::infinity();
        est.zero_variance = true;
    } else {
        est.value = mean * mean / var;
    }
    return est;
}

}  // namespace dse
