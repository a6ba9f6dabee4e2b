#pragma once

// Blind-spot despeckling in the log domain. Multiplicative speckle becomes
// additive after a log transform, which restores the signal-independence that
// blind-spot estimators assume. Two variants:
//
//   despeckle_kernel - non-trainable: a bank of center-zero kernels averages
//                      log-neighbourhoods; per pixel either the kernel with
//                      minimum local log-variance wins or all are averaged.
//   despeckle_model  - trainable: a small conv regressor trained to predict
//                      masked pixels from their (replaced) context, applied
//                      full-image at inference.
//
// Both estimate log X up to the mean of log-speckle. When the look count L is
// known the analytic offset digamma(L) - log L is removed; otherwise the
// empirical masked-residual mean is used, which is exactly zero for constant
// tiles (so constants round-trip) and near zero for homogeneous noise.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dse/error.hpp"
#include "dse/nn.hpp"
#include "dse/rng.hpp"
#include "dse/tile.hpp"

namespace dse {

// Value added before taking logs so zero-valued pixels stay finite.
inline constexpr double kLogFloor = 1e-6;

struct SpatialKernel {
    int size = 0;            // odd side length
    std::vector<double> w;   // size*size row-major weights, center 0, sum 1
};

enum class KernelSelection { MIN_LOCAL_VARIANCE, AVERAGE };

struct KernelBank {
    std::vector<SpatialKernel> kernels;
    KernelSelection selection = KernelSelection::MIN_LOCAL_VARIANCE;
};

// Four directional 1x5 kernels (horizontal, vertical, both diagonals) plus a
// 5x5 donut, all with zero center weight.
KernelBank make_default_kernel_bank();

// Checks every kernel: odd size, non-negative weights, zero center, sum 1.
// Raises ConfigError on violation or empty bank.
void validate_kernel_bank(const KernelBank& bank);

// Kernel-bank despeckling: exp(conv(log(noisy + floor), k*) - bias), borders
// by edge replication. The center pixel never contributes to its own
// estimate. `looks` selects the analytic bias; absent, the empirical
// masked-residual mean is used. Requires SAR_LINEAR input.
Tile despeckle_kernel(const Tile& noisy, const KernelBank& bank,
                      std::optional<double> looks = std::nullopt);

enum class MaskPolicy { NEIGHBOR_SHUFFLE, ZERO };

struct BlindSpotMask {
    std::vector<int> indices;  // spatial indices y*width+x, strictly increasing
    MaskPolicy policy = MaskPolicy::NEIGHBOR_SHUFFLE;
};

// Samples a mask covering round(fraction * H * W) distinct positions
// (fraction must be in (0, 0.5], at least one position).
BlindSpotMask sample_mask(int height, int width, double fraction, MaskPolicy policy,
                          RngStream& rng);

// Replaces masked positions in a log-domain image. NEIGHBOR_SHUFFLE copies a
// randomly chosen unmasked neighbour within a 5x5 window (donor choice is
// value-independent, so the replaced image carries no information about the
// original masked values); ZERO writes 0. All channels share the mask.
nn::Tensor apply_mask_replacement(const nn::Tensor& log_img, const BlindSpotMask& mask,
                                  RngStream& rng);

// Three-layer conv regressor operating on log-domain images.
struct DenoiserModel {
    int channels = 0;
    int hidden = 0;

    nn::Conv2d c1, c2, c3;

    DenoiserModel(int channels_, int hidden_);
    void init(RngStream& rng);
    std::vector<nn::Param*> params();
    nn::Tensor apply(const nn::Tensor& log_img) const;
};

struct BlindspotTrainConfig {
    double mask_fraction = 0.1;
    int epochs = 10;
    double lr = 1e-3;
    uint64_t seed = 0;
    MaskPolicy policy = MaskPolicy::NEIGHBOR_SHUFFLE;
    int hidden = 16;
};

struct BlindspotTrainResult {
    DenoiserModel model;
    std::vector<double> loss_curve;  // mean masked-position MSE per epoch
};

// Self-supervised training: per tile, mask a fraction of positions, replace
// them per policy, and regress the original log values at masked positions
// only. Deterministic for a fixed seed. A non-finite loss raises
// TrainingError naming the last finite epoch.
BlindspotTrainResult train_blindspot(const std::vector<Tile>& corpus,
                                     const BlindspotTrainConfig& config);

// Full-image prediction in log domain, exponentiated back; output is
// non-negative by construction. Channel mismatch raises ShapeError.
Tile despeckle_model(const Tile& noisy, const DenoiserModel& model,
                     std::optional<double> looks = std::nullopt);

}  // namespace dse
