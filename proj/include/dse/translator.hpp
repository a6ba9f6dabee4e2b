#pragma once

// SAR-to-EO translation: the displacement predictor network, its training
// objective and loop, the end-to-end translate pipeline, multi-temporal
// conditioning, and ensemble variance maps.
//
// The forward bridge gives x_t = x_0 + D with D = m_t (y - x_0) + sqrt(delta_t) eps,
// so the network regresses the total displacement D; recovering the clean
// latent is then the subtraction x0_hat = x_t - D_hat.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dse/bridge.hpp"
#include "dse/despeckle.hpp"
#include "dse/error.hpp"
#include "dse/latent.hpp"
#include "dse/nn.hpp"
#include "dse/tile.hpp"

#include <json.hpp>

namespace dse {

// Elementwise training target D = m_t (y - x0) + sqrt(delta_t) eps.
// t=0 gives exactly 0; t=T gives exactly y - x0.
std::vector<double> training_target(const BridgeSchedule& schedule,
                                    const std::vector<double>& x0,
                                    const std::vector<double>& y, int t,
                                    const std::vector<double>& eps);

// Displacement predictor interface: (x_t, t, conditioning stack) -> D_hat of
// x_t's shape. apply() is read-only and thread-safe on a frozen model;
// train_forward/backward mutate internal caches and gradients and are
// single-writer.
class Predictor {
public:
    virtual ~Predictor() = default;
    virtual nn::Tensor apply(const nn::Tensor& x_t, int t, const nn::Tensor* context) const = 0;
    virtual nn::Tensor train_forward(const nn::Tensor& x_t, int t, const nn::Tensor* context) = 0;
    virtual nn::Tensor backward(const nn::Tensor& d_out) = 0;
    virtual std::vector<nn::Param*> params() = 0;
    virtual void init(RngStream& rng) = 0;
    virtual nlohmann::json arch_json() const = 0;
    virtual int x_channels() const = 0;
    virtual int context_channels() const = 0;
};

// Rebuilds a zero-weight predictor from its architecture descriptor.
std::shared_ptr<Predictor> make_predictor(const nlohmann::json& arch);

// Conv encoder-decoder, 2 down / 2 up stages with skip connections, width
// `width`, sinusoidal time embedding added per block through a small linear
// head. Input spatial dims must be divisible by 4. Freshly constructed
// weights are all zero (a zero predictor); call init() to randomize.
struct UNetArch {
    int x_channels = 0;
    int context_channels = 0;
    int width = 32;
    int time_dim = 32;
};

class ConvUNetPredictor : public Predictor {
public:
    explicit ConvUNetPredictor(const UNetArch& arch);

    nn::Tensor apply(const nn::Tensor& x_t, int t, const nn::Tensor* context) const override;
    nn::Tensor train_forward(const nn::Tensor& x_t, int t, const nn::Tensor* context) override;
    nn::Tensor backward(const nn::Tensor& d_out) override;
    std::vector<nn::Param*> params() override;
    void init(RngStream& rng) override;
    nlohmann::json arch_json() const override;
    int x_channels() const override { return arch_.x_channels; }
    int context_channels() const override { return arch_.context_channels; }

private:
    nn::Tensor assemble_input(const nn::Tensor& x_t, const nn::Tensor* context) const;

    UNetArch arch_;
    nn::Conv2d conv_a_, conv_b_, conv_c_, conv_d_, conv_e_, conv_out_;
    nn::Linear time_a_, time_b_, time_c_, time_d_, time_e_;
    nn::ReLU relu_a_, relu_b_, relu_c_, relu_d_, relu_e_;
};

// Two-conv toy predictor (a few dozen parameters) used for finite-difference
// gradient verification; same interface, no downsampling.
struct TinyArch {
    int x_channels = 1;
    int context_channels = 0;
    int hidden = 2;
    int time_dim = 4;
};

class TinyPredictor : public Predictor {
public:
    explicit TinyPredictor(const TinyArch& arch);

    nn::Tensor apply(const nn::Tensor& x_t, int t, const nn::Tensor* context) const override;
    nn::Tensor train_forward(const nn::Tensor& x_t, int t, const nn::Tensor* context) override;
    nn::Tensor backward(const nn::Tensor& d_out) override;
    std::vector<nn::Param*> params() override;
    void init(RngStream& rng) override;
    nlohmann::json arch_json() const override;
    int x_channels() const override { return arch_.x_channels; }
    int context_channels() const override { return arch_.context_channels; }

private:
    TinyArch arch_;
    nn::Conv2d c1_, c2_;
    nn::Linear time_;
    nn::ReLU relu_;
};

// Optional SAR preprocessing ahead of encoding: despeckle with the given
// kernel bank (analytic bias when `looks` is set) before normalization.
struct SarPreproc {
    const KernelBank* bank = nullptr;
    std::optional<double> looks;
};

// Shared input chain: [VV,VH] tile -> 3-channel composite -> optional
// despeckle -> percentile normalization. Input must be 2-channel SAR_LINEAR.
Tile preprocess_sar(const Tile& sar, const SarPreproc& pre = {});

// Encodes each acquisition through the full preprocessing chain and
// concatenates the latents along channels, order preserved. A single tile
// yields exactly the conditioning used by the non-multi-temporal path.
nn::Tensor stack_context(const std::vector<Tile>& sar_tiles, const LatentCodec& codec,
                         const SarPreproc& pre = {});

// One training scene: one or more co-registered SAR acquisitions (first is
// the translation source) and the clean EO target.
struct TrainPair {
    std::vector<Tile> sar;
    Tile eo;
};

struct TranslatorTrainConfig {
    int epochs = 10;
    int batch_size = 8;
    double lr = 2e-4;
    uint64_t seed = 0;
    int width = 32;
    int time_dim = 32;
    EpsSource::Kind eps_kind = EpsSource::Kind::TargetEmpirical;
    double eps_scale = 0.1;
};

// Everything needed to run translation: frozen predictor, codec, bridge
// tables, and the reverse-noise source (including the empirical pool built
// from training targets). This is also the unit of serialization.
struct TranslatorModel {
    std::shared_ptr<Predictor> predictor;
    LatentCodec codec;
    BridgeSchedule schedule;
    EpsSource eps;
    int context_count = 1;
};

struct TranslatorTrainResult {
    TranslatorModel model;
    std::vector<double> loss_curve;  // mean displacement MSE per epoch
};

// Trains the displacement predictor: per example, t uniform in [1,T], eps
// drawn unscaled from the configured source, loss = MSE(predictor(x_t,t,ctx),
// training_target). Deterministic per seed. Non-finite loss raises
// TrainingError naming the step index.
TranslatorTrainResult train_translator(const std::vector<TrainPair>& pairs,
                                       const LatentCodec& codec,
                                       const BridgeSchedule& schedule,
                                       const TranslatorTrainConfig& config,
                                       const SarPreproc& pre = {});

// Full pipeline: compose -> optional despeckle -> normalize -> encode ->
// reverse_sample anchored at the SAR latent -> decode -> clamp to [0,1].
// `acquisitions` supplies the conditioning stack for multi-temporal models
// (defaults to the input tile alone); its length must match the model's
// context count. Deterministic when eps.scale = 0 or the seed is fixed.
Tile translate(const Tile& sar, const TranslatorModel& model, const StepSchedule& steps,
               const EpsSource& eps, uint64_t seed, const SarPreproc& pre = {},
               const std::vector<Tile>* acquisitions = nullptr);

struct EnsembleResult {
    std::vector<Tile> samples;  // K translations, seeds base_seed + k
    Tile mean;                  // pixelwise mean, EO_RGB
    Tile variance_map;          // per-pixel sample variance averaged over channels
};

// K independently seeded translations plus their mean and variance map.
// Variance is the population variance over the K samples, so K = 1 (or a
// deterministic sampler) gives an all-zero map. K < 1 raises ArgumentError.
EnsembleResult ensemble_translate(const Tile& sar, const TranslatorModel& model,
                                  const StepSchedule& steps, const EpsSource& eps, int k_samples,
                                  uint64_t base_seed, const SarPreproc& pre = {},
                                  const std::vector<Tile>* acquisitions = nullptr);

}  // namespace dse
