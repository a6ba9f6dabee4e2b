#pragma once

// Pluggable latent codec: maps image tiles into the working space of the
// translator and back. Three codecs are provided:
//
//   IDENTITY  - strict no-op, latent = image (factor 1).
//   POOL(f)   - encode by f x f mean pooling, decode by bilinear upsampling.
//               Deterministic and dependency-free; the default for experiments.
//   LEARNED   - tiny convolutional autoencoder trained on a tile corpus.
//
// Codecs are immutable after construction; encode/decode are pure and safe to
// call from multiple threads.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dse/error.hpp"
#include "dse/nn.hpp"
#include "dse/tile.hpp"

#include <json.hpp>

namespace dse {

enum class CodecKind { IDENTITY, POOL, LEARNED };

std::string codec_kind_name(CodecKind kind);
CodecKind codec_kind_from_name(const std::string& name);

// Weights of the LEARNED codec. Encoder: conv -> relu -> mean pool -> conv.
// Decoder: conv -> relu -> nearest upsample -> conv. Hidden width is fixed
// small; the object under test is the diffusion core, not the codec.
struct LearnedCodecNet {
    int image_channels = 0;
    int latent_channels = 0;
    int factor = 1;
    int hidden = 16;

    nn::Conv2d enc1, enc2, dec1, dec2;

    LearnedCodecNet(int image_ch, int latent_ch, int factor_, int hidden_ = 16);

    void init(RngStream& rng);
    std::vector<nn::Param*> params();

    nn::Tensor encode(const nn::Tensor& x) const;
    nn::Tensor decode(const nn::Tensor& z) const;
};

struct LatentCodec {
    CodecKind kind = CodecKind::IDENTITY;
    int spatial_factor = 1;
    // Channel count of latents. 0 means "same as the input tile" (IDENTITY
    // and POOL pass channels through); LEARNED fixes it at construction.
    int latent_channels = 0;
    int image_channels = 0;  // LEARNED only; 0 otherwise
    std::shared_ptr<LearnedCodecNet> net;  // LEARNED only
};

LatentCodec make_identity_codec();
LatentCodec make_pool_codec(int factor);

// Encode a tile into a latent tensor. Tile dims must be divisible by the
// codec's spatial factor; LEARNED additionally requires the tile channel
// count it was trained with. Violations raise ShapeError.
nn::Tensor encode(const LatentCodec& codec, const Tile& tile);

// Decode a latent back to a tile of the given kind. The latent's channel
// count must match what encode produces for this codec.
Tile decode(const LatentCodec& codec, const nn::Tensor& latent,
            TileKind kind = TileKind::EoRgb);

struct CodecTrainConfig {
    int epochs = 30;
    double lr = 1e-3;
    int latent_channels = 8;
    int factor = 2;
    int hidden = 16;
    uint64_t seed = 0;
};

struct CodecTrainResult {
    LatentCodec codec;
    std::vector<double> loss_curve;  // mean reconstruction MSE per epoch
};

// Train a LEARNED codec on a tile corpus by plain MSE reconstruction.
// Deterministic for a fixed seed. Non-finite loss raises TrainingError;
// an empty corpus or inconsistent tile shapes raise ArgumentError/ShapeError.
CodecTrainResult train_codec(const std::vector<Tile>& corpus, const CodecTrainConfig& config);

// Serialization helpers for the shared model container. The descriptor holds
// architecture only; LEARNED weights travel as named parameter blobs.
nlohmann::json codec_descriptor(const LatentCodec& codec);
LatentCodec codec_from_descriptor(const nlohmann::json& j);
std::vector<nn::Param*> codec_params(const LatentCodec& codec);

}  // namespace dse
