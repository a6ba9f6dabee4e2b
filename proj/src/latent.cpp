#include "dse/latent.hpp"

#include <cmath>

namespace dse {

std::string codec_kind_name(CodecKind kind) {
    switch (kind) {
        case CodecKind::IDENTITY: return "identity";
        case CodecKind::POOL: return "pool";
        case CodecKind::LEARNED: return "learned";
    }
    throw ArgumentError("unknown codec kind");
}

CodecKind codec_kind_from_name(const std::string& name) {
    if (name == "identity") return CodecKind::IDENTITY;
    if (name == "pool") return CodecKind::POOL;
    if (name == "learned") return CodecKind::LEARNED;
    throw FormatError("unknown codec kind name: " + name);
}

// ---- LearnedCodecNet -----------------------------------------------------------

LearnedCodecNet::LearnedCodecNet(int image_ch, int latent_ch, int factor_, int hidden_)
    : image_channels(image_ch), latent_channels(latent_ch), factor(factor_), hidden(hidden_),
      enc1("codec.enc1", image_ch, hidden_, 3),
      enc2("codec.enc2", hidden_, latent_ch, 3),
      dec1("codec.dec1", latent_ch, hidden_, 3),
      dec2("codec.dec2", hidden_, image_ch, 3) {
    if (image_ch < 1 || latent_ch < 1 || factor_ < 1 || hidden_ < 1)
        throw ConfigError("learned codec dims must be positive");
}

void LearnedCodecNet::init(RngStream& rng) {
    enc1.init(rng);
    enc2.init(rng);
    dec1.init(rng);
    dec2.init(rng);
}

std::vector<nn::Param*> LearnedCodecNet::params() {
    return {&enc1.weight, &enc1.bias, &enc2.weight, &enc2.bias,
            &dec1.weight, &dec1.bias, &dec2.weight, &dec2.bias};
}

nn::Tensor LearnedCodecNet::encode(const nn::Tensor& x) const {
    nn::ReLU relu;
    nn::Tensor h = relu.apply(enc1.apply(x));
    if (factor > 1) h = nn::avgpool(h, factor);
    return enc2.apply(h);
}

nn::Tensor LearnedCodecNet::decode(const nn::Tensor& z) const {
    nn::ReLU relu;
    nn::Tensor h = relu.apply(dec1.apply(z));
    if (factor > 1) h = nn::upsample_nearest(h, factor);
    return dec2.apply(h);
}

// ---- Codec construction ---------------------------------------------------------

LatentCodec make_identity_codec() { return LatentCodec{}; }

LatentCodec make_pool_codec(int factor) {
    if (factor < 1) throw ConfigError("pool factor must be >= 1");
    LatentCodec c;
    c.kind = CodecKind::POOL;
    c.spatial_factor = factor;
    return c;
}

// ---- encode / decode ------------------------------------------------------------

static nn::Tensor tile_to_tensor(const Tile& tile) {
    nn::Tensor t(tile.channels, tile.height, tile.width);
    for (size_t i = 0; i < tile.data.size(); ++i) t.v[i] = tile.data[i];
    return t;
}

static Tile tensor_to_tile(const nn::Tensor& t, TileKind kind) {
    Tile tile(static_cast<uint32_t>(t.w), static_cast<uint32_t>(t.h),
              static_cast<uint32_t>(t.c), kind);
    for (size_t i = 0; i < tile.data.size(); ++i) tile.data[i] = static_cast<float>(t.v[i]);
    return tile;
}

nn::Tensor encode(const LatentCodec& codec, const Tile& tile) {
    if (tile.height % codec.spatial_factor != 0 || tile.width % codec.spatial_factor != 0)
        throw ShapeError("tile dims not divisible by codec spatial factor");
    switch (codec.kind) {
        case CodecKind::IDENTITY:
            return tile_to_tensor(tile);
        case CodecKind::POOL:
            return nn::avgpool(tile_to_tensor(tile), codec.spatial_factor);
        case CodecKind::LEARNED:
            if (!codec.net) throw ConfigError("learned codec has no network");
            if (static_cast<int>(tile.channels) != codec.image_channels)
                throw ShapeError("tile channels do not match learned codec input");
            return codec.net->encode(tile_to_tensor(tile));
    }
    throw ArgumentError("unknown codec kind");
}

Tile decode(const LatentCodec& codec, const nn::Tensor& latent, TileKind kind) {
    switch (codec.kind) {
        case CodecKind::IDENTITY:
            return tensor_to_tile(latent, kind);
        case CodecKind::POOL:
            return tensor_to_tile(
                codec.spatial_factor > 1 ? nn::upsample_bilinear(latent, codec.spatial_factor)
                                         : latent,
                kind);
        case CodecKind::LEARNED:
            if (!codec.net) throw ConfigError("learned codec has no network");
            if (latent.c != codec.latent_channels)
                throw ShapeError("latent channels do not match learned codec");
            return tensor_to_tile(codec.net->decode(latent), kind);
    }
    throw ArgumentError("unknown codec kind");
}

// ---- Training -------------------------------------------------------------------

CodecTrainResult train_codec(const std::vector<Tile>& corpus, const CodecTrainConfig& config) {
    if (corpus.empty()) throw ArgumentError("codec training corpus is empty");
    if (config.epochs < 1) throw ConfigError("codec epochs must be >= 1");
    const Tile& first = corpus.front();
    for (const Tile& t : corpus) {
        if (t.channels != first.channels) throw ShapeError("codec corpus channel mismatch");
        if (t.height % config.factor != 0 || t.width % config.factor != 0)
            throw ShapeError("codec corpus tile dims not divisible by factor");
    }

    auto net = std::make_shared<LearnedCodecNet>(first.channels, config.latent_channels,
                                                 config.factor, config.hidden);
    RngStream rng(config.seed);
    net->init(rng);
    std::vector<nn::Param*> params = net->params();
    nn::Adam opt(config.lr);
    nn::ReLU enc_relu, dec_relu;

    std::vector<double> curve;
    curve.reserve(config.epochs);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double loss_sum = 0.0;
        for (const Tile& tile : corpus) {
            const nn::Tensor x = tile_to_tensor(tile);

            nn::Tensor h1 = enc_relu.train_forward(net->enc1.train_forward(x));
            nn::Tensor hp = config.factor > 1 ? nn::avgpool(h1, config.factor) : h1;
            nn::Tensor z = net->enc2.train_forward(hp);
            nn::Tensor h2 = dec_relu.train_forward(net->dec1.train_forward(z));
            nn::Tensor hu = config.factor > 1 ? nn::upsample_nearest(h2, config.factor) : h2;
            nn::Tensor y = net->dec2.train_forward(hu);

            // MSE over all pixels; gradient is 2 (y - x) / N.
            const double inv_n = 1.0 / static_cast<double>(y.size());
            nn::Tensor dy(y.c, y.h, y.w);
            double loss = 0.0;
            for (size_t i = 0; i < y.v.size(); ++i) {
                const double r = y.v[i] - x.v[i];
                loss += r * r;
                dy.v[i] = 2.0 * r * inv_n;
            }
            loss *= inv_n;
            if (!std::isfinite(loss)) throw TrainingError("codec training loss is not finite");
            loss_sum += loss;

            for (nn::Param* p : params) p->zero_grad();
            nn::Tensor g = net->dec2.backward(dy);
            if (config.factor > 1) g = nn::upsample_nearest_backward(g, config.factor);
            g = net->dec1.backward(dec_relu.backward(g));
            g = net->enc2.backward(g);
            if (config.factor > 1) g = nn::avgpool_backward(g, config.factor);
            net->enc1.backward(enc_relu.backward(g));
            opt.step(params);
        }
        curve.push_back(loss_sum / static_cast<double>(corpus.size()));
    }

    LatentCodec codec;
    codec.kind = CodecKind::LEARNED;
    codec.spatial_factor = config.factor;
    codec.latent_channels = config.latent_channels;
    codec.image_channels = first.channels;
    codec.net = net;
    return CodecTrainResult{std::move(codec), std::move(curve)};
}

// ---- Serialization --------------------------------------------------------------

nlohmann::json codec_descriptor(const LatentCodec& codec) {
    nlohmann::json j;
    j["kind"] = codec_kind_name(codec.kind);
    j["spatial_factor"] = codec.spatial_factor;
    j["latent_channels"] = codec.latent_channels;
    if (codec.kind == CodecKind::LEARNED) {
        j["image_channels"] = codec.image_channels;
        j["hidden"] = codec.net ? codec.net->hidden : 0;
    }
    return j;
}

LatentCodec codec_from_descriptor(const nlohmann::json& j) {
    const CodecKind kind = codec_kind_from_name(j.at("kind").get<std::string>());
    switch (kind) {
        case CodecKind::IDENTITY:
            return make_identity_codec();
        case CodecKind::POOL:
            return make_pool_codec(j.at("spatial_factor").get<int>());
        case CodecKind::LEARNED: {
            LatentCodec c;
            c.kind = CodecKind::LEARNED;
            c.spatial_factor = j.at("spatial_factor").get<int>();
            c.latent_channels = j.at("latent_channels").get<int>();
            c.image_channels = j.at("image_channels").get<int>();
            c.net = std::make_shared<LearnedCodecNet>(c.image_channels, c.latent_channels,
                                                      c.spatial_factor, j.at("hidden").get<int>());
            return c;
        }
    }
    throw FormatError("unknown codec kind in descriptor");
}

std::vector<nn::Param*> codec_params(const LatentCodec& codec) {
    if (codec.kind != CodecKind::LEARNED || !codec.net) return {};
    return codec.net->params();
}

}  // namespace dse
