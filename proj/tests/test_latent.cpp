#include <doctest.h>

#include <cmath>
#include <vector>

#include "dse/error.hpp"
#include "dse/latent.hpp"
#include "dse/metrics.hpp"
#include "dse/rng.hpp"
#include "dse/synthdata.hpp"
#include "dse/tile.hpp"

using namespace dse;

namespace {

Tile random_eo(uint32_t w, uint32_t h, uint64_t seed) {
    Tile t(w, h, 3, TileKind::EoRgb);
    RngStream rng(seed);
    for (auto& v : t.data) v = static_cast<float>(rng.uniform01());
    return t;
}

double tile_mean(const Tile& t) {
    double s = 0;
    for (auto v : t.data) s += v;
    return s / static_cast<double>(t.data.size());
}

}  // namespace

TEST_CASE("latent: identity codec is a strict no-op") {
    auto codec = make_identity_codec();
    Tile t = random_eo(6, 6, 1);
    auto z = encode(codec, t);
    CHECK(z.c == 3);
    CHECK(z.h == 6);
    CHECK(z.w == 6);
    Tile back = decode(codec, z, TileKind::EoRgb);
    CHECK(back.data == t.data);
    CHECK(back.kind == TileKind::EoRgb);
}

TEST_CASE("latent: pool codec averages blocks and upsamples smoothly") {
    auto codec = make_pool_codec(2);

    Tile constant(8, 8, 3, TileKind::EoRgb, 0.37f);
    auto zc = encode(codec, constant);
    Tile back = decode(codec, zc);
    for (auto v : back.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-7));

    Tile t(4, 4, 1, TileKind::EoRgb);
    for (int i = 0; i < 16; ++i) t.data[i] = static_cast<float>(i) / 16.0f;
    auto z = encode(codec, t);
    REQUIRE(z.h == 2);
    REQUIRE(z.w == 2);
    double want = (t.data[0] + t.data[1] + t.data[4] + t.data[5]) / 4.0;
    CHECK(z.at(0, 0, 0) == doctest::Approx(want).epsilon(1e-7));

    // Spatial dims must divide by the factor.
    Tile odd(5, 4, 1, TileKind::EoRgb);
    CHECK_THROWS_AS(encode(codec, odd), ShapeError);
}

TEST_CASE("latent: pool round-trip preserves the global mean") {
    for (int factor : {2, 4}) {
        auto codec = make_pool_codec(factor);
        Tile t = random_eo(16, 16, 7 + factor);
        Tile rt = decode(codec, encode(codec, t));
        CHECK(tile_mean(rt) == doctest::Approx(tile_mean(t)).epsilon(1e-6));
    }
}

TEST_CASE("latent: encode halves spatial dims per factor step") {
    auto codec = make_pool_codec(4);
    Tile t = random_eo(16, 12, 3);
    auto z = encode(codec, t);
    CHECK(z.h == 3);
    CHECK(z.w == 4);
    CHECK(z.c == 3);
}

TEST_CASE("latent: learned codec fits a constant corpus to near zero error") {
    std::vector<Tile> corpus;
    for (int i = 0; i < 8; ++i) corpus.push_back(Tile(8, 8, 3, TileKind::EoRgb, 0.5f));

    CodecTrainConfig cfg;
    cfg.epochs = 200;
    cfg.lr = 3e-3;
    cfg.latent_channels = 4;
    cfg.factor = 2;
    cfg.hidden = 8;
    cfg.seed = 3;
    auto result = train_codec(corpus, cfg);
    REQUIRE(!result.loss_curve.empty());
    CHECK(result.loss_curve.back() < 1e-4);

    Tile rt = decode(result.codec, encode(result.codec, corpus[0]));
    double mse = 0;
    for (size_t i = 0; i < rt.data.size(); ++i) {
        double r = rt.data[i] - corpus[0].data[i];
        mse += r * r;
    }
    CHECK(mse / rt.data.size() < 1e-3);
}

TEST_CASE("latent: codec training is seed-deterministic") {
    std::vector<Tile> corpus;
    for (int i = 0; i < 4; ++i) {
        SceneSpec spec;
        spec.size = 16;
        spec.seed = 40 + i;
        corpus.push_back(gen_scene(spec).eo);
    }
    CodecTrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 11;
    auto a = train_codec(corpus, cfg);
    auto b = train_codec(corpus, cfg);
    CHECK(a.loss_curve == b.loss_curve);

    CHECK_THROWS_AS(train_codec({}, cfg), ArgumentError);
}

TEST_CASE("latent: learned codec beats the pool baseline on scene tiles") {
    std::vector<Tile> train_set, test_set;
    for (int i = 0; i < 60; ++i) {
        SceneSpec spec;
        spec.size = 32;
        spec.seed = 500 + i;
        spec.n_timesteps = 0;
        (i < 48 ? train_set : test_set).push_back(gen_scene(spec).eo);
    }

    CodecTrainConfig cfg;
    cfg.epochs = 40;
    cfg.latent_channels = 8;
    cfg.factor = 2;
    cfg.seed = 9;
    auto learned = train_codec(train_set, cfg);
    auto pool = make_pool_codec(2);

    double learned_psnr = 0, pool_psnr = 0;
    for (const Tile& t : test_set) {
        learned_psnr += psnr(decode(learned.codec, encode(learned.codec, t)), t, 1.0);
        pool_psnr += psnr(decode(pool, encode(pool, t)), t, 1.0);
    }
    learned_psnr /= test_set.size();
    pool_psnr /= test_set.size();
    INFO("learned ", learned_psnr, " dB vs pool ", pool_psnr, " dB");
    CHECK(learned_psnr > pool_psnr);
}

TEST_CASE("latent: descriptors round-trip codec construction") {
    auto pool = make_pool_codec(2);
    auto back = codec_from_descriptor(codec_descriptor(pool));
    CHECK(back.kind == CodecKind::POOL);
    CHECK(back.spatial_factor == 2);

    auto id = make_identity_codec();
    CHECK(codec_from_descriptor(codec_descriptor(id)).kind == CodecKind::IDENTITY);
    CHECK(codec_params(pool).empty());

    std::vector<Tile> corpus = {Tile(8, 8, 3, TileKind::EoRgb, 0.4f)};
    CodecTrainConfig cfg;
    cfg.epochs = 1;
    auto learned = train_codec(corpus, cfg).codec;
    auto desc = codec_descriptor(learned);
    auto rebuilt = codec_from_descriptor(desc);
    CHECK(rebuilt.kind == CodecKind::LEARNED);
    CHECK(rebuilt.spatial_factor == learned.spatial_factor);
    CHECK(rebuilt.latent_channels == learned.latent_channels);
    CHECK(!codec_params(rebuilt).empty());
    CHECK(nn::param_count(codec_params(rebuilt)) == nn::param_count(codec_params(learned)));
}
