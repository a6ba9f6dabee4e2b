#include "dse/translator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dse {

namespace {

void add_channel_bias(nn::Tensor& t, const std::vector<double>& bias) {
    for (int c = 0; c < t.c; ++c) {
        double* p = t.ch(c);
        for (size_t i = 0; i < t.plane(); ++i) p[i] += bias[c];
    }
}

std::vector<double> channel_sums(const nn::Tensor& t) {
    std::vector<double> s(t.c, 0.0);
    for (int c = 0; c < t.c; ++c) {
        const double* p = t.ch(c);
        for (size_t i = 0; i < t.plane(); ++i) s[c] += p[i];
    }
    return s;
}

// Splits dy into the gradients of concat_channels(a, b) with a having c0 channels.
std::pair<nn::Tensor, nn::Tensor> split_channels(const nn::Tensor& t, int c0) {
    nn::Tensor a(c0, t.h, t.w), b(t.c - c0, t.h, t.w);
    std::copy(t.v.begin(), t.v.begin() + static_cast<ptrdiff_t>(a.size()), a.v.begin());
    std::copy(t.v.begin() + static_cast<ptrdiff_t>(a.size()), t.v.end(), b.v.begin());
    return {std::move(a), std::move(b)};
}

void add_into(nn::Tensor& dst, const nn::Tensor& src) {
    for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
}

}  // namespace

// ---- Training target ---------------------------------------------------------------

std::vector<double> training_target(const BridgeSchedule& schedule,
                                    const std::vector<double>& x0,
                                    const std::vector<double>& y, int t,
                                    const std::vector<double>& eps) {
    if (x0.size() != y.size() || x0.size() != eps.size())
        throw ShapeError("training_target inputs must have equal length");
    if (t < 0 || t > schedule.total_steps)
        throw ArgumentError("step index out of range in training_target");
    const double m = schedule.m[t];
    const double sd = std::sqrt(schedule.delta[t]);
    std::vector<double> d(x0.size());
    for (size_t i = 0; i < d.size(); ++i) d[i] = m * (y[i] - x0[i]) + sd * eps[i];
    return d;
}

// ---- ConvUNetPredictor ----------------------------------------------------------------

ConvUNetPredictor::ConvUNetPredictor(const UNetArch& arch)
    : arch_(arch),
      conv_a_("unet.a", arch.x_channels + arch.context_channels, arch.width, 3),
      conv_b_("unet.b", arch.width, 2 * arch.width, 3),
      conv_c_("unet.c", 2 * arch.width, 2 * arch.width, 3),
      conv_d_("unet.d", 4 * arch.width, arch.width, 3),
      conv_e_("unet.e", 2 * arch.width, arch.width, 3),
      conv_out_("unet.out", arch.width, arch.x_channels, 3),
      time_a_("unet.ta", arch.time_dim, arch.width),
      time_b_("unet.tb", arch.time_dim, 2 * arch.width),
      time_c_("unet.tc", arch.time_dim, 2 * arch.width),
      time_d_("unet.td", arch.time_dim, arch.width),
      time_e_("unet.te", arch.time_dim, arch.width) {
    if (arch.x_channels < 1 || arch.context_channels < 0 || arch.width < 1)
        throw ConfigError("predictor channel counts must be positive");
    if (arch.time_dim < 2 || arch.time_dim % 2 != 0)
        throw ConfigError("predictor time_dim must be even and >= 2");
}

void ConvUNetPredictor::init(RngStream& rng) {
    conv_a_.init(rng);
    conv_b_.init(rng);
    conv_c_.init(rng);
    conv_d_.init(rng);
    conv_e_.init(rng);
    // The output projection stays zero (as constructed) so a fresh model
    // predicts zero displacement: reverse sampling then starts from the
    // stable identity trajectory instead of random displacements.
    time_a_.init(rng);
    time_b_.init(rng);
    time_c_.init(rng);
    time_d_.init(rng);
    time_e_.init(rng);
}

std::vector<nn::Param*> ConvUNetPredictor::params() {
    return {&conv_a_.weight, &conv_a_.bias, &conv_b_.weight, &conv_b_.bias,
            &conv_c_.weight, &conv_c_.bias, &conv_d_.weight, &conv_d_.bias,
            &conv_e_.weight, &conv_e_.bias, &conv_out_.weight, &conv_out_.bias,
            &time_a_.weight, &time_a_.bias, &time_b_.weight, &time_b_.bias,
            &time_c_.weight, &time_c_.bias, &time_d_.weight, &time_d_.bias,
            &time_e_.weight, &time_e_.bias};
}

nlohmann::json ConvUNetPredictor::arch_json() const {
    return {{"type", "conv_unet"},
            {"x_channels", arch_.x_channels},
            {"context_channels", arch_.context_channels},
            {"width", arch_.width},
            {"time_dim", arch_.time_dim}};
}

nn::Tensor ConvUNetPredictor::assemble_input(const nn::Tensor& x_t,
                                             const nn::Tensor* context) const {
    if (x_t.c != arch_.x_channels) throw ShapeError("predictor x_t channel mismatch");
    if (x_t.h % 4 != 0 || x_t.w % 4 != 0)
        throw ShapeError("predictor input dims must be divisible by 4");
    if (arch_.context_channels == 0) {
        if (context && context->c != 0) throw ShapeError("predictor expects no context");
        return x_t;
    }
    if (!context) throw ShapeError("predictor requires a conditioning stack");
    if (context->c != arch_.context_channels || context->h != x_t.h || context->w != x_t.w)
        throw ShapeError("conditioning stack shape mismatch");
    return nn::concat_channels(x_t, *context);
}

nn::Tensor ConvUNetPredictor::apply(const nn::Tensor& x_t, int t,
                                    const nn::Tensor* context) const {
    const nn::Tensor in = assemble_input(x_t, context);
    const std::vector<double> emb = nn::time_embedding(t, arch_.time_dim);
    nn::ReLU relu;

    nn::Tensor a = conv_a_.apply(in);
    add_channel_bias(a, time_a_.apply(emb));
    a = relu.apply(a);

    nn::Tensor b = conv_b_.apply(nn::avgpool(a, 2));
    add_channel_bias(b, time_b_.apply(emb));
    b = relu.apply(b);

    nn::Tensor c = conv_c_.apply(nn::avgpool(b, 2));
    add_channel_bias(c, time_c_.apply(emb));
    c = relu.apply(c);

    nn::Tensor d = conv_d_.apply(nn::concat_channels(nn::upsample_nearest(c, 2), b));
    add_channel_bias(d, time_d_.apply(emb));
    d = relu.apply(d);

    nn::Tensor e = conv_e_.apply(nn::concat_channels(nn::upsample_nearest(d, 2), a));
    add_channel_bias(e, time_e_.apply(emb));
    e = relu.apply(e);

    return conv_out_.apply(e);
}

nn::Tensor ConvUNetPredictor::train_forward(const nn::Tensor& x_t, int t,
                                            const nn::Tensor* context) {
    const nn::Tensor in = assemble_input(x_t, context);
    const std::vector<double> emb = nn::time_embedding(t, arch_.time_dim);

    nn::Tensor a = conv_a_.train_forward(in);
    add_channel_bias(a, time_a_.train_forward(emb));
    a = relu_a_.train_forward(a);

    nn::Tensor b = conv_b_.train_forward(nn::avgpool(a, 2));
    add_channel_bias(b, time_b_.train_forward(emb));
    b = relu_b_.train_forward(b);

    nn::Tensor c = conv_c_.train_forward(nn::avgpool(b, 2));
    add_channel_bias(c, time_c_.train_forward(emb));
    c = relu_c_.train_forward(c);

    nn::Tensor d = conv_d_.train_forward(nn::concat_channels(nn::upsample_nearest(c, 2), b));
    add_channel_bias(d, time_d_.train_forward(emb));
    d = relu_d_.train_forward(d);

    nn::Tensor e = conv_e_.train_forward(nn::concat_channels(nn::upsample_nearest(d, 2), a));
    add_channel_bias(e, time_e_.train_forward(emb));
    e = relu_e_.train_forward(e);

    return conv_out_.train_forward(e);
}

nn::Tensor ConvUNetPredictor::backward(const nn::Tensor& d_out) {
    const int w = arch_.width;

    nn::Tensor g = conv_out_.backward(d_out);
    g = relu_e_.backward(g);
    time_e_.backward(channel_sums(g));
    g = conv_e_.backward(g);

    // conv_e_ consumed concat(upsample(d), a): split and route both ways.
    auto [g_up2, g_a_skip] = split_channels(g, w);
    g = nn::upsample_nearest_backward(g_up2, 2);
    g = relu_d_.backward(g);
    time_d_.backward(channel_sums(g));
    g = conv_d_.backward(g);

    auto [g_up1, g_b_skip] = split_channels(g, 2 * w);
    g = nn::upsample_nearest_backward(g_up1, 2);
    g = relu_c_.backward(g);
    time_c_.backward(channel_sums(g));
    g = conv_c_.backward(g);

    g = nn::avgpool_backward(g, 2);
    add_into(g, g_b_skip);
    g = relu_b_.backward(g);
    time_b_.backward(channel_sums(g));
    g = conv_b_.backward(g);

    g = nn::avgpool_backward(g, 2);
    add_into(g, g_a_skip);
    g = relu_a_.backward(g);
    time_a_.backward(channel_sums(g));
    g = conv_a_.backward(g);

    if (arch_.context_channels == 0) return g;
    return split_channels(g, arch_.x_channels).first;
}

// ---- TinyPredictor --------------------------------------------------------------------

TinyPredictor::TinyPredictor(const TinyArch& arch)
    : arch_(arch),
      c1_("tiny.c1", arch.x_channels + arch.context_channels, arch.hidden, 3),
      c2_("tiny.c2", arch.hidden, arch.x_channels, 3),
      time_("tiny.time", arch.time_dim, arch.hidden) {
    if (arch.x_channels < 1 || arch.context_channels < 0 || arch.hidden < 1)
        throw ConfigError("predictor channel counts must be positive");
}

void TinyPredictor::init(RngStream& rng) {
    c1_.init(rng);
    c2_.init(rng);
    time_.init(rng);
}

std::vector<nn::Param*> TinyPredictor::params() {
    return {&c1_.weight, &c1_.bias, &c2_.weight, &c2_.bias, &time_.weight, &time_.bias};
}

nlohmann::json TinyPredictor::arch_json() const {
    return {{"type", "tiny"},
            {"x_channels", arch_.x_channels},
            {"context_channels", arch_.context_channels},
            {"hidden", arch_.hidden},
            {"time_dim", arch_.time_dim}};
}

nn::Tensor TinyPredictor::apply(const nn::Tensor& x_t, int t, const nn::Tensor* context) const {
    nn::Tensor in = x_t;
    if (arch_.context_channels > 0) {
        if (!context) throw ShapeError("predictor requires a conditioning stack");
        in = nn::concat_channels(x_t, *context);
    }
    const std::vector<double> emb = nn::time_embedding(t, arch_.time_dim);
    nn::Tensor h = c1_.apply(in);
    add_channel_bias(h, time_.apply(emb));
    nn::ReLU relu;
    return c2_.apply(relu.apply(h));
}

nn::Tensor TinyPredictor::train_forward(const nn::Tensor& x_t, int t,
                                        const nn::Tensor* context) {
    nn::Tensor in = x_t;
    if (arch_.context_channels > 0) {
        if (!context) throw ShapeError("predictor requires a conditioning stack");
        in = nn::concat_channels(x_t, *context);
    }
    const std::vector<double> emb = nn::time_embedding(t, arch_.time_dim);
    nn::Tensor h = c1_.train_forward(in);
    add_channel_bias(h, time_.train_forward(emb));
    return c2_.train_forward(relu_.train_forward(h));
}

nn::Tensor TinyPredictor::backward(const nn::Tensor& d_out) {
    nn::Tensor g = relu_.backward(c2_.backward(d_out));
    time_.backward(channel_sums(g));
    g = c1_.backward(g);
    if (arch_.context_channels == 0) return g;
    return split_channels(g, arch_.x_channels).first;
}

// ---- Factory ---------------------------------------------------------------------------

std::shared_ptr<Predictor> make_predictor(const nlohmann::json& arch) {
    const std::string type = arch.at("type").get<std::string>();
    if (type == "conv_unet") {
        UNetArch a;
        a.x_channels = arch.at("x_channels").get<int>();
        a.context_channels = arch.at("context_channels").get<int>();
        a.width = arch.at("width").get<int>();
        a.time_dim = arch.at("time_dim").get<int>();
        return std::make_shared<ConvUNetPredictor>(a);
    }
    if (type == "tiny") {
        TinyArch a;
        a.x_channels = arch.at("x_channels").get<int>();
        a.context_channels = arch.at("context_channels").get<int>();
        a.hidden = arch.at("hidden").get<int>();
        a.time_dim = arch.at("time_dim").get<int>();
        return std::make_shared<TinyPredictor>(a);
    }
    throw FormatError("unknown predictor type: " + type);
}

// ---- Pipeline stages ----------------------------------------------------------------------

Tile preprocess_sar(const Tile& sar, const SarPreproc& pre) {
    if (sar.kind != TileKind::SarLinear)
        throw KindError("SAR preprocessing expects SAR_LINEAR input");
    if (sar.channels != 2)
        throw ShapeError("SAR preprocessing expects a 2-channel [VV,VH] tile");
    Tile composite = compose_sar3(extract_channel(sar, 0), extract_channel(sar, 1));
    if (pre.bank) composite = despeckle_kernel(composite, *pre.bank, pre.looks);
    return normalize(composite);
}

nn::Tensor stack_context(const std::vector<Tile>& sar_tiles, const LatentCodec& codec,
                         const SarPreproc& pre) {
    if (sar_tiles.empty()) throw ArgumentError("conditioning stack needs at least one tile");
    for (const Tile& t : sar_tiles)
        if (!t.same_shape(sar_tiles.front()))
            throw ShapeError("conditioning tiles must share dimensions");
    nn::Tensor out = encode(codec, preprocess_sar(sar_tiles.front(), pre));
    for (size_t i = 1; i < sar_tiles.size(); ++i)
        out = nn::concat_channels(out, encode(codec, preprocess_sar(sar_tiles[i], pre)));
    return out;
}

// ---- Training --------------------------------------------------------------------------

TranslatorTrainResult train_translator(const std::vector<TrainPair>& pairs,
                                       const LatentCodec& codec,
                                       const BridgeSchedule& schedule,
                                       const TranslatorTrainConfig& config,
                                       const SarPreproc& pre) {
    if (pairs.empty()) throw ArgumentError("translator training corpus is empty");
    if (config.epochs < 1 || config.batch_size < 1 || !(config.lr > 0.0))
        throw ConfigError("translator config needs positive epochs, batch size and lr");
    const size_t context_count = pairs.front().sar.size();
    if (context_count == 0) throw ArgumentError("training pair has no SAR acquisitions");
    for (const TrainPair& p : pairs) {
        if (p.sar.size() != context_count)
            throw ShapeError("all training pairs must have the same acquisition count");
        if (p.eo.kind != TileKind::EoRgb) throw KindError("training target must be EO_RGB");
        for (const Tile& s : p.sar)
            if (s.width != p.eo.width || s.height != p.eo.height)
                throw ShapeError("SAR and EO tiles must be co-registered");
    }

    // Freeze all latents up front; they are reused every epoch.
    const size_t n = pairs.size();
    std::vector<nn::Tensor> x0_lat(n), y_lat(n), ctx(n);
    for (size_t i = 0; i < n; ++i) {
        x0_lat[i] = encode(codec, pairs[i].eo);
        y_lat[i] = encode(codec, preprocess_sar(pairs[i].sar.front(), pre));
        ctx[i] = stack_context(pairs[i].sar, codec, pre);
    }

    EpsSource eps_src;
    if (config.eps_kind == EpsSource::Kind::TargetEmpirical) {
        std::vector<double> pool;
        pool.reserve(n * x0_lat.front().size());
        for (const nn::Tensor& t : x0_lat) pool.insert(pool.end(), t.v.begin(), t.v.end());
        eps_src = make_empirical_source(pool, config.eps_scale);
    } else {
        eps_src.kind = EpsSource::Kind::StandardNormal;
        eps_src.scale = config.eps_scale;
    }

    UNetArch arch;
    arch.x_channels = x0_lat.front().c;
    arch.context_channels = ctx.front().c;
    arch.width = config.width;
    arch.time_dim = config.time_dim;
    auto predictor = std::make_shared<ConvUNetPredictor>(arch);
    RngStream init_rng(config.seed);
    predictor->init(init_rng);
    std::vector<nn::Param*> params = predictor->params();
    nn::Adam opt(config.lr);

    const size_t n_elems = x0_lat.front().size();
    const int total_steps = schedule.total_steps;
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> curve;
    curve.reserve(config.epochs);
    uint64_t step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        RngStream shuffle_rng(config.seed, 0x45000000ull + static_cast<uint64_t>(epoch));
        for (size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);

        double epoch_loss = 0.0;
        for (size_t batch_start = 0; batch_start < n;
             batch_start += static_cast<size_t>(config.batch_size)) {
            const size_t batch_end =
                std::min(n, batch_start + static_cast<size_t>(config.batch_size));
            const double batch_n = static_cast<double>(batch_end - batch_start);
            for (nn::Param* p : params) p->zero_grad();

            for (size_t bi = batch_start; bi < batch_end; ++bi, ++step) {
                const size_t idx = order[bi];
                RngStream srng(config.seed, 0xA1000000ull + step);
                const int t = 1 + static_cast<int>(
                                      srng.uniform_index(static_cast<uint64_t>(total_steps)));
                const std::vector<double> eps = eps_sample(eps_src, n_elems, srng.next_u64());
                const std::vector<double> target =
                    training_target(schedule, x0_lat[idx].v, y_lat[idx].v, t, eps);

                nn::Tensor x_t = x0_lat[idx];
                for (size_t e = 0; e < n_elems; ++e) x_t.v[e] += target[e];

                const nn::Tensor pred = predictor->train_forward(x_t, t, &ctx[idx]);
                nn::Tensor dy(pred.c, pred.h, pred.w);
                double loss = 0.0;
                const double inv = 1.0 / static_cast<double>(n_elems);
                for (size_t e = 0; e < n_elems; ++e) {
                    const double r = pred.v[e] - target[e];
                    loss += r * r;
                    dy.v[e] = 2.0 * r * inv / batch_n;
                }
                loss *= inv;
                if (!std::isfinite(loss))
                    throw TrainingError("translator loss non-finite at step " +
                                        std::to_string(step));
                epoch_loss += loss;
                predictor->backward(dy);
            }
            opt.step(params);
        }
        curve.push_back(epoch_loss / static_cast<double>(n));
    }

    TranslatorModel model;
    model.predictor = std::move(predictor);
    model.codec = codec;
    model.schedule = schedule;
    model.eps = std::move(eps_src);
    model.context_count = static_cast<int>(context_count);
    return TranslatorTrainResult{std::move(model), std::move(curve)};
}

// ---- Translation --------------------------------------------------------------------------

Tile translate(const Tile& sar, const TranslatorModel& model, const StepSchedule& steps,
               const EpsSource& eps, uint64_t seed, const SarPreproc& pre,
               const std::vector<Tile>* acquisitions) {
    if (!model.predictor) throw ConfigError("translator model has no predictor");

    std::vector<Tile> single;
    if (!acquisitions) {
        single.push_back(sar);
        acquisitions = &single;
    }
    if (static_cast<int>(acquisitions->size()) != model.context_count)
        throw ShapeError("model expects " + std::to_string(model.context_count) +
                         " acquisitions, got " + std::to_string(acquisitions->size()));

    const nn::Tensor y_lat = encode(model.codec, preprocess_sar(sar, pre));
    const nn::Tensor ctx = stack_context(*acquisitions, model.codec, pre);
    if (y_lat.c != model.predictor->x_channels())
        throw ShapeError("latent channels do not match the predictor");

    const int lc = y_lat.c, lh = y_lat.h, lw = y_lat.w;
    const Predictor& net = *model.predictor;
    const DisplacementFn fn = [&](const std::vector<double>& xv, int t) {
        nn::Tensor x(lc, lh, lw);
        x.v = xv;
        return net.apply(x, t, &ctx).v;
    };

    nn::Tensor out_lat(lc, lh, lw);
    out_lat.v = reverse_sample(model.schedule, y_lat.v, fn, steps, eps, seed);

    Tile out = decode(model.codec, out_lat, TileKind::EoRgb);
    for (float& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
    return out;
}

EnsembleResult ensemble_translate(const Tile& sar, const TranslatorModel& model,
                                  const StepSchedule& steps, const EpsSource& eps, int k_samples,
                                  uint64_t base_seed, const SarPreproc& pre,
                                  const std::vector<Tile>* acquisitions) {
    if (k_samples < 1) throw ArgumentError("ensemble size must be >= 1");

    EnsembleResult res;
    res.samples.reserve(k_samples);
    for (int k = 0; k < k_samples; ++k)
        res.samples.push_back(translate(sar, model, steps, eps,
                                        base_seed + static_cast<uint64_t>(k), pre, acquisitions));

    const Tile& s0 = res.samples.front();
    const size_t plane = s0.pixel_count();
    std::vector<double> sum(s0.size(), 0.0), sum_sq(s0.size(), 0.0);
    for (const Tile& s : res.samples)
        for (size_t i = 0; i < s.data.size(); ++i) {
            sum[i] += s.data[i];
            sum_sq[i] += static_cast<double>(s.data[i]) * s.data[i];
        }

    res.mean = Tile(s0.width, s0.height, s0.channels, TileKind::EoRgb);
    res.variance_map = Tile(s0.width, s0.height, 1, TileKind::Latent);
    const double inv_k = 1.0 / k_samples;
    for (size_t i = 0; i < sum.size(); ++i)
        res.mean.data[i] = static_cast<float>(sum[i] * inv_k);
    for (size_t p = 0; p < plane; ++p) {
        double v = 0.0;
        for (uint32_t c = 0; c < s0.channels; ++c) {
            const size_t i = c * plane + p;
            const double m = sum[i] * inv_k;
            v += std::max(sum_sq[i] * inv_k - m * m, 0.0);
        }
        res.variance_map.data[p] = static_cast<float>(v / s0.channels);
    }
    return res;
}

}  // namespace dse
