#include "dse/despeckle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/special_functions/digamma.hpp>

namespace dse {

namespace {

SpatialKernel line_kernel(int dy, int dx) {
    // Five taps along (dy,dx) through the center of a 5x5 grid, center zeroed.
    SpatialKernel k;
    k.size = 5;
    k.w.assign(25, 0.0);
    for (int s = -2; s <= 2; ++s) {
        if (s == 0) continue;
        k.w[(2 + s * dy) * 5 + (2 + s * dx)] = 0.25;
    }
    return k;
}

SpatialKernel donut_kernel() {
    SpatialKernel k;
    k.size = 5;
    k.w.assign(25, 1.0 / 24.0);
    k.w[12] = 0.0;
    return k;
}

double analytic_log_speckle_mean(double looks) {
    // E[log N] for N ~ Gamma(shape L, rate L).
    return boost::math::digamma(looks) - std::log(looks);
}

}  // namespace

KernelBank make_default_kernel_bank() {
    KernelBank bank;
    bank.kernels = {line_kernel(0, 1), line_kernel(1, 0), line_kernel(1, 1),
                    line_kernel(1, -1), donut_kernel()};
    bank.selection = KernelSelection::MIN_LOCAL_VARIANCE;
    return bank;
}

void validate_kernel_bank(const KernelBank& bank) {
    if (bank.kernels.empty()) throw ConfigError("kernel bank is empty");
    for (size_t i = 0; i < bank.kernels.size(); ++i) {
        const SpatialKernel& k = bank.kernels[i];
        const std::string tag = "kernel " + std::to_string(i);
        if (k.size < 1 || k.size % 2 == 0) throw ConfigError(tag + ": size must be odd");
        if (k.w.size() != static_cast<size_t>(k.size) * k.size)
            throw ConfigError(tag + ": weight count does not match size");
        double sum = 0.0;
        for (double w : k.w) {
            if (!(w >= 0.0)) throw ConfigError(tag + ": negative or non-finite weight");
            sum += w;
        }
        if (k.w[(k.size / 2) * k.size + k.size / 2] != 0.0)
            throw ConfigError(tag + ": center weight must be zero");
        if (std::abs(sum - 1.0) > 1e-9) throw ConfigError(tag + ": weights must sum to 1");
    }
}

Tile despeckle_kernel(const Tile& noisy, const KernelBank& bank, std::optional<double> looks) {
    if (noisy.kind != TileKind::SarLinear)
        throw KindError("despeckle_kernel expects SAR_LINEAR input");
    validate_kernel_bank(bank);
    if (looks && !(*looks > 0.0)) throw ConfigError("looks must be positive");

    const int H = noisy.height, W = noisy.width, C = noisy.channels;
    const size_t plane = static_cast<size_t>(H) * W;

    std::vector<double> log_img(noisy.data.size());
    for (size_t i = 0; i < noisy.data.size(); ++i)
        log_img[i] = std::log(static_cast<double>(noisy.data[i]) + kLogFloor);

    std::vector<double> log_est(noisy.data.size());
    for (int c = 0; c < C; ++c) {
        const double* lp = log_img.data() + c * plane;
        double* ep = log_est.data() + c * plane;
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                double best_mean = lp[static_cast<size_t>(y) * W + x];
                double best_var = std::numeric_limits<double>::infinity();
                double mean_acc = 0.0;
                int used = 0;
                for (const SpatialKernel& k : bank.kernels) {
                    const int R = k.size / 2;
                    // Edge replication clamps taps into bounds; taps that land
                    // on the center pixel itself are dropped (the estimate must
                    // never see its own value) and the rest renormalized.
                    double wsum = 0.0, m = 0.0, m2 = 0.0;
                    for (int dy = -R; dy <= R; ++dy) {
                        const int ys = std::clamp(y + dy, 0, H - 1);
                        for (int dx = -R; dx <= R; ++dx) {
                            const double wv = k.w[(dy + R) * k.size + (dx + R)];
                            if (wv == 0.0) continue;
                            const int xs = std::clamp(x + dx, 0, W - 1);
                            if (ys == y && xs == x) continue;
                            const double v = lp[static_cast<size_t>(ys) * W + xs];
                            wsum += wv;
                            m += wv * v;
                            m2 += wv * v * v;
                        }
                    }
                    if (wsum <= 0.0) continue;  // 1x1 degenerate tile
                    m /= wsum;
                    const double var = std::max(m2 / wsum - m * m, 0.0);
                    if (bank.selection == KernelSelection::AVERAGE) {
                        mean_acc += m;
                        ++used;
                    } else if (var < best_var) {
                        best_var = var;
                        best_mean = m;
                    }
                }
                if (bank.selection == KernelSelection::AVERAGE && used > 0)
                    ep[static_cast<size_t>(y) * W + x] = mean_acc / used;
                else
                    ep[static_cast<size_t>(y) * W + x] = best_mean;
            }
        }
    }

    double bias;
    if (looks) {
        bias = analytic_log_speckle_mean(*looks);
    } else {
        // Empirical masked-residual mean: anchors the output's geometric mean
        // to the input's, and vanishes exactly when every estimate already
        // matches its pixel (constant tiles).
        double acc = 0.0;
        for (size_t i = 0; i < log_est.size(); ++i) acc += log_est[i] - log_img[i];
        bias = acc / static_cast<double>(log_est.size());
    }

    Tile out(static_cast<uint32_t>(W), static_cast<uint32_t>(H), static_cast<uint32_t>(C),
             TileKind::SarLinear);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = static_cast<float>(std::exp(log_est[i] - bias));
    return out;
}

// ---- Blind-spot masking ---------------------------------------------------------

BlindSpotMask sample_mask(int height, int width, double fraction, MaskPolicy policy,
                          RngStream& rng) {
    if (!(fraction > 0.0) || fraction > 0.5)
        throw ConfigError("mask fraction must be in (0, 0.5]");
    const int n = height * width;
    const int n_mask = std::max(1, static_cast<int>(std::lround(fraction * n)));

    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < n_mask; ++i) {
        const size_t j = i + rng.uniform_index(static_cast<uint64_t>(n - i));
        std::swap(idx[i], idx[j]);
    }
    BlindSpotMask mask;
    mask.indices.assign(idx.begin(), idx.begin() + n_mask);
    std::sort(mask.indices.begin(), mask.indices.end());
    mask.policy = policy;
    return mask;
}

nn::Tensor apply_mask_replacement(const nn::Tensor& log_img, const BlindSpotMask& mask,
                                  RngStream& rng) {
    const int H = log_img.h, W = log_img.w, C = log_img.c;
    std::vector<char> masked(static_cast<size_t>(H) * W, 0);
    for (int i : mask.indices) {
        if (i < 0 || i >= H * W) throw ArgumentError("mask index out of range");
        masked[i] = 1;
    }

    nn::Tensor out = log_img;
    for (int i : mask.indices) {
        const int y = i / W, x = i % W;
        if (mask.policy == MaskPolicy::ZERO) {
            for (int c = 0; c < C; ++c) out.at(c, y, x) = 0.0;
            continue;
        }
        // Donor selection depends only on the mask layout and the rng, never
        // on pixel values, and excludes masked positions: the replaced image
        // carries no information about any original masked value.
        int dy0 = 0, dx0 = 0;
        bool found = false;
        for (int attempt = 0; attempt < 64 && !found; ++attempt) {
            const int dy = static_cast<int>(rng.uniform_index(5)) - 2;
            const int dx = static_cast<int>(rng.uniform_index(5)) - 2;
            if (dy == 0 && dx == 0) continue;
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
            if (masked[static_cast<size_t>(yy) * W + xx]) continue;
            dy0 = dy;
            dx0 = dx;
            found = true;
        }
        if (!found) {
            for (int dy = -2; dy <= 2 && !found; ++dy)
                for (int dx = -2; dx <= 2 && !found; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                    if (masked[static_cast<size_t>(yy) * W + xx]) continue;
                    dy0 = dy;
                    dx0 = dx;
                    found = true;
                }
        }
        for (int c = 0; c < C; ++c)
            out.at(c, y, x) = found ? log_img.at(c, y + dy0, x + dx0) : 0.0;
    }
    return out;
}

// ---- Trainable denoiser -----------------------------------------------------------

DenoiserModel::DenoiserModel(int channels_, int hidden_)
    : channels(channels_), hidden(hidden_),
      c1("denoise.c1", channels_, hidden_, 3),
      c2("denoise.c2", hidden_, hidden_, 3),
      c3("denoise.c3", hidden_, channels_, 3) {
    if (channels_ < 1 || hidden_ < 1) throw ConfigError("denoiser dims must be positive");
}

void DenoiserModel::init(RngStream& rng) {
    c1.init(rng);
    c2.init(rng);
    c3.init(rng);
}

std::vector<nn::Param*> DenoiserModel::params() {
    return {&c1.weight, &c1.bias, &c2.weight, &c2.bias, &c3.weight, &c3.bias};
}

nn::Tensor DenoiserModel::apply(const nn::Tensor& log_img) const {
    nn::ReLU relu;
    return c3.apply(relu.apply(c2.apply(relu.apply(c1.apply(log_img)))));
}

BlindspotTrainResult train_blindspot(const std::vector<Tile>& corpus,
                                     const BlindspotTrainConfig& config) {
    if (corpus.empty()) throw ArgumentError("blind-spot training corpus is empty");
    if (config.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(config.lr > 0.0)) throw ConfigError("learning rate must be positive");
    const int C = corpus.front().channels;
    for (const Tile& t : corpus) {
        if (t.kind != TileKind::SarLinear)
            throw KindError("blind-spot training expects SAR_LINEAR tiles");
        if (static_cast<int>(t.channels) != C) throw ShapeError("blind-spot corpus channel mismatch");
    }

    std::vector<nn::Tensor> log_tiles;
    log_tiles.reserve(corpus.size());
    for (const Tile& t : corpus) {
        nn::Tensor lt(t.channels, t.height, t.width);
        for (size_t i = 0; i < t.data.size(); ++i)
            lt.v[i] = std::log(static_cast<double>(t.data[i]) + kLogFloor);
        log_tiles.push_back(std::move(lt));
    }

    DenoiserModel model(C, config.hidden);
    RngStream init_rng(config.seed);
    model.init(init_rng);
    std::vector<nn::Param*> params = model.params();
    nn::Adam opt(config.lr);
    nn::ReLU relu1, relu2;

    std::vector<double> curve;
    curve.reserve(config.epochs);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double loss_sum = 0.0;
        for (size_t ti = 0; ti < log_tiles.size(); ++ti) {
            const nn::Tensor& lt = log_tiles[ti];
            RngStream rng(config.seed,
                          1 + static_cast<uint64_t>(epoch) * log_tiles.size() + ti);
            const BlindSpotMask mask =
                sample_mask(lt.h, lt.w, config.mask_fraction, config.policy, rng);
            const nn::Tensor input = apply_mask_replacement(lt, mask, rng);

            nn::Tensor h1 = relu1.train_forward(model.c1.train_forward(input));
            nn::Tensor h2 = relu2.train_forward(model.c2.train_forward(h1));
            nn::Tensor pred = model.c3.train_forward(h2);

            const double inv_n =
                1.0 / (static_cast<double>(mask.indices.size()) * C);
            nn::Tensor dy(pred.c, pred.h, pred.w);
            double loss = 0.0;
            for (int i : mask.indices) {
                const int y = i / lt.w, x = i % lt.w;
                for (int c = 0; c < C; ++c) {
                    const double r = pred.at(c, y, x) - lt.at(c, y, x);
                    loss += r * r;
                    dy.at(c, y, x) = 2.0 * r * inv_n;
                }
            }
            loss *= inv_n;
            if (!std::isfinite(loss)) {
                const std::string last =
                    curve.empty() ? "none"
                                  : std::to_string(curve.size() - 1) + " (loss " +
                                        std::to_string(curve.back()) + ")";
                throw TrainingError("blind-spot loss non-finite at epoch " +
                                    std::to_string(epoch) + "; last finite epoch: " + last);
            }
            loss_sum += loss;

            for (nn::Param* p : params) p->zero_grad();
            nn::Tensor g = model.c3.backward(dy);
            g = model.c2.backward(relu2.backward(g));
            model.c1.backward(relu1.backward(g));
            opt.step(params);
        }
        curve.push_back(loss_sum / static_cast<double>(log_tiles.size()));
    }
    return BlindspotTrainResult{std::move(model), std::move(curve)};
}

Tile despeckle_model(const Tile& noisy, const DenoiserModel& model,
                     std::optional<double> looks) {
    if (noisy.kind != TileKind::SarLinear)
        throw KindError("despeckle_model expects SAR_LINEAR input");
    if (static_cast<int>(noisy.channels) != model.channels)
        throw ShapeError("tile channels do not match denoiser model");
    if (looks && !(*looks > 0.0)) throw ConfigError("looks must be positive");

    nn::Tensor lt(noisy.channels, noisy.height, noisy.width);
    for (size_t i = 0; i < noisy.data.size(); ++i)
        lt.v[i] = std::log(static_cast<double>(noisy.data[i]) + kLogFloor);
    const nn::Tensor pred = model.apply(lt);

    double bias;
    if (looks) {
        bias = analytic_log_speckle_mean(*looks);
    } else {
        double acc = 0.0;
        for (size_t i = 0; i < pred.v.size(); ++i) acc += pred.v[i] - lt.v[i];
        bias = acc / static_cast<double>(pred.v.size());
    }

    Tile out(noisy.width, noisy.height, noisy.channels, TileKind::SarLinear);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = static_cast<float>(std::exp(pred.v[i] - bias));
    return out;
}

}  // namespace dse
