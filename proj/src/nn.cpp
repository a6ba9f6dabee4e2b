#include "dse/nn.hpp"

#include <algorithm>
#include <cmath>

namespace dse::nn {

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.h != b.h || a.w != b.w) throw ShapeError("concat_channels spatial mismatch");
    Tensor out(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + static_cast<ptrdiff_t>(a.size()));
    return out;
}

// ---- Conv2d -------------------------------------------------------------------

Conv2d::Conv2d(const std::string& name, int in_ch_, int out_ch_, int k)
    : in_ch(in_ch_), out_ch(out_ch_), ksize(k),
      weight(name + ".w", static_cast<size_t>(out_ch_) * in_ch_ * k * k),
      bias(name + ".b", static_cast<size_t>(out_ch_)) {
    if (k % 2 == 0) throw ConfigError("conv kernel size must be odd");
}

void Conv2d::init(RngStream& rng) {
    const double sd = std::sqrt(2.0 / (static_cast<double>(in_ch) * ksize * ksize));
    for (double& w : weight.w) w = sd * rng.normal();
    std::fill(bias.w.begin(), bias.w.end(), 0.0);
}

Tensor Conv2d::apply(const Tensor& x) const {
    if (x.c != in_ch) throw ShapeError("conv input channel mismatch");
    const int H = x.h, W = x.w, P = ksize / 2;
    Tensor y(out_ch, H, W);

    for (int oc = 0; oc < out_ch; ++oc) {
        double* yp = y.ch(oc);
        const double b = bias.w[oc];
        for (size_t i = 0; i < y.plane(); ++i) yp[i] = b;
        for (int ic = 0; ic < in_ch; ++ic) {
            const double* xp = x.ch(ic);
            const double* wrow =
                &weight.w[(static_cast<size_t>(oc) * in_ch + ic) * ksize * ksize];
            for (int dy = 0; dy < ksize; ++dy) {
                const int sy = dy - P;
                const int y0 = std::max(0, -sy), y1 = std::min(H, H - sy);
                for (int dx = 0; dx < ksize; ++dx) {
                    const double wv = wrow[dy * ksize + dx];
                    if (wv == 0.0) continue;
                    const int sx = dx - P;
                    const int x0 = std::max(0, -sx), x1 = std::min(W, W - sx);
                    for (int yy = y0; yy < y1; ++yy) {
                        double* yr = yp + static_cast<size_t>(yy) * W;
                        const double* xr = xp + static_cast<size_t>(yy + sy) * W + sx;
                        for (int xx = x0; xx < x1; ++xx) yr[xx] += wv * xr[xx];
                    }
                }
            }
        }
    }
    return y;
}

Tensor Conv2d::train_forward(const Tensor& x) {
    x_cache = x;
    return apply(x);
}

Tensor Conv2d::backward(const Tensor& dy) {
    const Tensor& x = x_cache;
    if (dy.c != out_ch || dy.h != x.h || dy.w != x.w)
        throw ShapeError("conv backward shape mismatch");
    const int H = x.h, W = x.w, P = ksize / 2;
    Tensor dx(in_ch, H, W);

    for (int oc = 0; oc < out_ch; ++oc) {
        const double* gp = dy.ch(oc);
        double bsum = 0.0;
        for (size_t i = 0; i < dy.plane(); ++i) bsum += gp[i];
        bias.g[oc] += bsum;

        for (int ic = 0; ic < in_ch; ++ic) {
            const double* xp = x.ch(ic);
            double* dxp = dx.ch(ic);
            const size_t wbase = (static_cast<size_t>(oc) * in_ch + ic) * ksize * ksize;
            for (int dyk = 0; dyk < ksize; ++dyk) {
                const int sy = dyk - P;
                const int y0 = std::max(0, -sy), y1 = std::min(H, H - sy);
                for (int dxk = 0; dxk < ksize; ++dxk) {
                    const int sx = dxk - P;
                    const int x0 = std::max(0, -sx), x1 = std::min(W, W - sx);
                    double wg = 0.0;
                    const double wv = weight.w[wbase + dyk * ksize + dxk];
                    for (int yy = y0; yy < y1; ++yy) {
                        const double* gr = gp + static_cast<size_t>(yy) * W;
                        const double* xr = xp + static_cast<size_t>(yy + sy) * W + sx;
                        double* dxr = dxp + static_cast<size_t>(yy + sy) * W + sx;
                        for (int xx = x0; xx < x1; ++xx) {
                            wg += gr[xx] * xr[xx];
                            dxr[xx] += wv * gr[xx];
                        }
                    }
                    weight.g[wbase + dyk * ksize + dxk] += wg;
                }
            }
        }
    }
    return dx;
}

// ---- ReLU ----------------------------------------------------------------------

Tensor ReLU::apply(const Tensor& x) const {
    Tensor y = x;
    for (double& v : y.v) v = std::max(v, 0.0);
    return y;
}

Tensor ReLU::train_forward(const Tensor& x) {
    x_cache = x;
    return apply(x);
}

Tensor ReLU::backward(const Tensor& dy) const {
    Tensor dx = dy;
    for (size_t i = 0; i < dx.v.size(); ++i)
        if (x_cache.v[i] <= 0.0) dx.v[i] = 0.0;
    return dx;
}

// ---- Linear --------------------------------------------------------------------

Linear::Linear(const std::string& name, int in_dim_, int out_dim_)
    : in_dim(in_dim_), out_dim(out_dim_),
      weight(name + ".w", static_cast<size_t>(out_dim_) * in_dim_),
      bias(name + ".b", static_cast<size_t>(out_dim_)) {}

void Linear::init(RngStream& rng) {
    const double sd = std::sqrt(1.0 / static_cast<double>(in_dim));
    for (double& w : weight.w) w = sd * rng.normal();
    std::fill(bias.w.begin(), bias.w.end(), 0.0);
}

std::vector<double> Linear::apply(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != in_dim) throw ShapeError("linear input size mismatch");
    std::vector<double> y(out_dim);
    for (int o = 0; o < out_dim; ++o) {
        double acc = bias.w[o];
        const double* wr = &weight.w[static_cast<size_t>(o) * in_dim];
        for (int i = 0; i < in_dim; ++i) acc += wr[i] * x[i];
        y[o] = acc;
    }
    return y;
}

std::vector<double> Linear::train_forward(const std::vector<double>& x) {
    x_cache = x;
    return apply(x);
}

std::vector<double> Linear::backward(const std::vector<double>& dy) {
    std::vector<double> dx(in_dim, 0.0);
    for (int o = 0; o < out_dim; ++o) {
        bias.g[o] += dy[o];
        double* wg = &weight.g[static_cast<size_t>(o) * in_dim];
        const double* wr = &weight.w[static_cast<size_t>(o) * in_dim];
        for (int i = 0; i < in_dim; ++i) {
            wg[i] += dy[o] * x_cache[i];
            dx[i] += wr[i] * dy[o];
        }
    }
    return dx;
}

// ---- Resampling ------------------------------------------------------------------

Tensor avgpool(const Tensor& x, int factor) {
    if (factor < 1 || x.h % factor != 0 || x.w % factor != 0)
        throw ShapeError("avgpool dims not divisible by factor");
    Tensor y(x.c, x.h / factor, x.w / factor);
    const double inv = 1.0 / (static_cast<double>(factor) * factor);
    for (int c = 0; c < x.c; ++c)
        for (int i = 0; i < y.h; ++i)
            for (int j = 0; j < y.w; ++j) {
                double acc = 0.0;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx)
                        acc += x.at(c, i * factor + dy, j * factor + dx);
                y.at(c, i, j) = acc * inv;
            }
    return y;
}

Tensor avgpool_backward(const Tensor& dy, int factor) {
    Tensor dx(dy.c, dy.h * factor, dy.w * factor);
    const double inv = 1.0 / (static_cast<double>(factor) * factor);
    for (int c = 0; c < dy.c; ++c)
        for (int i = 0; i < dy.h; ++i)
            for (int j = 0; j < dy.w; ++j) {
                const double g = dy.at(c, i, j) * inv;
                for (int py = 0; py < factor; ++py)
                    for (int px = 0; px < factor; ++px)
                        dx.at(c, i * factor + py, j * factor + px) = g;
            }
    return dx;
}

Tensor upsample_nearest(const Tensor& x, int factor) {
    Tensor y(x.c, x.h * factor, x.w * factor);
    for (int c = 0; c < x.c; ++c)
        for (int i = 0; i < y.h; ++i)
            for (int j = 0; j < y.w; ++j) y.at(c, i, j) = x.at(c, i / factor, j / factor);
    return y;
}

Tensor upsample_nearest_backward(const Tensor& dy, int factor) {
    if (dy.h % factor != 0 || dy.w % factor != 0)
        throw ShapeError("upsample backward dims not divisible by factor");
    Tensor dx(dy.c, dy.h / factor, dy.w / factor);
    for (int c = 0; c < dy.c; ++c)
        for (int i = 0; i < dy.h; ++i)
            for (int j = 0; j < dy.w; ++j)
                dx.at(c, i / factor, j / factor) += dy.at(c, i, j);
    return dx;
}

Tensor upsample_bilinear(const Tensor& x, int factor) {
    Tensor y(x.c, x.h * factor, x.w * factor);
    const double inv = 1.0 / factor;
    for (int c = 0; c < x.c; ++c)
        for (int i = 0; i < y.h; ++i) {
            const double sy = (i + 0.5) * inv - 0.5;
            int i0 = static_cast<int>(std::floor(sy));
            const double fy = sy - i0;
            const int i1 = std::clamp(i0 + 1, 0, x.h - 1);
            i0 = std::clamp(i0, 0, x.h - 1);
            for (int j = 0; j < y.w; ++j) {
                const double sx = (j + 0.5) * inv - 0.5;
                int j0 = static_cast<int>(std::floor(sx));
                const double fx = sx - j0;
                const int j1 = std::clamp(j0 + 1, 0, x.w - 1);
                j0 = std::clamp(j0, 0, x.w - 1);
                y.at(c, i, j) = (1.0 - fy) * ((1.0 - fx) * x.at(c, i0, j0) + fx * x.at(c, i0, j1)) +
                                fy * ((1.0 - fx) * x.at(c, i1, j0) + fx * x.at(c, i1, j1));
            }
        }
    return y;
}

// ---- Time embedding ----------------------------------------------------------------

std::vector<double> time_embedding(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw ConfigError("time embedding dim must be even and >= 2");
    std::vector<double> e(dim);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                     static_cast<double>(half));
        e[i] = std::sin(t * freq);
        e[half + i] = std::cos(t * freq);
    }
    return e;
}

// ---- Adam -----------------------------------------------------------------------

void Adam::step(const std::vector<Param*>& params) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (size_t p = 0; p < params.size(); ++p) {
            m_[p].assign(params[p]->w.size(), 0.0);
            v_[p].assign(params[p]->w.size(), 0.0);
        }
    }
    if (m_.size() != params.size()) throw ArgumentError("Adam param list changed size");

    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, t_);
    const double bc2 = 1.0 - std::pow(beta2, t_);
    for (size_t p = 0; p < params.size(); ++p) {
        Param& prm = *params[p];
        auto& m = m_[p];
        auto& v = v_[p];
        for (size_t i = 0; i < prm.w.size(); ++i) {
            const double g = prm.g[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            prm.w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
}

size_t param_count(const std::vector<Param*>& params) {
    size_t n = 0;
    for (const Param* p : params) n += p->w.size();
    return n;
}

}  // namespace dse::nn
