#pragma once

#include <string>
#include <vector>

#include "dse/error.hpp"
#include "dse/rng.hpp"

namespace dse::nn {

// Dense CHW tensor, double precision. Desk-scale images keep this simple;
// all training math runs in double so finite-difference gradient checks are
// meaningful.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_, double fill = 0.0)
        : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, fill) {}

    size_t plane() const { return static_cast<size_t>(h) * w; }
    size_t size() const { return plane() * c; }
    double* ch(int i) { return v.data() + plane() * i; }
    const double* ch(int i) const { return v.data() + plane() * i; }
    double& at(int ci, int y, int x) { return v[(static_cast<size_t>(ci) * h + y) * w + x]; }
    double at(int ci, int y, int x) const { return v[(static_cast<size_t>(ci) * h + y) * w + x]; }
    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
};

Tensor concat_channels(const Tensor& a, const Tensor& b);

struct Param {
    std::string name;
    std::vector<double> w;
    std::vector<double> g;

    Param() = default;
    Param(std::string n, size_t count) : name(std::move(n)), w(count, 0.0), g(count, 0.0) {}
    void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
};

// 2-D convolution, odd kernel, stride 1, zero padding (same-size output).
struct Conv2d {
    int in_ch = 0, out_ch = 0, ksize = 3;
    Param weight;  // [out][in][k][k]
    Param bias;    // [out]

    Conv2d() = default;
    Conv2d(const std::string& name, int in_ch_, int out_ch_, int k);
    void init(RngStream& rng);

    Tensor apply(const Tensor& x) const;
    Tensor train_forward(const Tensor& x);
    Tensor backward(const Tensor& dy);

    Tensor x_cache;
};

struct ReLU {
    Tensor apply(const Tensor& x) const;
    Tensor train_forward(const Tensor& x);
    Tensor backward(const Tensor& dy) const;
    Tensor x_cache;
};

struct Linear {
    int in_dim = 0, out_dim = 0;
    Param weight;  // [out][in]
    Param bias;    // [out]

    Linear() = default;
    Linear(const std::string& name, int in_dim_, int out_dim_);
    void init(RngStream& rng);

    std::vector<double> apply(const std::vector<double>& x) const;
    std::vector<double> train_forward(const std::vector<double>& x);
    std::vector<double> backward(const std::vector<double>& dy);

    std::vector<double> x_cache;
};

Tensor avgpool(const Tensor& x, int factor);
Tensor avgpool_backward(const Tensor& dy, int factor);
Tensor upsample_nearest(const Tensor& x, int factor);
Tensor upsample_nearest_backward(const Tensor& dy, int factor);

// Half-sample-offset bilinear upsampling with edge clamping. Every source
// pixel receives total interpolation weight factor^2, so the global mean is
// preserved.
Tensor upsample_bilinear(const Tensor& x, int factor);

// Sinusoidal position embedding of a step index; dim must be even.
std::vector<double> time_embedding(int t, int dim);

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit Adam(double lr_) : lr(lr_) {}
    void step(const std::vector<Param*>& params);

private:
    int t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

size_t param_count(const std::vector<Param*>& params);

}  // namespace dse::nn
