#include "sfac/kernels.hpp"

#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "kernels_detail.hpp"

namespace sfac::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::OpenMP};
std::atomic<int> g_max_threads{0};  // 0 = library default, resolved lazily
thread_local std::uint64_t* g_mac_counter = nullptr;
}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

void set_max_threads(int n) { g_max_threads.store(n < 1 ? 1 : n); }

int max_threads() {
    int n = g_max_threads.load();
    if (n > 0) return n;
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

std::uint64_t* mac_counter() { return g_mac_counter; }

MacCountGuard::MacCountGuard(std::uint64_t* counter) : prev_(g_mac_counter) {
    if (counter && backend() != Backend::Reference) {
        throw ValueError("MAC counting instruments the Reference lane only");
    }
    g_mac_counter = counter;
}

MacCountGuard::~MacCountGuard() { g_mac_counter = prev_; }

void ConvSpec::validate() const {
    if (c_in < 1 || c_out < 1) throw ValueError("conv: channel counts must be >= 1");
    if (groups < 1) throw ValueError("conv: groups must be >= 1");
    if (c_in % groups != 0 || c_out % groups != 0) {
        throw ValueError("conv: groups=" + std::to_string(groups) + " must divide c_in=" +
                         std::to_string(c_in) + " and c_out=" + std::to_string(c_out));
    }
    if (k_h < 1 || k_w < 1 || k_h % 2 == 0 || k_w % 2 == 0) {
        throw ValueError("conv: kernel extents must be odd and >= 1");
    }
}

Nchw nchw(const Tensor& x) {
    if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2), false};
    if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), true};
    throw ShapeError("expected a (C,H,W) or (N,C,H,W) tensor, got " + x.shape_str());
}

namespace checks {

void conv(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor* b) {
    spec.validate();
    const Nchw d = nchw(x);
    if (d.c != spec.c_in) {
        throw ShapeError("conv: input has " + std::to_string(d.c) + " channels, spec expects " +
                         std::to_string(spec.c_in));
    }
    const std::vector<int> expect = {spec.c_out, spec.c_in / spec.groups, spec.k_h, spec.k_w};
    if (w.shape() != expect) {
        throw ShapeError("conv: weight shape " + w.shape_str() + " != expected " +
                         Tensor(expect).shape_str());
    }
    if (spec.has_bias != (b != nullptr)) {
        throw ValueError("conv: bias presence does not match spec.has_bias");
    }
    if (b && (b->rank() != 1 || b->dim(0) != spec.c_out)) {
        throw ShapeError("conv: bias shape " + b->shape_str() + " != (" +
                         std::to_string(spec.c_out) + ")");
    }
}

void linear(const Tensor& x, const Tensor& w, const Tensor* b) {
    if (w.rank() != 2) throw ShapeError("linear: weight must be (D_out, D_in)");
    const int d_in = w.dim(1);
    const int d_out = w.dim(0);
    if (x.rank() == 1) {
        if (x.dim(0) != d_in) {
            throw ShapeError("linear: input dim " + std::to_string(x.dim(0)) +
                             " != weight D_in " + std::to_string(d_in));
        }
    } else if (x.rank() == 2) {
        if (x.dim(1) != d_in) {
            throw ShapeError("linear: input dim " + std::to_string(x.dim(1)) +
                             " != weight D_in " + std::to_string(d_in));
        }
    } else {
        throw ShapeError("linear: input must be rank 1 or 2, got " + x.shape_str());
    }
    if (b && (b->rank() != 1 || b->dim(0) != d_out)) {
        throw ShapeError("linear: bias shape " + b->shape_str() + " != (" + std::to_string(d_out) +
                         ")");
    }
}

void batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Tensor& rm,
                const Tensor& rv) {
    const Nchw d = nchw(x);
    for (const Tensor* t : {&gamma, &beta, &rm, &rv}) {
        if (t->rank() != 1 || t->dim(0) != d.c) {
            throw ShapeError("batch_norm: per-channel tensor shape " + t->shape_str() +
                             " != (" + std::to_string(d.c) + ")");
        }
    }
}

void fa_inject(const Tensor& x, const Tensor& gates, const Tensor& pos) {
    const Nchw d = nchw(x);
    if (pos.rank() != 1 || pos.dim(0) != d.h) {
        throw ShapeError("fa_inject: encoding length " + pos.shape_str() +
                         " != frequency extent " + std::to_string(d.h));
    }
    const bool ok = d.batched ? (gates.rank() == 2 && gates.dim(0) == d.n && gates.dim(1) == d.c)
                              : (gates.rank() == 1 && gates.dim(0) == d.c);
    if (!ok) throw ShapeError("fa_inject: gate shape " + gates.shape_str() + " does not match input");
}

}  // namespace checks

// ---- dispatch ----

#define SFAC_DISPATCH(FN, ...) \
    (backend() == Backend::Reference ? ref::FN(__VA_ARGS__) : par::FN(__VA_ARGS__))

Tensor conv2d_forward(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor* b) {
    checks::conv(x, spec, w, b);
    return SFAC_DISPATCH(conv2d_forward, x, spec, w, b);
}

Tensor depthwise_forward(const Tensor& x, int k_h, int k_w, const Tensor& w, const Tensor* b) {
    const Nchw d = nchw(x);
    ConvSpec spec{d.c, d.c, k_h, k_w, d.c, b != nullptr};
    spec.validate();
    const std::vector<int> expect = {d.c, 1, k_h, k_w};
    if (w.shape() != expect) {
        throw ShapeError("depthwise: weight shape " + w.shape_str() + " != expected " +
                         Tensor(expect).shape_str());
    }
    if (b && (b->rank() != 1 || b->dim(0) != d.c)) {
        throw ShapeError("depthwise: bias shape " + b->shape_str() + " != (" + std::to_string(d.c) +
                         ")");
    }
    return SFAC_DISPATCH(depthwise_forward, x, k_h, k_w, w, b);
}

Tensor pointwise_group_forward(const Tensor& x, int c_out, int groups, const Tensor& w,
                               const Tensor* b) {
    const Nchw d = nchw(x);
    ConvSpec spec{d.c, c_out, 1, 1, groups, b != nullptr};
    checks::conv(x, spec, w, b);
    return SFAC_DISPATCH(pointwise_group_forward, x, c_out, groups, w, b);
}

Tensor channel_shuffle_forward(const Tensor& x, int groups) {
    const Nchw d = nchw(x);
    if (groups < 1 || d.c % groups != 0) {
        throw ValueError("channel_shuffle: groups=" + std::to_string(groups) +
                         " must divide channel count " + std::to_string(d.c));
    }
    const int cpg = d.c / groups;
    Tensor y(x.shape());
    const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
    for (int n = 0; n < d.n; ++n) {
        const double* xs = x.data() + static_cast<std::size_t>(n) * d.c * plane;
        double* ys = y.data() + static_cast<std::size_t>(n) * d.c * plane;
        for (int o = 0; o < d.c; ++o) {
            const int src = (o % groups) * cpg + o / groups;
            std::copy(xs + src * plane, xs + (src + 1) * plane, ys + o * plane);
        }
    }
    return y;
}

Tensor channel_shuffle_backward(const Tensor& gy, int groups) {
    const Nchw d = nchw(gy);
    return channel_shuffle_forward(gy, d.c / groups);
}

Tensor avg_pool_forward(const Tensor& x, int pool_h, int pool_w) {
    const Nchw d = nchw(x);
    if (pool_h < 1 || pool_w < 1) throw ValueError("avg_pool: window extents must be >= 1");
    if (d.h % pool_h != 0 || d.w % pool_w != 0) {
        throw ShapeError("avg_pool: window " + std::to_string(pool_h) + "x" +
                         std::to_string(pool_w) + " does not divide " + std::to_string(d.h) + "x" +
                         std::to_string(d.w));
    }
    return SFAC_DISPATCH(avg_pool_forward, x, pool_h, pool_w);
}

Tensor avg_pool_backward(const Tensor& gy, int pool_h, int pool_w) {
    const Nchw d = nchw(gy);
    std::vector<int> xshape = gy.shape();
    xshape[gy.rank() - 2] *= pool_h;
    xshape[gy.rank() - 1] *= pool_w;
    Tensor gx(xshape);
    const double scale = 1.0 / (static_cast<double>(pool_h) * pool_w);
    const int H = d.h * pool_h, W = d.w * pool_w;
    for (int n = 0; n < d.n; ++n)
        for (int c = 0; c < d.c; ++c) {
            const double* gys = gy.data() + (static_cast<std::size_t>(n) * d.c + c) * d.h * d.w;
            double* gxs = gx.data() + (static_cast<std::size_t>(n) * d.c + c) * H * W;
            for (int ih = 0; ih < H; ++ih)
                for (int iw = 0; iw < W; ++iw)
                    gxs[ih * W + iw] = gys[(ih / pool_h) * d.w + (iw / pool_w)] * scale;
        }
    return gx;
}

Tensor global_avg_pool_forward(const Tensor& x) {
    const Nchw d = nchw(x);
    Tensor y(d.batched ? std::vector<int>{d.n, d.c} : std::vector<int>{d.c});
    const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
    for (int n = 0; n < d.n; ++n)
        for (int c = 0; c < d.c; ++c) {
            const double* xs = x.data() + (static_cast<std::size_t>(n) * d.c + c) * plane;
            double s = 0.0;
            for (std::size_t i = 0; i < plane; ++i) s += xs[i];
            y[static_cast<std::size_t>(n) * d.c + c] = s / static_cast<double>(plane);
        }
    return y;
}

Tensor global_avg_pool_backward(const Tensor& gy, int h, int w) {
    const bool batched = gy.rank() == 2;
    const int n = batched ? gy.dim(0) : 1;
    const int c = batched ? gy.dim(1) : gy.dim(0);
    Tensor gx(batched ? std::vector<int>{n, c, h, w} : std::vector<int>{c, h, w});
    const double scale = 1.0 / (static_cast<double>(h) * w);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t nc = 0; nc < static_cast<std::size_t>(n) * c; ++nc) {
        const double g = gy[nc] * scale;
        double* gxs = gx.data() + nc * plane;
        for (std::size_t i = 0; i < plane; ++i) gxs[i] = g;
    }
    return gx;
}

Tensor relu_forward(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.vec()) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& gy) {
    Tensor gx = gy;
    for (std::size_t i = 0; i < gx.numel(); ++i) {
        if (!(x[i] > 0.0)) gx[i] = 0.0;  // subgradient 0 at the kink
    }
    return gx;
}

Tensor sigmoid_forward(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.vec()) v = 1.0 / (1.0 + std::exp(-v));
    return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& gy) {
    Tensor gx = gy;
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] = gy[i] * y[i] * (1.0 - y[i]);
    return gx;
}

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor* b) {
    checks::linear(x, w, b);
    return SFAC_DISPATCH(linear_forward, x, w, b);
}

Tensor fa_inject_forward(const Tensor& x, const Tensor& gates, const Tensor& pos) {
    checks::fa_inject(x, gates, pos);
    return SFAC_DISPATCH(fa_inject_forward, x, gates, pos);
}

Tensor batch_norm_train_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                Tensor& running_mean, Tensor& running_var, double eps,
                                double momentum, BatchNormCache& cache) {
    checks::batch_norm(x, gamma, beta, running_mean, running_var);
    return SFAC_DISPATCH(batch_norm_train_forward, x, gamma, beta, running_mean, running_var, eps,
                         momentum, cache);
}

Tensor batch_norm_infer_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                const Tensor& running_mean, const Tensor& running_var,
                                double eps) {
    checks::batch_norm(x, gamma, beta, running_mean, running_var);
    return SFAC_DISPATCH(batch_norm_infer_forward, x, gamma, beta, running_mean, running_var, eps);
}

void conv2d_backward(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& gy,
                     Tensor* gx, Tensor* gw, Tensor* gb) {
    if (backend() == Backend::Reference) {
        ref::conv2d_backward(x, spec, w, gy, gx, gw, gb);
    } else {
        par::conv2d_backward(x, spec, w, gy, gx, gw, gb);
    }
}

void depthwise_backward(const Tensor& x, int k_h, int k_w, const Tensor& w, const Tensor& gy,
                        Tensor* gx, Tensor* gw, Tensor* gb) {
    if (backend() == Backend::Reference) {
        ref::depthwise_backward(x, k_h, k_w, w, gy, gx, gw, gb);
    } else {
        par::depthwise_backward(x, k_h, k_w, w, gy, gx, gw, gb);
    }
}

void pointwise_group_backward(const Tensor& x, int c_out, int groups, const Tensor& w,
                              const Tensor& gy, Tensor* gx, Tensor* gw, Tensor* gb) {
    if (backend() == Backend::Reference) {
        ref::pointwise_group_backward(x, c_out, groups, w, gy, gx, gw, gb);
    } else {
        par::pointwise_group_backward(x, c_out, groups, w, gy, gx, gw, gb);
    }
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor* gx, Tensor* gw,
                     Tensor* gb) {
    if (backend() == Backend::Reference) {
        ref::linear_backward(x, w, gy, gx, gw, gb);
    } else {
        par::linear_backward(x, w, gy, gx, gw, gb);
    }
}

void batch_norm_train_backward(const Tensor& x, const Tensor& gamma, const BatchNormCache& cache,
                               const Tensor& gy, Tensor* gx, Tensor* ggamma, Tensor* gbeta) {
    if (backend() == Backend::Reference) {
        ref::batch_norm_train_backward(x, gamma, cache, gy, gx, ggamma, gbeta);
    } else {
        par::batch_norm_train_backward(x, gamma, cache, gy, gx, ggamma, gbeta);
    }
}

void fa_inject_backward(const Tensor& gates, const Tensor& pos, const Tensor& gy, Tensor* gx,
                        Tensor* ggates, Tensor* gpos) {
    if (backend() == Backend::Reference) {
        ref::fa_inject_backward(gates, pos, gy, gx, ggates, gpos);
    } else {
        par::fa_inject_backward(gates, pos, gy, gx, ggates, gpos);
    }
}

}  // namespace sfac::kernels
