#include <cmath>

#include "kernels_detail.hpp"

// Reference lane: straight loops, no parallel machinery. Multiplies are
// executed for every kernel tap (padding taps multiply an implicit zero) so
// the instrumented multiply count equals the closed-form MAC formulas.

namespace sfac::kernels::ref {

namespace {

inline void count(std::uint64_t n) {
    if (std::uint64_t* c = mac_counter()) *c += n;
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor* b) {
    const Nchw d = nchw(x);
    const int gi_in = spec.c_in / spec.groups;
    const int gi_out = spec.c_out / spec.groups;
    const int ph = (spec.k_h - 1) / 2, pw = (spec.k_w - 1) / 2;
    std::vector<int> yshape = x.shape();
    yshape[x.rank() - 3] = spec.c_out;
    Tensor y(yshape);
    for (int n = 0; n < d.n; ++n) {
        const double* xn = x.data() + static_cast<std::size_t>(n) * d.c * d.h * d.w;
        double* yn = y.data() + static_cast<std::size_t>(n) * spec.c_out * d.h * d.w;
        for (int co = 0; co < spec.c_out; ++co) {
            const int gidx = co / gi_out;
            for (int oh = 0; oh < d.h; ++oh) {
                for (int ow = 0; ow < d.w; ++ow) {
                    double acc = b ? (*b)[static_cast<std::size_t>(co)] : 0.0;
                    for (int cil = 0; cil < gi_in; ++cil) {
                        const int ci = gidx * gi_in + cil;
                        for (int kh = 0; kh < spec.k_h; ++kh) {
                            const int ih = oh + kh - ph;
                            for (int kw = 0; kw < spec.k_w; ++kw) {
                                const int iw = ow + kw - pw;
                                const bool in = ih >= 0 && ih < d.h && iw >= 0 && iw < d.w;
                                const double xv = in ? xn[(ci * d.h + ih) * d.w + iw] : 0.0;
                                acc += w.at(co, cil, kh, kw) * xv;
                            }
                        }
                    }
                    count(static_cast<std::uint64_t>(gi_in) * spec.k_h * spec.k_w);
                    yn[(co * d.h + oh) * d.w + ow] = acc;
                }
            }
        }
    }
    return y;
}

Tensor depthwise_forward(const Tensor& x, int k_h, int k_w, const Tensor& w, const Tensor* b) {
    const Nchw d = nchw(x);
    const int ph = (k_h - 1) / 2, pw = (k_w - 1) / 2;
    Tensor y(x.shape());
    for (int n = 0; n < d.n; ++n) {
        const double* xn = x.data() + static_cast<std::size_t>(n) * d.c * d.h * d.w;
        double* yn = y.data() + static_cast<std::size_t>(n) * d.c * d.h * d.w;
        for (int c = 0; c < d.c; ++c) {
            for (int oh = 0; oh < d.h; ++oh) {
                for (int ow = 0; ow < d.w; ++ow) {
                    double acc = b ? (*b)[static_cast<std::size_t>(c)] : 0.0;
                    for (int kh = 0; kh < k_h; ++kh) {
                        const int ih = oh + kh - ph;
                        for (int kw = 0; kw < k_w; ++kw) {
                            const int iw = ow + kw - pw;
                            const bool in = ih >= 0 && ih < d.h && iw >= 0 && iw < d.w;
                            const double xv = in ? xn[(c * d.h + ih) * d.w + iw] : 0.0;
                            acc += w.at(c, 0, kh, kw) * xv;
                        }
                    }
                    count(static_cast<std::uint64_t>(k_h) * k_w);
                    yn[(c * d.h + oh) * d.w + ow] = acc;
                }
            }
        }
    }
    return y;
}

Tensor pointwise_group_forward(const Tensor& x, int c_out, int groups, const Tensor& w,
                               const Tensor* b) {
    const Nchw d = nchw(x);
    const int gi_in = d.c / groups;
    const int gi_out = c_out / groups;
    std::vector<int> yshape = x.shape();
    yshape[x.rank() - 3] = c_out;
    Tensor y(yshape);
    const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
    for (int n = 0; n < d.n; ++n) {
        const double* xn = x.data() + static_cast<std::size_t>(n) * d.c * plane;
        double* yn = y.data() + static_cast<std::size_t>(n) * c_out * plane;
        for (int co = 0; co < c_out; ++co) {
            const int gidx = co / gi_out;
            for (std::size_t p = 0; p < plane; ++p) {
                double acc = b ? (*b)[static_cast<std::size_t>(co)] : 0.0;
                for (int cil = 0; cil < gi_in; ++cil) {
                    const int ci = gidx * gi_in + cil;
                    acc += w.at(co, cil, 0, 0) * xn[ci * plane + p];
                }
                count(static_cast<std::uint64_t>(gi_in));
                yn[co * plane + p] = acc;
            }
        }
    }
    return y;
}

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor* b) {
    const int batch = x.rank() == 2 ? x.dim(0) : 1;
    const int d_in = w.dim(1), d_out = w.dim(0);
    Tensor y(x.rank() == 2 ? std::vector<int>{batch, d_out} : std::vector<int>{d_out});
    for (int n = 0; n < batch; ++n) {
        const double* xr = x.data() + static_cast<std::size_t>(n) * d_in;
        double* yr = y.data() + static_cast<std::size_t>(n) * d_out;
        for (int o = 0; o < d_out; ++o) {
            double acc = b ? (*b)[static_cast<std::size_t>(o)] : 0.0;
            const double* wr = w.data() + static_cast<std::size_t>(o) * d_in;
            for (int i = 0; i < d_in; ++i) acc += wr[i] * xr[i];
            count(static_cast<std::uint64_t>(d_in));
            yr[o] = acc;
        }
    }
    return y;
}

Tensor avg_pool_forward(const Tensor& x, int pool_h, int pool_w) {
    const Nchw d = nchw(x);
    const int oh = d.h / pool_h, ow = d.w / pool_w;
    std::vector<int> yshape = x.shape();
    yshape[x.rank() - 2] = oh;
    yshape[x.rank() - 1] = ow;
    Tensor y(yshape);
    const double scale = 1.0 / (static_cast<double>(pool_h) * pool_w);
    for (int n = 0; n < d.n; ++n)
        for (int c = 0; c < d.c; ++c) {
            const double* xs = x.data() + (static_cast<std::size_t>(n) * d.c + c) * d.h * d.w;
            double* ys = y.data() + (static_cast<std::size_t>(n) * d.c + c) * oh * ow;
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    double s = 0.0;
                    for (int a = 0; a < pool_h; ++a)
                        for (int bcol = 0; bcol < pool_w; ++bcol)
                            s += xs[(i * pool_h + a) * d.w + (j * pool_w + bcol)];
                    ys[i * ow + j] = s * scale;
                }
        }
    return y;
}

Tensor fa_inject_forward(const Tensor& x, const Tensor& gates, const Tensor& pos) {
    const Nchw d = nchw(x);
    Tensor y(x.shape());
    for (int n = 0; n < d.n; ++n)
        for (int c = 0; c < d.c; ++c) {
            const double s = gates[static_cast<std::size_t>(n) * d.c + c];
            const double* xs = x.data() + (static_cast<std::size_t>(n) * d.c + c) * d.h * d.w;
            double* ys = y.data() + (static_cast<std::size_t>(n) * d.c + c) * d.h * d.w;
            for (int f = 0; f < d.h; ++f) {
                const double bias = s * pos[static_cast<std::size_t>(f)];
                for (int t = 0; t < d.w; ++t) ys[f * d.w + t] = xs[f * d.w + t] + bias;
            }
        }
    return y;
}

Tensor batch_norm_train_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                Tensor& running_mean, Tensor& running_var, double eps,
                                double momentum, BatchNormCache& cache) {
    const Nchw d = nchw(x);
    const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
    const double m = static_cast<double>(d.n) * plane;
    cache.mean = Tensor({d.c});
    cache.inv_std = Tensor({d.c});
    Tensor y(x.shape());
    for (int c = 0; c < d.c; ++c) {
        double sum = 0.0;
        for (int n = 0; n < d.n; ++n) {
            const double* xs = x.data() + (static_cast<std::size_t>(n) * d.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) sum += xs[i];
        }
        const double mean = sum / m;
        double var = 0.0;
        for (int n = 0; n < d.n; ++n) {
            const double* xs = x.data() + (static_cast<std::size_t>(n) * d.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double dv = xs[i] - mean;
                var += dv * dv;
            }
        }
        var /= m;
        const double inv = 1.0 / std::sqrt(var + eps);
        cache.mean[static_cast<std::size_t>(c)] = mean;
        cache.inv_std[static_cast<std::size_t>(c)] = inv;
        running_mean[static_cast<std::size_t>(c)] =
            (1.0 - momentum) * running_mean[static_cast<std::size_t>(c)] + momentum * mean;
        running_var[static_cast<std::size_t>(c)] =
            (1.0 - momentum) * running_var[static_cast<std::size_t>(c)] + momentum * var;
        const double g = gamma[static_cast<std::size_t>(c)], bt = beta[static_cast<std::size_t>(c)];
        for (int n = 0; n < d.n; ++n) {
            const double* xs = x.data() + (static_cast<std::size_t>(n) * d.c + c) * plane;
            double* ys = y.data() + (static_cast<std::size_t>(n) * d.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) ys[i] = g * (xs[i] - mean) * inv + bt;
        }
    }
    return y;
}

Tensor batch_norm_infer_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                const Tensor& running_mean, const Tensor& running_var,
                                double eps) {
    const Nchw d = nchw(x);
    const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
    Tensor y(x.shape());
    for (int c = 0; c < d.c; ++c) {
        const double inv = 1.0 / std::sqrt(running_var[static_cast<std::size_t>(c)] + eps);
        const double mean = running_mean[static_cast<std::size_t>(c)];
        const double g = gamma[static_cast<std::size_t>(c)], bt = beta[static_cast<std::size_t>(c)];
        for (int n = 0; n < d.n; ++n) {
            const double* xs = x.data() + (static_cast<std::size_t>(n) * d.c + c) * plane;
            double* ys = y.data() + (static_cast<std::size_t>(n) * d.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) ys[i] = g * (xs[i] - mean) * inv + bt;
        }
    }
    return y;
}

// Backward kernels are gather-style: every gradient slot is a sequential sum
// in a fixed order, matching the OpenMP lane bit-for-bit.

void conv2d_backward(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& gy,
                     Tensor* gx, Tensor* gw, Tensor* gb) {
    const Nchw d = nchw(x);
    const int gi_in = spec.c_in / spec.groups;
    const int gi_out = spec.c_out / spec.groups;
    const int ph = (spec.k_h - 1) / 2, pw = (spec.k_w - 1) / 2;
    if (gx) {
        for (int n = 0; n < d.n; ++n)
            for (int ci = 0; ci < spec.c_in; ++ci) {
                const int gidx = ci / gi_in;
                const int cil = ci - gidx * gi_in;
                for (int ih = 0; ih < d.h; ++ih)
                    for (int iw = 0; iw < d.w; ++iw) {
                        double acc = 0.0;
                        for (int co = gidx * gi_out; co < (gidx + 1) * gi_out; ++co)
                            for (int kh = 0; kh < spec.k_h; ++kh) {
                                const int oh = ih - kh + ph;
                                if (oh < 0 || oh >= d.h) continue;
                                for (int kw = 0; kw < spec.k_w; ++kw) {
                                    const int ow = iw - kw + pw;
                                    if (ow < 0 || ow >= d.w) continue;
                                    acc += gy.data()[((static_cast<std::size_t>(n) * spec.c_out +
                                                       co) * d.h + oh) * d.w + ow] *
                                           w.at(co, cil, kh, kw);
                                }
                            }
                        gx->data()[((static_cast<std::size_t>(n) * spec.c_in + ci) * d.h + ih) *
                                       d.w + iw] += acc;
                    }
            }
    }
    if (gw) {
        for (int co = 0; co < spec.c_out; ++co) {
            const int gidx = co / gi_out;
            for (int cil = 0; cil < gi_in; ++cil) {
                const int ci = gidx * gi_in + cil;
                for (int kh = 0; kh < spec.k_h; ++kh)
                    for (int kw = 0; kw < spec.k_w; ++kw) {
                        double acc = 0.0;
                        for (int n = 0; n < d.n; ++n)
                            for (int oh = 0; oh < d.h; ++oh) {
                                const int ih = oh + kh - ph;
                                if (ih < 0 || ih >= d.h) continue;
                                for (int ow = 0; ow < d.w; ++ow) {
                                    const int iw = ow + kw - pw;
                                    if (iw < 0 || iw >= d.w) continue;
                                    acc += gy.data()[((static_cast<std::size_t>(n) * spec.c_out +
                                                       co) * d.h + oh) * d.w + ow] *
                                           x.data()[((static_cast<std::size_t>(n) * spec.c_in +
                                                      ci) * d.h + ih) * d.w + iw];
                                }
                            }
                        gw->at(co, cil, kh, kw) += acc;
                    }
            }
        }
    }
    if (gb) {
        for (int co = 0; co < spec.c_out; ++co) {
            double acc = 0.0;
            for (int n = 0; n < d.n; ++n) {
                const double* gys =
                    gy.data() + (static_cast<std::size_t>(n) * spec.c_out + co) * d.h * d.w;
                for (std::size_t i = 0; i < static_cast<std::size_t>(d.h) * d.w; ++i) acc += gys[i];
            }
            (*gb)[static_cast<std::size_t>(co)] += acc;
        }
    }
}

void depthwise_backward(const Tensor& x, int k_h, int k_w, const Tensor& w, const Tensor& gy,
                        Tensor* gx, Tensor* gw, Tensor* gb) {
    const Nchw d = nchw(x);
    ConvSpec spec{d.c, d.c, k_h, k_w, d.c, gb != nullptr};
    // same math as grouped conv with g == C
    conv2d_backward(x, spec, w, gy, gx, gw, gb);
}

void pointwise_group_backward(const Tensor& x, int c_out, int groups, const Tensor& w,
                              const Tensor& gy, Tensor* gx, Tensor* gw, Tensor* gb) {
    const Nchw d = nchw(x);
    ConvSpec spec{d.c, c_out, 1, 1, groups, gb != nullptr};
    conv2d_backward(x, spec, w, gy, gx, gw, gb);
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor* gx, Tensor* gw,
                     Tensor* gb) {
    const int batch = x.rank() == 2 ? x.dim(0) : 1;
    const int d_in = w.dim(1), d_out = w.dim(0);
    if (gx) {
        for (int n = 0; n < batch; ++n)
            for (int i = 0; i < d_in; ++i) {
                double acc = 0.0;
                for (int o = 0; o < d_out; ++o)
                    acc += gy[static_cast<std::size_t>(n) * d_out + o] *
                           w[static_cast<std::size_t>(o) * d_in + i];
                gx->data()[static_cast<std::size_t>(n) * d_in + i] += acc;
            }
    }
    if (gw) {
        for (int o = 0; o < d_out; ++o)
            for (int i = 0; i < d_in; ++i) {
                double acc = 0.0;
                for (int n = 0; n < batch; ++n)
                    acc += gy[static_cast<std::size_t>(n) * d_out + o] *
                           x[static_cast<std::size_t>(n) * d_in + i];
                gw->data()[static_cast<std::size_t>(o) * d_in + i] += acc;
            }
    }
    if (gb) {
        for (int o = 0; o < d_out; ++o) {
            double acc = 0.0;
            for (int n = 0; n < batch; ++n) acc += gy[static_cast<std::size_t>(n) * d_out + o];
            (*gb)[static_cast<std::size_t>(o)] += acc;
        }
    }
}

void batch_norm_train_backward(const Tensor& x, const Tensor& gamma, const BatchNormCache& cache,
                               const Tensor& gy, Tensor* gx, Tensor* ggamma, Tensor* gbeta) {
    const Nchw d = nchw(x);
    const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
    const double m = static_cast<double>(d.n) * plane;
    for (int c = 0; c < d.c; ++c) {
        const double mean = cache.mean[static_cast<std::size_t>(c)];
        const double inv = cache.inv_std[static_cast<std::size_t>(c)];
        double s1 = 0.0, s2 = 0.0;
        for (int n = 0; n < d.n; ++n) {
            const std::size_t base = (static_cast<std::size_t>(n) * d.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double g = gy[base + i];
                s1 += g;
                s2 += g * (x[base + i] - mean) * inv;
            }
        }
        if (ggamma) (*ggamma)[static_cast<std::size_t>(c)] += s2;
        if (gbeta) (*gbeta)[static_cast<std::size_t>(c)] += s1;
        if (gx) {
            const double g = gamma[static_cast<std::size_t>(c)];
            for (int n = 0; n < d.n; ++n) {
                const std::size_t base = (static_cast<std::size_t>(n) * d.c + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double xhat = (x[base + i] - mean) * inv;
                    gx->data()[base + i] += g * inv * (gy[base + i] - s1 / m - xhat * s2 / m);
                }
            }
        }
    }
}

void fa_inject_backward(const Tensor& gates, const Tensor& pos, const Tensor& gy, Tensor* gx,
                        Tensor* ggates, Tensor* gpos) {
    const Nchw d = nchw(gy);
    const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
    if (gx) {
        for (std::size_t i = 0; i < gy.numel(); ++i) gx->data()[i] += gy[i];
    }
    if (ggates) {
        for (int n = 0; n < d.n; ++n)
            for (int c = 0; c < d.c; ++c) {
                const double* gys = gy.data() + (static_cast<std::size_t>(n) * d.c + c) * plane;
                double acc = 0.0;
                for (int f = 0; f < d.h; ++f) {
                    const double p = pos[static_cast<std::size_t>(f)];
                    for (int t = 0; t < d.w; ++t) acc += gys[f * d.w + t] * p;
                }
                ggates->data()[static_cast<std::size_t>(n) * d.c + c] += acc;
            }
    }
    if (gpos) {
        for (int f = 0; f < d.h; ++f) {
            double acc = 0.0;
            for (int n = 0; n < d.n; ++n)
                for (int c = 0; c < d.c; ++c) {
                    const double s = gates[static_cast<std::size_t>(n) * d.c + c];
                    const double* gys =
                        gy.data() + (static_cast<std::size_t>(n) * d.c + c) * plane + f * d.w;
                    for (int t = 0; t < d.w; ++t) acc += gys[t] * s;
                }
            gpos->data()[static_cast<std::size_t>(f)] += acc;
        }
    }
}

}  // namespace sfac::kernels::ref
