#include <cmath>

#include "kernels_detail.hpp"

// OpenMP lane. Parallelism only over independent output slots; every slot is
// accumulated sequentially in the same order as the reference lane, so the
// two lanes agree bit-for-bit and results are independent of thread count.

namespace sfac::kernels::par {

Tensor conv2d_forward(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor* b) {
    const Nchw d = nchw(x);
    const int gi_in = spec.c_in / spec.groups;
    const int gi_out = spec.c_out / spec.groups;
    const int ph = (spec.k_h - 1) / 2, pw = (spec.k_w - 1) / 2;
    std::vector<int> yshape = x.shape();
    yshape[x.rank() - 3] = spec.c_out;
    Tensor y(yshape);
    const int nt = max_threads();
    const bool go = nt > 1;
    const double* xd = x.data();
    double* yd = y.data();
#pragma omp parallel for collapse(2) schedule(static) if (go) num_threads(nt)
    for (int n = 0; n < d.n; ++n) {
        for (int co = 0; co < spec.c_out; ++co) {
            const double* xn = xd + static_cast<std::size_t>(n) * d.c * d.h * d.w;
            double* yp = yd + ((static_cast<std::size_t>(n) * spec.c_out + co) * d.h) * d.w;
            const int gidx = co / gi_out;
            const double bias = b ? (*b)[static_cast<std::size_t>(co)] : 0.0;
            for (int oh = 0; oh < d.h; ++oh) {
                for (int ow = 0; ow < d.w; ++ow) {
                    double acc = bias;
                    for (int cil = 0; cil < gi_in; ++cil) {
                        const int ci = gidx * gi_in + cil;
                        const double* xc = xn + static_cast<std::size_t>(ci) * d.h * d.w;
                        const double* wc = w.data() +
                            ((static_cast<std::size_t>(co) * gi_in + cil) * spec.k_h) * spec.k_w;
                        for (int kh = 0; kh < spec.k_h; ++kh) {
                            const int ih = oh + kh - ph;
                            if (ih < 0 || ih >= d.h) continue;
                            const double* xrow = xc + static_cast<std::size_t>(ih) * d.w;
                            const double* wrow = wc + static_cast<std::size_t>(kh) * spec.k_w;
                            for (int kw = 0; kw < spec.k_w; ++kw) {
                                const int iw = ow + kw - pw;
                                if (iw < 0 || iw >= d.w) continue;
                                acc += wrow[kw] * xrow[iw];
                            }
                        }
                    }
                    yp[oh * d.w + ow] = acc;
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
    const int nt = max_threads();
    const bool go = nt > 1;
    const double* xd = x.data();
    double* yd = y.data();
#pragma omp parallel for collapse(2) schedule(static) if (go) num_threads(nt)
    for (int n = 0; n < d.n; ++n) {
        for (int c = 0; c < d.c; ++c) {
            const double* xc = xd + (static_cast<std::size_t>(n) * d.c + c) * d.h * d.w;
            double* yc = yd + (static_cast<std::size_t>(n) * d.c + c) * d.h * d.w;
            const double* wc = w.data() + static_cast<std::size_t>(c) * k_h * k_w;
            const double bias = b ? (*b)[static_cast<std::size_t>(c)] : 0.0;
            for (int oh = 0; oh < d.h; ++oh) {
                for (int ow = 0; ow < d.w; ++ow) {
                    double acc = bias;
                    for (int kh = 0; kh < k_h; ++kh) {
                        const int ih = oh + kh - ph;
                        if (ih < 0 || ih >= d.h) continue;
                        for (int kw = 0; kw < k_w; ++kw) {
                            const int iw = ow + kw - pw;
                            if (iw < 0 || iw >= d.w) continue;
                            acc += wc[kh * k_w + kw] * xc[ih * d.w + iw];
                        }
                    }
                    yc[oh * d.w + ow] = acc;
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
    const int nt = max_threads();
    const bool go = nt > 1;
    const double* xd = x.data();
    double* yd = y.data();
#pragma omp parallel for collapse(2) schedule(static) if (go) num_threads(nt)
    for (int n = 0; n < d.n; ++n) {
        for (int co = 0; co < c_out; ++co) {
            const double* xn = xd + static_cast<std::size_t>(n) * d.c * plane;
            double* yp = yd + (static_cast<std::size_t>(n) * c_out + co) * plane;
            const int gidx = co / gi_out;
            const double bias = b ? (*b)[static_cast<std::size_t>(co)] : 0.0;
            for (std::size_t p = 0; p < plane; ++p) yp[p] = bias;
            for (int cil = 0; cil < gi_in; ++cil) {
                const double wv = w[static_cast<std::size_t>(co) * gi_in + cil];
                const double* xc = xn + static_cast<std::size_t>(gidx * gi_in + cil) * plane;
                for (std::size_t p = 0; p < plane; ++p) yp[p] += wv * xc[p];
            }
        }
    }
    return y;
}

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor* b) {
    const int batch = x.rank() == 2 ? x.dim(0) : 1;
    const int d_in = w.dim(1), d_out = w.dim(0);
    Tensor y(x.rank() == 2 ? std::vector<int>{batch, d_out} : std::vector<int>{d_out});
    const int nt = max_threads();
    const bool go = nt > 1;
    const double* xd = x.data();
    double* yd = y.data();
#pragma omp parallel for collapse(2) schedule(static) if (go) num_threads(nt)
    for (int n = 0; n < batch; ++n) {
        for (int o = 0; o < d_out; ++o) {
            const double* xr = xd + static_cast<std::size_t>(n) * d_in;
            const double* wr = w.data() + static_cast<std::size_t>(o) * d_in;
            double acc = b ? (*b)[static_cast<std::size_t>(o)] : 0.0;
            for (int i = 0; i < d_in; ++i) acc += wr[i] * xr[i];
            yd[static_cast<std::size_t>(n) * d_out + o] = acc;
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
    const int nt = max_threads();
    const bool go = nt > 1;
    const double* xd = x.data();
    double* yd = y.data();
#pragma omp parallel for collapse(2) schedule(static) if (go) num_threads(nt)
    for (int n = 0; n < d.n; ++n) {
        for (int c = 0; c < d.c; ++c) {
            const double* xs = xd + (static_cast<std::size_t>(n) * d.c + c) * d.h * d.w;
            double* ys = yd + (static_cast<std::size_t>(n) * d.c + c) * oh * ow;
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    double s = 0.0;
                    for (int a = 0; a < pool_h; ++a)
                        for (int bcol = 0; bcol < pool_w; ++bcol)
                            s += xs[(i * pool_h + a) * d.w + (j * pool_w + bcol)];
                    ys[i * ow + j] = s * scale;
                }
        }
    }
    return y;
}

Tensor fa_inject_forward(const Tensor& x, const Tensor& gates, const Tensor& pos) {
    const Nchw d = nchw(x);
    Tensor y(x.shape());
    const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
    const int nt = max_threads();
    const bool go = nt > 1;
    const double* xd = x.data();
    double* yd = y.data();
#pragma omp parallel for collapse(2) schedule(static) if (go) num_threads(nt)
    for (int n = 0; n < d.n; ++n) {
        for (int c = 0; c < d.c; ++c) {
            const double s = gates[static_cast<std::size_t>(n) * d.c + c];
            const double* xs = xd + (static_cast<std::size_t>(n) * d.c + c) * plane;
            double* ys = yd + (static_cast<std::size_t>(n) * d.c + c) * plane;
            for (int f = 0; f < d.h; ++f) {
                const double bias = s * pos[static_cast<std::size_t>(f)];
                for (int t = 0; t < d.w; ++t) ys[f * d.w + t] = xs[f * d.w + t] + bias;
            }
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
    const int nt = max_threads();
    const bool go = nt > 1;
    const double* xd = x.data();
    double* yd = y.data();
#pragma omp parallel for schedule(static) if (go) num_threads(nt)
    for (int c = 0; c < d.c; ++c) {
        double sum = 0.0;
        for (int n = 0; n < d.n; ++n) {
            const double* xs = xd + (static_cast<std::size_t>(n) * d.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) sum += xs[i];
        }
        const double mean = sum / m;
        double var = 0.0;
        for (int n = 0; n < d.n; ++n) {
            const double* xs = xd + (static_cast<std::size_t>(n) * d.c + c) * plane;
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
            const double* xs = xd + (static_cast<std::size_t>(n) * d.c + c) * plane;
            double* ys = yd + (static_cast<std::size_t>(n) * d.c + c) * plane;
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
    const int nt = max_threads();
    const bool go = nt > 1;
    const double* xd = x.data();
    double* yd = y.data();
#pragma omp parallel for schedule(static) if (go) num_threads(nt)
    for (int c = 0; c < d.c; ++c) {
        const double inv = 1.0 / std::sqrt(running_var[static_cast<std::size_t>(c)] + eps);
        const double mean = running_mean[static_cast<std::size_t>(c)];
        const double g = gamma[static_cast<std::size_t>(c)], bt = beta[static_cast<std::size_t>(c)];
        for (int n = 0; n < d.n; ++n) {
            const double* xs = xd + (static_cast<std::size_t>(n) * d.c + c) * plane;
            double* ys = yd + (static_cast<std::size_t>(n) * d.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) ys[i] = g * (xs[i] - mean) * inv + bt;
        }
    }
    return y;
}

void conv2d_backward(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& gy,
                     Tensor* gx, Tensor* gw, Tensor* gb) {
    const Nchw d = nchw(x);
    const int gi_in = spec.c_in / spec.groups;
    const int gi_out = spec.c_out / spec.groups;
    const int ph = (spec.k_h - 1) / 2, pw = (spec.k_w - 1) / 2;
    const int nt = max_threads();
    const bool go = nt > 1;
    if (gx) {
        double* gxd = gx->data();
#pragma omp parallel for collapse(2) schedule(static) if (go) num_threads(nt)
        for (int n = 0; n < d.n; ++n) {
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
                        gxd[((static_cast<std::size_t>(n) * spec.c_in + ci) * d.h + ih) * d.w +
                            iw] += acc;
                    }
            }
        }
    }
    if (gw) {
        double* gwd = gw->data();
#pragma omp parallel for schedule(static) if (go) num_threads(nt)
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
                        gwd[((static_cast<std::size_t>(co) * gi_in + cil) * spec.k_h + kh) *
                                spec.k_w + kw] += acc;
                    }
            }
        }
    }
    if (gb) {
        double* gbd = gb->data();
#pragma omp parallel for schedule(static) if (go) num_threads(nt)
        for (int co = 0; co < spec.c_out; ++co) {
            double acc = 0.0;
            for (int n = 0; n < d.n; ++n) {
                const double* gys =
                    gy.data() + (static_cast<std::size_t>(n) * spec.c_out + co) * d.h * d.w;
                for (std::size_t i = 0; i < static_cast<std::size_t>(d.h) * d.w; ++i) acc += gys[i];
            }
            gbd[co] += acc;
        }
    }
}

void depthwise_backward(const Tensor& x, int k_h, int k_w, const Tensor& w, const Tensor& gy,
                        Tensor* gx, Tensor* gw, Tensor* gb) {
    const Nchw d = nchw(x);
    ConvSpec spec{d.c, d.c, k_h, k_w, d.c, gb != nullptr};
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
    const int nt = max_threads();
    const bool go = nt > 1;
    if (gx) {
        double* gxd = gx->data();
#pragma omp parallel for collapse(2) schedule(static) if (go) num_threads(nt)
        for (int n = 0; n < batch; ++n) {
            for (int i = 0; i < d_in; ++i) {
                double acc = 0.0;
                for (int o = 0; o < d_out; ++o)
                    acc += gy[static_cast<std::size_t>(n) * d_out + o] *
                           w[static_cast<std::size_t>(o) * d_in + i];
                gxd[static_cast<std::size_t>(n) * d_in + i] += acc;
            }
        }
    }
    if (gw) {
        double* gwd = gw->data();
#pragma omp parallel for schedule(static) if (go) num_threads(nt)
        for (int o = 0; o < d_out; ++o) {
            for (int i = 0; i < d_in; ++i) {
                double acc = 0.0;
                for (int n = 0; n < batch; ++n)
                    acc += gy[static_cast<std::size_t>(n) * d_out + o] *
                           x[static_cast<std::size_t>(n) * d_in + i];
                gwd[static_cast<std::size_t>(o) * d_in + i] += acc;
            }
        }
    }
    if (gb) {
        for (int o = 0; o < d_out; ++o) {
            double acc = 0.0;
            for (int n = 0; n < batch; ++n) acc += gy[static_cast<std::size_t>(n) * d_out + o];
            gb->data()[o] += acc;
        }
    }
}

void batch_norm_train_backward(const Tensor& x, const Tensor& gamma, const BatchNormCache& cache,
                               const Tensor& gy, Tensor* gx, Tensor* ggamma, Tensor* gbeta) {
    const Nchw d = nchw(x);
    const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
    const double m = static_cast<double>(d.n) * plane;
    const int nt = max_threads();
    const bool go = nt > 1;
#pragma omp parallel for schedule(static) if (go) num_threads(nt)
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
        if (ggamma) ggamma->data()[c] += s2;
        if (gbeta) gbeta->data()[c] += s1;
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
    const int nt = max_threads();
    const bool go = nt > 1;
    if (gx) {
        double* gxd = gx->data();
        for (std::size_t i = 0; i < gy.numel(); ++i) gxd[i] += gy[i];
    }
    if (ggates) {
        double* ggd = ggates->data();
#pragma omp parallel for collapse(2) schedule(static) if (go) num_threads(nt)
        for (int n = 0; n < d.n; ++n) {
            for (int c = 0; c < d.c; ++c) {
                const double* gys = gy.data() + (static_cast<std::size_t>(n) * d.c + c) * plane;
                double acc = 0.0;
                for (int f = 0; f < d.h; ++f) {
                    const double p = pos[static_cast<std::size_t>(f)];
                    for (int t = 0; t < d.w; ++t) acc += gys[f * d.w + t] * p;
                }
                ggd[static_cast<std::size_t>(n) * d.c + c] += acc;
            }
        }
    }
    if (gpos) {
        double* gpd = gpos->data();
#pragma omp parallel for schedule(static) if (go) num_threads(nt)
        for (int f = 0; f < d.h; ++f) {
            double acc = 0.0;
            for (int n = 0; n < d.n; ++n)
                for (int c = 0; c < d.c; ++c) {
                    const double s = gates[static_cast<std::size_t>(n) * d.c + c];
                    const double* gys =
                        gy.data() + (static_cast<std::size_t>(n) * d.c + c) * plane + f * d.w;
                    for (int t = 0; t < d.w; ++t) acc += gys[t] * s;
                }
            gpd[f] += acc;
        }
    }
}

}  // namespace sfac::kernels::par
