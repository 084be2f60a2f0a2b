#include "sfac/ops.hpp"

#include <chrono>
#include <cmath>

namespace sfac::ops {

namespace {

using autograd::NodePtr;
using autograd::TensorPtr;

class OpTimer {
public:
    OpTimer(Context& ctx, const char* name, OpCategory cat)
        : hook_(ctx.prof), name_(name), cat_(cat) {
        if (hook_) start_ = std::chrono::steady_clock::now();
    }
    ~OpTimer() {
        if (hook_) {
            const auto end = std::chrono::steady_clock::now();
            hook_->record_op(name_, cat_,
                             std::chrono::duration<double, std::milli>(end - start_).count());
        }
    }

private:
    OpTimerHook* hook_;
    const char* name_;
    OpCategory cat_;
    std::chrono::steady_clock::time_point start_;
};

Value wrap(Context& ctx, Tensor out, std::function<void(const Tensor&)> vjp) {
    if (!ctx.tape) return Value::raw(std::move(out));
    return ctx.tape->record(std::move(out), std::move(vjp));
}

struct CrossEntropyOut {
    double loss;
    Tensor probs;  // (N,C)
};

CrossEntropyOut cross_entropy_impl(const Tensor& logits, const std::vector<int>& labels) {
    const bool batched = logits.rank() == 2;
    if (!batched && logits.rank() != 1) {
        throw ShapeError("cross_entropy: logits must be (N,C) or (C), got " + logits.shape_str());
    }
    const int n = batched ? logits.dim(0) : 1;
    const int c = batched ? logits.dim(1) : logits.dim(0);
    if (static_cast<int>(labels.size()) != n) {
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
    }
    Tensor probs({n, c});
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* row = logits.data() + static_cast<std::size_t>(i) * c;
        const int label = labels[static_cast<std::size_t>(i)];
        if (label < 0 || label >= c) {
            throw ValueError("cross_entropy: label " + std::to_string(label) +
                             " out of range [0," + std::to_string(c) + ")");
        }
        double m = row[0];
        for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) sum += std::exp(row[j] - m);
        const double lse = m + std::log(sum);
        for (int j = 0; j < c; ++j) probs.at(i, j) = std::exp(row[j] - lse);
        total += lse - row[label];
    }
    return {total / n, probs};
}

}  // namespace

Value conv2d(Context& ctx, const Value& x, const ConvSpec& spec, const Value& w, const Value* b) {
    OpTimer timer(ctx, "conv2d", OpCategory::CoreArithmetic);
    Tensor y = kernels::conv2d_forward(x.tensor(), spec, w.tensor(), b ? b->val.get() : nullptr);
    if (!ctx.tape) return Value::raw(std::move(y));
    TensorPtr xv = x.val, wv = w.val;
    NodePtr xn = x.node, wn = w.node, bn = b ? b->node : nullptr;
    return ctx.tape->record(std::move(y), [=](const Tensor& gy) {
        Tensor gx, gw, gb;
        if (xn) gx = Tensor(xv->shape());
        if (wn) gw = Tensor(wv->shape());
        if (bn) gb = Tensor({spec.c_out});
        kernels::conv2d_backward(*xv, spec, *wv, gy, xn ? &gx : nullptr, wn ? &gw : nullptr,
                                 bn ? &gb : nullptr);
        Tape::accumulate(xn, gx);
        Tape::accumulate(wn, gw);
        Tape::accumulate(bn, gb);
    });
}

Value depthwise_conv2d(Context& ctx, const Value& x, int k_h, int k_w, const Value& w,
                       const Value* b) {
    OpTimer timer(ctx, "depthwise_conv2d", OpCategory::CoreArithmetic);
    Tensor y = kernels::depthwise_forward(x.tensor(), k_h, k_w, w.tensor(),
                                          b ? b->val.get() : nullptr);
    if (!ctx.tape) return Value::raw(std::move(y));
    TensorPtr xv = x.val, wv = w.val;
    NodePtr xn = x.node, wn = w.node, bn = b ? b->node : nullptr;
    const int c = kernels::nchw(x.tensor()).c;
    return ctx.tape->record(std::move(y), [=](const Tensor& gy) {
        Tensor gx, gw, gb;
        if (xn) gx = Tensor(xv->shape());
        if (wn) gw = Tensor(wv->shape());
        if (bn) gb = Tensor({c});
        kernels::depthwise_backward(*xv, k_h, k_w, *wv, gy, xn ? &gx : nullptr, wn ? &gw : nullptr,
                                    bn ? &gb : nullptr);
        Tape::accumulate(xn, gx);
        Tape::accumulate(wn, gw);
        Tape::accumulate(bn, gb);
    });
}

Value pointwise_group_conv(Context& ctx, const Value& x, int c_out, int groups, const Value& w,
                           const Value* b) {
    OpTimer timer(ctx, "pointwise_group_conv", OpCategory::CoreArithmetic);
    Tensor y = kernels::pointwise_group_forward(x.tensor(), c_out, groups, w.tensor(),
                                                b ? b->val.get() : nullptr);
    if (!ctx.tape) return Value::raw(std::move(y));
    TensorPtr xv = x.val, wv = w.val;
    NodePtr xn = x.node, wn = w.node, bn = b ? b->node : nullptr;
    return ctx.tape->record(std::move(y), [=](const Tensor& gy) {
        Tensor gx, gw, gb;
        if (xn) gx = Tensor(xv->shape());
        if (wn) gw = Tensor(wv->shape());
        if (bn) gb = Tensor({c_out});
        kernels::pointwise_group_backward(*xv, c_out, groups, *wv, gy, xn ? &gx : nullptr,
                                          wn ? &gw : nullptr, bn ? &gb : nullptr);
        Tape::accumulate(xn, gx);
        Tape::accumulate(wn, gw);
        Tape::accumulate(bn, gb);
    });
}

Value channel_shuffle(Context& ctx, const Value& x, int groups) {
    OpTimer timer(ctx, "channel_shuffle", OpCategory::TensorManipulation);
    Tensor y = kernels::channel_shuffle_forward(x.tensor(), groups);
    if (!ctx.tape) return Value::raw(std::move(y));
    NodePtr xn = x.node;
    return ctx.tape->record(std::move(y), [=](const Tensor& gy) {
        if (xn) Tape::accumulate(xn, kernels::channel_shuffle_backward(gy, groups));
    });
}

Value avg_pool2d(Context& ctx, const Value& x, int pool_h, int pool_w) {
    OpTimer timer(ctx, "avg_pool2d", OpCategory::CoreArithmetic);
    Tensor y = kernels::avg_pool_forward(x.tensor(), pool_h, pool_w);
    if (!ctx.tape) return Value::raw(std::move(y));
    NodePtr xn = x.node;
    return ctx.tape->record(std::move(y), [=](const Tensor& gy) {
        if (xn) Tape::accumulate(xn, kernels::avg_pool_backward(gy, pool_h, pool_w));
    });
}

Value global_avg_pool(Context& ctx, const Value& x) {
    OpTimer timer(ctx, "global_avg_pool", OpCategory::CoreArithmetic);
    const kernels::Nchw d = kernels::nchw(x.tensor());
    Tensor y = kernels::global_avg_pool_forward(x.tensor());
    if (!ctx.tape) return Value::raw(std::move(y));
    NodePtr xn = x.node;
    return ctx.tape->record(std::move(y), [=](const Tensor& gy) {
        if (xn) Tape::accumulate(xn, kernels::global_avg_pool_backward(gy, d.h, d.w));
    });
}

Value batch_norm(Context& ctx, const Value& x, const Value& gamma, const Value& beta,
                 Tensor& running_mean, Tensor& running_var, bool training, double eps,
                 double momentum) {
    OpTimer timer(ctx, "batch_norm", OpCategory::CoreArithmetic);
    if (training) {
        kernels::BatchNormCache cache;
        Tensor y = kernels::batch_norm_train_forward(x.tensor(), gamma.tensor(), beta.tensor(),
                                                     running_mean, running_var, eps, momentum,
                                                     cache);
        if (!ctx.tape) return Value::raw(std::move(y));
        TensorPtr xv = x.val, gv = gamma.val;
        NodePtr xn = x.node, gn = gamma.node, bn = beta.node;
        auto cptr = std::make_shared<kernels::BatchNormCache>(std::move(cache));
        return ctx.tape->record(std::move(y), [=](const Tensor& gy) {
            const int c = gv->dim(0);
            Tensor gx, gg, gb;
            if (xn) gx = Tensor(xv->shape());
            if (gn) gg = Tensor({c});
            if (bn) gb = Tensor({c});
            kernels::batch_norm_train_backward(*xv, *gv, *cptr, gy, xn ? &gx : nullptr,
                                               gn ? &gg : nullptr, bn ? &gb : nullptr);
            Tape::accumulate(xn, gx);
            Tape::accumulate(gn, gg);
            Tape::accumulate(bn, gb);
        });
    }
    Tensor y = kernels::batch_norm_infer_forward(x.tensor(), gamma.tensor(), beta.tensor(),
                                                 running_mean, running_var, eps);
    if (!ctx.tape) return Value::raw(std::move(y));
    // Inference stats are constants; the op is a per-channel affine map.
    TensorPtr xv = x.val, gv = gamma.val;
    auto mean = std::make_shared<Tensor>(running_mean);
    auto var = std::make_shared<Tensor>(running_var);
    NodePtr xn = x.node, gn = gamma.node, bn = beta.node;
    return ctx.tape->record(std::move(y), [=](const Tensor& gy) {
        const kernels::Nchw d = kernels::nchw(*xv);
        const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
        Tensor gx(xv->shape()), gg({d.c}), gb({d.c});
        for (int c = 0; c < d.c; ++c) {
            const double inv = 1.0 / std::sqrt((*var)[static_cast<std::size_t>(c)] + eps);
            const double mu = (*mean)[static_cast<std::size_t>(c)];
            const double g = (*gv)[static_cast<std::size_t>(c)];
            double s1 = 0.0, s2 = 0.0;
            for (int n = 0; n < d.n; ++n) {
                const std::size_t base = (static_cast<std::size_t>(n) * d.c + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    s1 += gy[base + i];
                    s2 += gy[base + i] * ((*xv)[base + i] - mu) * inv;
                    gx[base + i] = gy[base + i] * g * inv;
                }
            }
            gg[static_cast<std::size_t>(c)] = s2;
            gb[static_cast<std::size_t>(c)] = s1;
        }
        Tape::accumulate(xn, gx);
        Tape::accumulate(gn, gg);
        Tape::accumulate(bn, gb);
    });
}

Value relu(Context& ctx, const Value& x) {
    OpTimer timer(ctx, "relu", OpCategory::Other);
    Tensor y = kernels::relu_forward(x.tensor());
    if (!ctx.tape) return Value::raw(std::move(y));
    TensorPtr xv = x.val;
    NodePtr xn = x.node;
    return ctx.tape->record(std::move(y), [=](const Tensor& gy) {
        if (xn) Tape::accumulate(xn, kernels::relu_backward(*xv, gy));
    });
}

Value sigmoid(Context& ctx, const Value& x) {
    OpTimer timer(ctx, "sigmoid", OpCategory::Other);
    Tensor y = kernels::sigmoid_forward(x.tensor());
    if (!ctx.tape) return Value::raw(std::move(y));
    NodePtr xn = x.node;
    Value out = ctx.tape->record(std::move(y), nullptr);
    TensorPtr yv = out.val;
    out.node->vjp = [=](const Tensor& gy) {
        if (xn) Tape::accumulate(xn, kernels::sigmoid_backward(*yv, gy));
    };
    return out;
}

Value linear(Context& ctx, const Value& x, const Value& w, const Value* b) {
    OpTimer timer(ctx, "linear", OpCategory::CoreArithmetic);
    Tensor y = kernels::linear_forward(x.tensor(), w.tensor(), b ? b->val.get() : nullptr);
    if (!ctx.tape) return Value::raw(std::move(y));
    TensorPtr xv = x.val, wv = w.val;
    NodePtr xn = x.node, wn = w.node, bn = b ? b->node : nullptr;
    return ctx.tape->record(std::move(y), [=](const Tensor& gy) {
        Tensor gx, gw, gb;
        if (xn) gx = Tensor(xv->shape());
        if (wn) gw = Tensor(wv->shape());
        if (bn) gb = Tensor({wv->dim(0)});
        kernels::linear_backward(*xv, *wv, gy, xn ? &gx : nullptr, wn ? &gw : nullptr,
                                 bn ? &gb : nullptr);
        Tape::accumulate(xn, gx);
        Tape::accumulate(wn, gw);
        Tape::accumulate(bn, gb);
    });
}

Value reshape(Context& ctx, const Value& x, std::vector<int> shape) {
    OpTimer timer(ctx, "reshape", OpCategory::TensorManipulation);
    Tensor y(std::move(shape), x.tensor().vec());
    if (!ctx.tape) return Value::raw(std::move(y));
    NodePtr xn = x.node;
    std::vector<int> xshape = x.tensor().shape();
    return ctx.tape->record(std::move(y), [=](const Tensor& gy) {
        if (xn) Tape::accumulate(xn, Tensor(xshape, gy.vec()));
    });
}

Value fa_inject(Context& ctx, const Value& x, const Value& gates, const Value& pos) {
    OpTimer timer(ctx, "fa_inject", OpCategory::Other);
    Tensor y = kernels::fa_inject_forward(x.tensor(), gates.tensor(), pos.tensor());
    if (!ctx.tape) return Value::raw(std::move(y));
    TensorPtr gv = gates.val, pv = pos.val;
    NodePtr xn = x.node, gn = gates.node, pn = pos.node;
    return ctx.tape->record(std::move(y), [=](const Tensor& gy) {
        Tensor gx, gg, gp;
        if (xn) gx = Tensor(gy.shape());
        if (gn) gg = Tensor(gv->shape());
        if (pn) gp = Tensor(pv->shape());
        kernels::fa_inject_backward(*gv, *pv, gy, xn ? &gx : nullptr, gn ? &gg : nullptr,
                                    pn ? &gp : nullptr);
        Tape::accumulate(xn, gx);
        Tape::accumulate(gn, gg);
        Tape::accumulate(pn, gp);
    });
}

Value cross_entropy(Context& ctx, const Value& logits, const std::vector<int>& labels) {
    OpTimer timer(ctx, "cross_entropy", OpCategory::Other);
    CrossEntropyOut out = cross_entropy_impl(logits.tensor(), labels);
    Tensor loss = Tensor::scalar(out.loss);
    if (!ctx.tape) return Value::raw(std::move(loss));
    NodePtr ln = logits.node;
    auto probs = std::make_shared<Tensor>(std::move(out.probs));
    std::vector<int> lshape = logits.tensor().shape();
    auto lab = std::make_shared<std::vector<int>>(labels);
    return ctx.tape->record(std::move(loss), [=](const Tensor& gy) {
        if (!ln) return;
        const int n = probs->dim(0), c = probs->dim(1);
        const double g = gy[0] / n;
        Tensor gl(lshape);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) {
                double v = probs->at(i, j);
                if (j == (*lab)[static_cast<std::size_t>(i)]) v -= 1.0;
                gl[static_cast<std::size_t>(i) * c + j] = g * v;
            }
        Tape::accumulate(ln, gl);
    });
}

Value weighted_sum(Context& ctx, const Value& x, const Tensor& weights) {
    if (!x.tensor().same_shape(weights)) {
        throw ShapeError("weighted_sum: weight shape " + weights.shape_str() + " != input " +
                         x.tensor().shape_str());
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.numel(); ++i) acc += x.tensor()[i] * weights[i];
    Tensor out = Tensor::scalar(acc);
    if (!ctx.tape) return Value::raw(std::move(out));
    NodePtr xn = x.node;
    auto wv = std::make_shared<Tensor>(weights);
    return ctx.tape->record(std::move(out), [=](const Tensor& gy) {
        if (!xn) return;
        Tensor gx(wv->shape());
        for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] = gy[0] * (*wv)[i];
        Tape::accumulate(xn, gx);
    });
}

// ---- plain wrappers ----

Tensor conv2d(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor* b) {
    return kernels::conv2d_forward(x, spec, w, b);
}
Tensor depthwise_conv2d(const Tensor& x, int k_h, int k_w, const Tensor& w, const Tensor* b) {
    return kernels::depthwise_forward(x, k_h, k_w, w, b);
}
Tensor pointwise_group_conv(const Tensor& x, int c_out, int groups, const Tensor& w,
                            const Tensor* b) {
    return kernels::pointwise_group_forward(x, c_out, groups, w, b);
}
Tensor channel_shuffle(const Tensor& x, int groups) {
    return kernels::channel_shuffle_forward(x, groups);
}
Tensor avg_pool2d(const Tensor& x, int pool_h, int pool_w) {
    return kernels::avg_pool_forward(x, pool_h, pool_w);
}
Tensor global_avg_pool(const Tensor& x) { return kernels::global_avg_pool_forward(x); }
Tensor relu(const Tensor& x) { return kernels::relu_forward(x); }
Tensor sigmoid(const Tensor& x) { return kernels::sigmoid_forward(x); }
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b) {
    return kernels::linear_forward(x, w, b);
}
double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    return cross_entropy_impl(logits, labels).loss;
}

}  // namespace sfac::ops
