#include "sfac/blocks.hpp"

namespace sfac::blocks {

FAGateMode fa_gate_from_string(const std::string& s) {
    if (s == "shared_fc") return FAGateMode::SharedFrequencyFC;
    if (s == "channel_mix") return FAGateMode::ChannelMix;
    throw ValueError("unknown fa_gate mode \"" + s + "\" (expected shared_fc or channel_mix)");
}

const char* to_string(FAGateMode m) {
    return m == FAGateMode::SharedFrequencyFC ? "shared_fc" : "channel_mix";
}

void FASCSpec::validate() const {
    if (c_in < 2 || c_in % 2 != 0) {
        throw ValueError("FASC: c_in must be even and >= 2, got " + std::to_string(c_in));
    }
    if (c_out < 1) throw ValueError("FASC: c_out must be >= 1");
    const int c_mid = c_in / 2;
    if (c_mid % g1 != 0 || c_in % g1 != 0) {
        throw ValueError("FASC: g1 must divide c_in and c_in/2");
    }
    if (c_mid % g2 != 0 || c_out % g2 != 0) {
        throw ValueError("FASC: g2 must divide c_in/2 and c_out");
    }
    if (k_dw < 1 || k_dw % 2 == 0) throw ValueError("FASC: k_dw must be odd");
}

Value fa_forward(Context& ctx, const Value& x, const FAParamRefs& p, FAGateMode mode) {
    const kernels::Nchw d = kernels::nchw(x.tensor());
    if (p.pos.tensor().rank() != 1 || p.pos.tensor().dim(0) != d.h) {
        throw ShapeError("FA: encoding length " + p.pos.tensor().shape_str() +
                         " != frequency extent " + std::to_string(d.h));
    }
    Value gate_in;
    if (mode == FAGateMode::SharedFrequencyFC) {
        // temporal mean -> (N*C, F) -> shared FC -> (N, C) gates
        Value pooled = ops::avg_pool2d(ctx, x, 1, d.w);
        Value flat = ops::reshape(ctx, pooled, {d.n * d.c, d.h});
        Value fc = ops::linear(ctx, flat, p.att_w, &p.att_b);
        gate_in = ops::reshape(ctx, fc, d.batched ? std::vector<int>{d.n, d.c}
                                                  : std::vector<int>{d.c});
    } else {
        Value pooled = ops::global_avg_pool(ctx, x);  // (N, C)
        gate_in = ops::linear(ctx, pooled, p.att_w, &p.att_b);
    }
    Value gates = ops::sigmoid(ctx, gate_in);
    return ops::fa_inject(ctx, x, gates, p.pos);
}

Tensor fa_forward(const Tensor& x, const FABlock& fa) {
    Context ctx;
    FAParamRefs p{Value::raw(fa.pos), Value::raw(fa.att_w), Value::raw(fa.att_b)};
    return fa_forward(ctx, Value::raw(x), p, fa.mode).tensor();
}

Value fasc_forward(Context& ctx, const Value& x, const FASCParamRefs& p, const FASCSpec& spec,
                   FAGateMode mode) {
    spec.validate();
    const kernels::Nchw d = kernels::nchw(x.tensor());
    if (d.c != spec.c_in) {
        throw ShapeError("FASC: input has " + std::to_string(d.c) + " channels, spec expects " +
                         std::to_string(spec.c_in));
    }
    const int c_mid = spec.c_in / 2;
    Value h = fa_forward(ctx, x, p.fa, mode);
    h = ops::pointwise_group_conv(ctx, h, c_mid, spec.g1, p.pw1_w, &p.pw1_b);
    h = ops::depthwise_conv2d(ctx, h, spec.k_dw, spec.k_dw, p.dw_w, &p.dw_b);
    h = ops::channel_shuffle(ctx, h, spec.g2);
    h = ops::pointwise_group_conv(ctx, h, spec.c_out, spec.g2, p.pw2_w, &p.pw2_b);
    return h;
}

Tensor fasc_forward(const Tensor& x, const FASCBlock& blk) {
    Context ctx;
    FASCParamRefs p{
        {Value::raw(blk.fa.pos), Value::raw(blk.fa.att_w), Value::raw(blk.fa.att_b)},
        Value::raw(blk.pw1_w), Value::raw(blk.pw1_b),
        Value::raw(blk.dw_w),  Value::raw(blk.dw_b),
        Value::raw(blk.pw2_w), Value::raw(blk.pw2_b),
    };
    return fasc_forward(ctx, Value::raw(x), p, blk.spec, blk.fa.mode).tensor();
}

BlockCost fasc_cost(const FASCSpec& spec, FAGateMode mode, int F, int T) {
    spec.validate();
    const int c_mid = spec.c_in / 2;
    BlockCost out;
    auto push = [&](complexity::CostEntry e, const char* name) {
        e.name = name;
        out.params += e.params;
        out.macs += e.macs;
        out.entries.push_back(std::move(e));
    };
    push(complexity::fa_cost(spec.c_in, F, mode == FAGateMode::ChannelMix), "fa");
    push(complexity::pointwise_group_cost(spec.c_in, c_mid, spec.g1, F, T, true), "pw1");
    push(complexity::depthwise_cost(c_mid, spec.k_dw, spec.k_dw, F, T, true), "dw");
    push(complexity::zero_cost(complexity::LayerKind::Shuffle, "shuffle"), "shuffle");
    push(complexity::pointwise_group_cost(c_mid, spec.c_out, spec.g2, F, T, true), "pw2");
    return out;
}

std::uint64_t fasc_param_scalars(const FASCBlock& blk) {
    return blk.fa.pos.numel() + blk.fa.att_w.numel() + blk.fa.att_b.numel() +
           blk.pw1_w.numel() + blk.pw1_b.numel() + blk.dw_w.numel() + blk.dw_b.numel() +
           blk.pw2_w.numel() + blk.pw2_b.numel();
}

}  // namespace sfac::blocks
