#pragma once

#include "sfac/complexity.hpp"
#include "sfac/ops.hpp"

namespace sfac::blocks {

using ops::Context;
using ops::Value;

// How the frequency-aware gate is wired. SharedFrequencyFC: temporal mean
// pooling to (C,F), one shared FC mapping each channel's frequency profile
// to a scalar gate (w in R^F, scalar b), sigmoid. ChannelMix: global pooling
// to (C), then a C x C FC. SharedFrequencyFC is the default; it is the
// wiring consistent with the architecture's parameter budget.
enum class FAGateMode { SharedFrequencyFC, ChannelMix };

FAGateMode fa_gate_from_string(const std::string& s);
const char* to_string(FAGateMode m);

// Learnable frequency-positional bias gated per channel. `pos` has one value
// per frequency bin at this layer's resolution.
struct FABlock {
    FAGateMode mode = FAGateMode::SharedFrequencyFC;
    Tensor pos;    // (F)
    Tensor att_w;  // (1,F) shared gate, (C,C) channel-mix
    Tensor att_b;  // (1) shared gate, (C) channel-mix
};

struct FAParamRefs {
    Value pos;
    Value att_w;
    Value att_b;
};

// y[c,f,t] = x[c,f,t] + s[c] * pos[f]; the injected bias is constant along
// the time axis.
Value fa_forward(Context& ctx, const Value& x, const FAParamRefs& p, FAGateMode mode);
Tensor fa_forward(const Tensor& x, const FABlock& fa);

// FA -> pointwise group conv (g1=2, C_in -> C_in/2) -> depthwise k x k ->
// channel shuffle (g2) -> pointwise group conv (g2=2, C_in/2 -> C_out).
// Spatial dims preserved; pooling belongs to the enclosing stage.
struct FASCSpec {
    int c_in = 0;
    int c_out = 0;
    int k_dw = 3;
    int g1 = 2;
    int g2 = 2;
    void validate() const;
};

struct FASCBlock {
    FASCSpec spec;
    FABlock fa;
    Tensor pw1_w, pw1_b;
    Tensor dw_w, dw_b;
    Tensor pw2_w, pw2_b;
};

struct FASCParamRefs {
    FAParamRefs fa;
    Value pw1_w, pw1_b;
    Value dw_w, dw_b;
    Value pw2_w, pw2_b;
};

Value fasc_forward(Context& ctx, const Value& x, const FASCParamRefs& p, const FASCSpec& spec,
                   FAGateMode mode);
Tensor fasc_forward(const Tensor& x, const FASCBlock& blk);

// Analytic per-stage cost of one FASC block at spatial resolution F x T,
// delegating to the per-op formulas.
struct BlockCost {
    std::vector<complexity::CostEntry> entries;
    std::uint64_t params = 0;
    std::uint64_t macs = 0;
};
BlockCost fasc_cost(const FASCSpec& spec, FAGateMode mode, int F, int T);

// Exact number of stored learnable scalars in a constructed block.
std::uint64_t fasc_param_scalars(const FASCBlock& blk);

}  // namespace sfac::blocks
