#pragma once

#include <optional>
#include <vector>

#include "sfac/autograd.hpp"
#include "sfac/kernels.hpp"

namespace sfac::ops {

using autograd::Tape;
using autograd::Value;
using kernels::ConvSpec;

// Static per-primitive category used by the latency profiler.
enum class OpCategory { CoreArithmetic, TensorManipulation, Other };

// Implemented by the profiler; ops report wall time per primitive call.
class OpTimerHook {
public:
    virtual ~OpTimerHook() = default;
    virtual void record_op(const char* op, OpCategory cat, double ms) = 0;
};

struct Context {
    Tape* tape = nullptr;
    OpTimerHook* prof = nullptr;
};

// Graph ops: forward through the kernel lanes; when ctx.tape is set, a vjp
// node is recorded. Parameters passed as untracked Values act as constants.
Value conv2d(Context& ctx, const Value& x, const ConvSpec& spec, const Value& w, const Value* b);
Value depthwise_conv2d(Context& ctx, const Value& x, int k_h, int k_w, const Value& w,
                       const Value* b);
Value pointwise_group_conv(Context& ctx, const Value& x, int c_out, int groups, const Value& w,
                           const Value* b);
Value channel_shuffle(Context& ctx, const Value& x, int groups);
Value avg_pool2d(Context& ctx, const Value& x, int pool_h, int pool_w);
Value global_avg_pool(Context& ctx, const Value& x);
Value batch_norm(Context& ctx, const Value& x, const Value& gamma, const Value& beta,
                 Tensor& running_mean, Tensor& running_var, bool training, double eps,
                 double momentum);
Value relu(Context& ctx, const Value& x);
Value sigmoid(Context& ctx, const Value& x);
Value linear(Context& ctx, const Value& x, const Value& w, const Value* b);
Value reshape(Context& ctx, const Value& x, std::vector<int> shape);
Value fa_inject(Context& ctx, const Value& x, const Value& gates, const Value& pos);
// Mean cross-entropy over the batch from raw logits (N,C) or (C), fused
// log-softmax.
Value cross_entropy(Context& ctx, const Value& logits, const std::vector<int>& labels);
// Scalar projection sum_i weights[i] * x[i]; weights are constants.
Value weighted_sum(Context& ctx, const Value& x, const Tensor& weights);

// Plain-tensor convenience wrappers (no tape, no profiling).
Tensor conv2d(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor* b);
Tensor depthwise_conv2d(const Tensor& x, int k_h, int k_w, const Tensor& w, const Tensor* b);
Tensor pointwise_group_conv(const Tensor& x, int c_out, int groups, const Tensor& w,
                            const Tensor* b);
Tensor channel_shuffle(const Tensor& x, int groups);
Tensor avg_pool2d(const Tensor& x, int pool_h, int pool_w);
Tensor global_avg_pool(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b);
double cross_entropy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace sfac::ops
