#pragma once

#include <cstdint>
#include <utility>

#include "sfac/tensor.hpp"

namespace sfac::kernels {

// Stride is fixed at 1 and padding is zero "same" padding everywhere: the
// stage shape plan only works if convolutions preserve spatial dims and
// pooling does all downsampling.
struct ConvSpec {
    int c_in = 0;
    int c_out = 0;
    int k_h = 1;
    int k_w = 1;
    int groups = 1;
    bool has_bias = true;

    void validate() const;
};

// Two kernel lanes behind one contract. Reference = naive serial loops,
// instrumentable with a multiply counter; OpenMP = parallel production lane.
// Both lanes accumulate in the same per-element order, so outputs are
// bit-identical.
enum class Backend { Reference, OpenMP };

void set_backend(Backend b);
Backend backend();

struct BackendGuard {
    explicit BackendGuard(Backend b) : prev_(backend()) { set_backend(b); }
    ~BackendGuard() { set_backend(prev_); }
    Backend prev_;
};

// Thread cap for the OpenMP lane (<=1 runs the serial bodies).
void set_max_threads(int n);
int max_threads();

// Counts multiplications executed at the MAC-bearing sites of the Reference
// lane (conv taps, pointwise/depthwise taps, linear products). Element-wise
// ops, pooling, normalization, and permutations are zero by convention.
struct MacCountGuard {
    explicit MacCountGuard(std::uint64_t* counter);
    ~MacCountGuard();
    MacCountGuard(const MacCountGuard&) = delete;
    MacCountGuard& operator=(const MacCountGuard&) = delete;

private:
    std::uint64_t* prev_;
};

// Activation layout: (C,H,W) or (N,C,H,W); dims helper.
struct Nchw {
    int n, c, h, w;
    bool batched;
};
Nchw nchw(const Tensor& x);

// ---- forward ----
Tensor conv2d_forward(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor* b);
Tensor depthwise_forward(const Tensor& x, int k_h, int k_w, const Tensor& w, const Tensor* b);
Tensor pointwise_group_forward(const Tensor& x, int c_out, int groups, const Tensor& w,
                               const Tensor* b);
Tensor channel_shuffle_forward(const Tensor& x, int groups);
Tensor avg_pool_forward(const Tensor& x, int pool_h, int pool_w);
Tensor global_avg_pool_forward(const Tensor& x);
Tensor relu_forward(const Tensor& x);
Tensor sigmoid_forward(const Tensor& x);
Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor* b);
Tensor fa_inject_forward(const Tensor& x, const Tensor& gates, const Tensor& pos);

struct BatchNormCache {
    Tensor mean;     // (C)
    Tensor inv_std;  // (C)
};
// Biased (1/m) variance is used both for normalization and for the running
// stats update: new = (1-momentum)*old + momentum*batch.
Tensor batch_norm_train_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                Tensor& running_mean, Tensor& running_var, double eps,
                                double momentum, BatchNormCache& cache);
Tensor batch_norm_infer_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                const Tensor& running_mean, const Tensor& running_var, double eps);

// ---- backward (gather-style: each output slot owned by one thread) ----
void conv2d_backward(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& gy,
                     Tensor* gx, Tensor* gw, Tensor* gb);
void depthwise_backward(const Tensor& x, int k_h, int k_w, const Tensor& w, const Tensor& gy,
                        Tensor* gx, Tensor* gw, Tensor* gb);
void pointwise_group_backward(const Tensor& x, int c_out, int groups, const Tensor& w,
                              const Tensor& gy, Tensor* gx, Tensor* gw, Tensor* gb);
Tensor channel_shuffle_backward(const Tensor& gy, int groups);
Tensor avg_pool_backward(const Tensor& gy, int pool_h, int pool_w);
Tensor global_avg_pool_backward(const Tensor& gy, int h, int w);
Tensor relu_backward(const Tensor& x, const Tensor& gy);
Tensor sigmoid_backward(const Tensor& y, const Tensor& gy);
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor* gx, Tensor* gw,
                     Tensor* gb);
void fa_inject_backward(const Tensor& gates, const Tensor& pos, const Tensor& gy, Tensor* gx,
                        Tensor* ggates, Tensor* gpos);
void batch_norm_train_backward(const Tensor& x, const Tensor& gamma, const BatchNormCache& cache,
                               const Tensor& gy, Tensor* gx, Tensor* ggamma, Tensor* gbeta);

}  // namespace sfac::kernels
