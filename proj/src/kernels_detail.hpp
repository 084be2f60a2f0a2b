#pragma once

#include "sfac/kernels.hpp"

// Internal split between the two kernel lanes. Both lanes accumulate each
// output slot in the same order, so results are bit-identical; tests rely
// on that.
namespace sfac::kernels {

std::uint64_t* mac_counter();

namespace ref {
Tensor conv2d_forward(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor* b);
Tensor depthwise_forward(const Tensor& x, int k_h, int k_w, const Tensor& w, const Tensor* b);
Tensor pointwise_group_forward(const Tensor& x, int c_out, int groups, const Tensor& w,
                               const Tensor* b);
Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor* b);
Tensor avg_pool_forward(const Tensor& x, int pool_h, int pool_w);
Tensor fa_inject_forward(const Tensor& x, const Tensor& gates, const Tensor& pos);
Tensor batch_norm_train_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                Tensor& running_mean, Tensor& running_var, double eps,
                                double momentum, BatchNormCache& cache);
Tensor batch_norm_infer_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                const Tensor& running_mean, const Tensor& running_var, double eps);
void conv2d_backward(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& gy,
                     Tensor* gx, Tensor* gw, Tensor* gb);
void depthwise_backward(const Tensor& x, int k_h, int k_w, const Tensor& w, const Tensor& gy,
                        Tensor* gx, Tensor* gw, Tensor* gb);
void pointwise_group_backward(const Tensor& x, int c_out, int groups, const Tensor& w,
                              const Tensor& gy, Tensor* gx, Tensor* gw, Tensor* gb);
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor* gx, Tensor* gw,
                     Tensor* gb);
void batch_norm_train_backward(const Tensor& x, const Tensor& gamma, const BatchNormCache& cache,
                               const Tensor& gy, Tensor* gx, Tensor* ggamma, Tensor* gbeta);
void fa_inject_backward(const Tensor& gates, const Tensor& pos, const Tensor& gy, Tensor* gx,
                        Tensor* ggates, Tensor* gpos);
}  // namespace ref

namespace par {
Tensor conv2d_forward(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor* b);
Tensor depthwise_forward(const Tensor& x, int k_h, int k_w, const Tensor& w, const Tensor* b);
Tensor pointwise_group_forward(const Tensor& x, int c_out, int groups, const Tensor& w,
                               const Tensor* b);
Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor* b);
Tensor avg_pool_forward(const Tensor& x, int pool_h, int pool_w);
Tensor fa_inject_forward(const Tensor& x, const Tensor& gates, const Tensor& pos);
Tensor batch_norm_train_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                Tensor& running_mean, Tensor& running_var, double eps,
                                double momentum, BatchNormCache& cache);
Tensor batch_norm_infer_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                const Tensor& running_mean, const Tensor& running_var, double eps);
void conv2d_backward(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& gy,
                     Tensor* gx, Tensor* gw, Tensor* gb);
void depthwise_backward(const Tensor& x, int k_h, int k_w, const Tensor& w, const Tensor& gy,
                        Tensor* gx, Tensor* gw, Tensor* gb);
void pointwise_group_backward(const Tensor& x, int c_out, int groups, const Tensor& w,
                              const Tensor& gy, Tensor* gx, Tensor* gw, Tensor* gb);
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor* gx, Tensor* gw,
                     Tensor* gb);
void batch_norm_train_backward(const Tensor& x, const Tensor& gamma, const BatchNormCache& cache,
                               const Tensor& gy, Tensor* gx, Tensor* ggamma, Tensor* gbeta);
void fa_inject_backward(const Tensor& gates, const Tensor& pos, const Tensor& gy, Tensor* gx,
                        Tensor* ggates, Tensor* gpos);
}  // namespace par

// Shared shape checks used by both lanes' dispatch wrappers.
namespace checks {
void conv(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor* b);
void linear(const Tensor& x, const Tensor& w, const Tensor* b);
void batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Tensor& rm,
                const Tensor& rv);
void fa_inject(const Tensor& x, const Tensor& gates, const Tensor& pos);
}  // namespace checks

}  // namespace sfac::kernels
