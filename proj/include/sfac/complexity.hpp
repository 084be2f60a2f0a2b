#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sfac/kernels.hpp"

namespace sfac {
class Model;
}

namespace sfac::complexity {

// MAC = one multiplication in the inner loop. Biases, additions, comparisons
// and permutations count zero; BN carries 2C parameters and zero MACs.
// The linear convention is D_in * D_out (consistent with convolutions).

enum class LayerKind {
    Standard,
    Separable,
    GroupPointwise,
    Depthwise,
    MicroFactorized,
    Linear,
    FA,
    Shuffle,
    Pool,
    BatchNorm,
    Activation,
};

const char* to_string(LayerKind k);

struct CostEntry {
    std::string name;
    LayerKind kind = LayerKind::Standard;
    std::uint64_t params = 0;
    std::uint64_t macs = 0;
    // Portion of `params` that the bias/BN-excluded convention drops
    // (biases and BN affine pairs).
    std::uint64_t aux_params = 0;
    std::string notes;
};

CostEntry standard_conv_cost(const kernels::ConvSpec& spec, int H, int W);
CostEntry separable_conv_cost(int c_in, int c_out, int k_h, int k_w, int H, int W);
CostEntry micro_factorized_cost(int c_in, int c_int, int c_out, int k_h, int k_w, int H, int W);
CostEntry pointwise_group_cost(int c_in, int c_out, int groups, int H, int W, bool bias);
CostEntry depthwise_cost(int channels, int k_h, int k_w, int H, int W, bool bias);
CostEntry linear_cost(int d_in, int d_out, bool bias);
// Shared-FC gate: 2F+1 params, C*F MACs (the FC multiplies; the element-wise
// injection and pooling adds are excluded and noted). Channel-mix gate:
// F + C^2 + C params, C*C MACs.
CostEntry fa_cost(int channels, int freq_bins, bool channel_mix_gate);
CostEntry batch_norm_cost(int channels);
CostEntry zero_cost(LayerKind kind, const std::string& name);

struct ComplexityReport {
    std::vector<CostEntry> entries;
    std::uint64_t total_params = 0;       // gross: biases and BN counted
    std::uint64_t total_params_excl = 0;  // biases and BN excluded
    std::uint64_t total_macs = 0;
    std::string convention;

    void add(CostEntry e);
};

// Per-layer accounting for a built model, walking the stage plan.
ComplexityReport model_cost(const Model& model);

}  // namespace sfac::complexity
