#include "sfac/complexity.hpp"

#include "sfac/model.hpp"

namespace sfac::complexity {

const char* to_string(LayerKind k) {
    switch (k) {
        case LayerKind::Standard: return "standard";
        case LayerKind::Separable: return "separable";
        case LayerKind::GroupPointwise: return "group-pointwise";
        case LayerKind::Depthwise: return "depthwise";
        case LayerKind::MicroFactorized: return "micro-factorized";
        case LayerKind::Linear: return "linear";
        case LayerKind::FA: return "fa";
        case LayerKind::Shuffle: return "shuffle";
        case LayerKind::Pool: return "pool";
        case LayerKind::BatchNorm: return "bn";
        case LayerKind::Activation: return "act";
    }
    return "?";
}

CostEntry standard_conv_cost(const kernels::ConvSpec& spec, int H, int W) {
    spec.validate();
    CostEntry e;
    e.name = "conv";
    e.kind = LayerKind::Standard;
    const std::uint64_t per_group =
        static_cast<std::uint64_t>(spec.k_h) * spec.k_w * (spec.c_in / spec.groups);
    e.params = per_group * spec.c_out;
    e.macs = static_cast<std::uint64_t>(H) * W * per_group * spec.c_out;
    if (spec.has_bias) {
        e.params += static_cast<std::uint64_t>(spec.c_out);
        e.aux_params = static_cast<std::uint64_t>(spec.c_out);
    }
    e.notes = "k*k*Cin*Cout/g weights; bias adds Cout params, 0 MACs";
    return e;
}

CostEntry separable_conv_cost(int c_in, int c_out, int k_h, int k_w, int H, int W) {
    if (c_in < 1 || c_out < 1 || k_h < 1 || k_w < 1) {
        throw ValueError("separable cost: dims must be >= 1");
    }
    CostEntry e;
    e.name = "separable";
    e.kind = LayerKind::Separable;
    e.params = static_cast<std::uint64_t>(c_in) * (static_cast<std::uint64_t>(k_h) * k_w + c_out);
    e.macs = static_cast<std::uint64_t>(H) * W *
             (static_cast<std::uint64_t>(k_h) * k_w * c_in +
              static_cast<std::uint64_t>(c_in) * c_out);
    e.notes = "depthwise + 1x1, no bias";
    return e;
}

CostEntry micro_factorized_cost(int c_in, int c_int, int c_out, int k_h, int k_w, int H, int W) {
    if (c_int < 1) throw ValueError("micro-factorized cost: c_int must be >= 1");
    if (c_in < 1 || c_out < 1 || k_h < 1 || k_w < 1) {
        throw ValueError("micro-factorized cost: dims must be >= 1");
    }
    CostEntry e;
    e.name = "micro-factorized";
    e.kind = LayerKind::MicroFactorized;
    e.params = static_cast<std::uint64_t>(c_in) * (k_h + k_w) +
               static_cast<std::uint64_t>(c_int) * (c_in + c_out);
    e.macs = (static_cast<std::uint64_t>(H) * k_h + static_cast<std::uint64_t>(W) * k_w) * c_in +
             static_cast<std::uint64_t>(H) * W * c_int * (c_in + c_out);
    e.notes = "spatial outer-product factorization + low-rank channel mixing";
    return e;
}

CostEntry pointwise_group_cost(int c_in, int c_out, int groups, int H, int W, bool bias) {
    kernels::ConvSpec spec{c_in, c_out, 1, 1, groups, bias};
    CostEntry e = standard_conv_cost(spec, H, W);
    e.name = "pointwise";
    e.kind = LayerKind::GroupPointwise;
    return e;
}

CostEntry depthwise_cost(int channels, int k_h, int k_w, int H, int W, bool bias) {
    kernels::ConvSpec spec{channels, channels, k_h, k_w, channels, bias};
    CostEntry e = standard_conv_cost(spec, H, W);
    e.name = "depthwise";
    e.kind = LayerKind::Depthwise;
    return e;
}

CostEntry linear_cost(int d_in, int d_out, bool bias) {
    if (d_in < 1 || d_out < 1) throw ValueError("linear cost: dims must be >= 1");
    CostEntry e;
    e.name = "linear";
    e.kind = LayerKind::Linear;
    e.params = static_cast<std::uint64_t>(d_in) * d_out;
    e.macs = static_cast<std::uint64_t>(d_in) * d_out;
    if (bias) {
        e.params += static_cast<std::uint64_t>(d_out);
        e.aux_params = static_cast<std::uint64_t>(d_out);
    }
    e.notes = "Din*Dout (not 2x)";
    return e;
}

CostEntry fa_cost(int channels, int freq_bins, bool channel_mix_gate) {
    CostEntry e;
    e.name = "fa";
    e.kind = LayerKind::FA;
    if (channel_mix_gate) {
        e.params = static_cast<std::uint64_t>(freq_bins) +
                   static_cast<std::uint64_t>(channels) * channels + channels;
        e.aux_params = static_cast<std::uint64_t>(channels);
        e.macs = static_cast<std::uint64_t>(channels) * channels;
        e.notes = "encoding + CxC gate FC; pooling/injection element-wise ops excluded from MACs";
    } else {
        e.params = 2ULL * freq_bins + 1;
        e.aux_params = 1;
        e.macs = static_cast<std::uint64_t>(channels) * freq_bins;
        e.notes = "encoding + shared F->1 gate FC; pooling/injection element-wise ops excluded "
                  "from MACs";
    }
    return e;
}

CostEntry batch_norm_cost(int channels) {
    CostEntry e;
    e.name = "bn";
    e.kind = LayerKind::BatchNorm;
    e.params = 2ULL * channels;
    e.aux_params = 2ULL * channels;
    e.macs = 0;
    e.notes = "2C affine params, 0 MACs by convention";
    return e;
}

CostEntry zero_cost(LayerKind kind, const std::string& name) {
    CostEntry e;
    e.name = name;
    e.kind = kind;
    e.notes = "0 params, 0 MACs by convention";
    return e;
}

void ComplexityReport::add(CostEntry e) {
    total_params += e.params;
    total_params_excl += e.params - e.aux_params;
    total_macs += e.macs;
    entries.push_back(std::move(e));
}

ComplexityReport model_cost(const Model& model) {
    const ShuffleFACConfig& cfg = model.config();
    const bool mix = cfg.fa_gate == blocks::FAGateMode::ChannelMix;
    ComplexityReport r;
    r.convention =
        "MAC = one inner-loop multiplication; biases/adds/permutations/pooling/BN/activations "
        "count 0 MACs; linear = Din*Dout; FA counts the gate FC multiplies only. Gross params "
        "include biases and BN; the excluded convention drops them.";

    auto rename = [](CostEntry e, const std::string& name) {
        e.name = name;
        return e;
    };

    for (const auto& d : model.stage_descs()) {
        if (d.name == "expand") {
            r.add(rename(fa_cost(d.c_in, d.f_in, mix), "expand.fa"));
            kernels::ConvSpec first{cfg.in_channels, cfg.gamma, cfg.k_first, cfg.k_first, 1, true};
            r.add(rename(standard_conv_cost(first, d.f_in, d.t_in), "expand.conv"));
            r.add(zero_cost(LayerKind::Activation, "expand.act"));
            r.add(rename(batch_norm_cost(d.c_out), "expand.bn"));
            r.add(zero_cost(LayerKind::Pool, "expand.pool"));
        } else if (d.is_fasc) {
            blocks::BlockCost bc = blocks::fasc_cost(d.fasc, cfg.fa_gate, d.f_in, d.t_in);
            for (auto& e : bc.entries) r.add(rename(e, d.name + "." + e.name));
            r.add(zero_cost(LayerKind::Activation, d.name + ".act"));
            r.add(rename(batch_norm_cost(d.c_out), d.name + ".bn"));
            r.add(zero_cost(LayerKind::Pool, d.name + ".pool"));
        } else {
            r.add(zero_cost(LayerKind::Pool, "classifier.gap"));
            r.add(rename(linear_cost(d.c_in, cfg.n_classes, true), "classifier.linear"));
        }
    }
    return r;
}

}  // namespace sfac::complexity
