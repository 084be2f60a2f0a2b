#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sfac/blocks.hpp"
#include "sfac/complexity.hpp"

namespace sfac {

// Architecture hyperparameters. The stage channel plan is
// {g, 2g, 4g, 8g, 8g, 8g, 8g} and the pooling plan (freq, time) is
// {(2,2),(2,2),(2,1),(2,1),(2,1),(2,1),(2,1)}, producing the fixed shape
// ladder g x 64 x 12 ... 8g x 1 x 6 from a (1,128,24) input.
struct ShuffleFACConfig {
    int gamma = 16;
    int k_first = 3;  // first-stage full convolution kernel
    int k_dw = 3;     // depthwise kernel inside FASC blocks
    int n_classes = 4;
    blocks::FAGateMode fa_gate = blocks::FAGateMode::SharedFrequencyFC;
    bool bn_before_act = false;  // printed stage order is activation, then BN
    int in_channels = 1;
    int in_freq = 128;
    int in_time = 24;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;

    void validate() const;
    std::vector<int> stage_channels() const;
    std::vector<std::pair<int, int>> stage_pool() const;  // (freq, time)
};

// Groups degrade from 2 to 1 when the channel count at that point is odd
// (only reachable for tiny gamma); the cost model uses the same rule.
int fasc_group_count(int c_a, int c_b);

// Ordered stage graph with a named parameter store. Immutable for inference;
// training mode updates BN running statistics during forward.
class Model {
public:
    static Model build(const ShuffleFACConfig& cfg, std::uint64_t seed);

    const ShuffleFACConfig& config() const { return cfg_; }

    const std::map<std::string, Tensor>& parameters() const { return params_; }
    std::map<std::string, Tensor>& mutable_parameters() { return params_; }
    const std::map<std::string, Tensor>& buffers() const { return buffers_; }
    std::map<std::string, Tensor>& mutable_buffers() { return buffers_; }
    std::uint64_t parameter_count() const;

    bool training() const { return training_; }
    void set_training(bool t) { training_ = t; }

    // Graph forward: records on ctx.tape when set, reports per-op timing to
    // ctx.prof when set. Input (1,F,T) yields (n_classes); (N,1,F,T) yields
    // (N,n_classes). Logits only; softmax lives in the loss.
    ops::Value forward(ops::Context& ctx, const ops::Value& x, bool training_mode);

    // Inference convenience; deterministic, does not touch running stats.
    Tensor forward(const Tensor& x) const;

    void save(const std::string& path) const;
    static Model load(const std::string& path);

    struct StageDesc {
        std::string name;
        std::string ops_desc;
        bool is_fasc = false;
        blocks::FASCSpec fasc;
        int c_in = 0, f_in = 0, t_in = 0;
        int c_out = 0, f_out = 0, t_out = 0;
        std::pair<int, int> pool{1, 1};
    };
    // Expansion stage, six FASC stages, classifier; shape walk included.
    std::vector<StageDesc> stage_descs() const;

private:
    ShuffleFACConfig cfg_;
    std::map<std::string, Tensor> params_;
    std::map<std::string, Tensor> buffers_;
    bool training_ = false;
};

struct SummaryRow {
    std::string stage;
    std::string config_desc;
    std::string out_shape;
    std::uint64_t params = 0;
    std::uint64_t macs = 0;
};

struct Summary {
    std::vector<SummaryRow> rows;
    complexity::ComplexityReport report;
};

Summary summarize(const Model& model);

}  // namespace sfac
