#pragma once

#include <map>
#include <string>
#include <vector>

#include "sfac/model.hpp"

namespace sfac::profiler {

struct EnergyParams {
    double p_cpu_watts = 10.0;  // hardware dependent; echoed into the report
    double utilization = 0.9;
};

// E = u * P * t / 3600 in Wh, reported in microwatt-hours.
double estimate_energy_uwh(double t_inf_ms, const EnergyParams& params);

struct OpStat {
    ops::OpCategory category = ops::OpCategory::Other;
    double total_ms = 0.0;
    std::uint64_t calls = 0;
};

struct ProfileReport {
    int runs = 0;
    int warmup = 0;
    std::vector<double> latencies_ms;
    double mean_ms = 0.0;
    double std_ms = 0.0;  // population std; 0 for a single run
    double min_ms = 0.0;
    double max_ms = 0.0;

    // per-run means, and fractions over attributed time
    double core_ms = 0.0;
    double tensor_ms = 0.0;
    double other_ms = 0.0;
    double core_frac = 0.0;
    double tensor_frac = 0.0;
    double other_frac = 0.0;
    double attributed_fraction = 0.0;  // attributed time / mean wall time

    std::map<std::string, OpStat> per_op;  // totals across all timed runs

    double timer_overhead_ms = 0.0;  // measured empty-scope cost, not subtracted
    double energy_uwh = 0.0;
    double p_cpu_watts = 0.0;

    bool tensor_overhead_flagged = false;  // tensor fraction >= threshold
    double flag_threshold = 0.15;

    std::string environment;
    std::string to_json() const;
};

// Category fractions recomputed from a report's per-op breakdown; flags the
// regime where tensor-manipulation overhead makes MAC counts an unreliable
// latency proxy.
struct Attribution {
    double core_frac = 0.0;
    double tensor_frac = 0.0;
    double other_frac = 0.0;
    bool flagged = false;
};
Attribution attribute(const ProfileReport& report, double threshold = 0.15);

// Times `runs` single-clip forwards after `warmup` discarded runs. The timed
// region is forced single-threaded and excludes feature extraction and model
// loading. Rejects models left in training mode.
ProfileReport profile(const Model& model, const Tensor& input, int runs, int warmup,
                      const EnergyParams& energy = {}, double threshold = 0.15);

}  // namespace sfac::profiler
