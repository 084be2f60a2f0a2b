#include "sfac/profiler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <json.hpp>

namespace sfac::profiler {

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
}

class Session final : public ops::OpTimerHook {
public:
    void record_op(const char* op, ops::OpCategory cat, double ms) override {
        OpStat& s = per_op_[op];
        s.category = cat;
        s.total_ms += ms;
        s.calls += 1;
        run_attributed_ms_ += ms;
        switch (cat) {
            case ops::OpCategory::CoreArithmetic: run_core_ms_ += ms; break;
            case ops::OpCategory::TensorManipulation: run_tensor_ms_ += ms; break;
            case ops::OpCategory::Other: run_other_ms_ += ms; break;
        }
    }

    void begin_run() { run_core_ms_ = run_tensor_ms_ = run_other_ms_ = run_attributed_ms_ = 0.0; }

    double run_core_ms_ = 0.0;
    double run_tensor_ms_ = 0.0;
    double run_other_ms_ = 0.0;
    double run_attributed_ms_ = 0.0;
    std::map<std::string, OpStat> per_op_;
};

double measure_timer_overhead_ms() {
    // cost of one empty timed scope, median of a small sample
    constexpr int kProbes = 512;
    std::vector<double> costs(kProbes);
    for (int i = 0; i < kProbes; ++i) {
        const auto t0 = Clock::now();
        const auto t1 = Clock::now();
        costs[static_cast<std::size_t>(i)] = ms_between(t0, t1);
    }
    std::nth_element(costs.begin(), costs.begin() + kProbes / 2, costs.end());
    return costs[kProbes / 2];
}

std::string environment_note() {
    std::ostringstream os;
    os << "compiler " << __VERSION__ << "; timed region single-threaded";
#ifdef _OPENMP
    os << "; omp max threads available " << omp_get_max_threads();
#endif
    return os.str();
}

}  // namespace

double estimate_energy_uwh(double t_inf_ms, const EnergyParams& params) {
    if (t_inf_ms < 0.0) throw ValueError("energy: inference time must be >= 0");
    if (!(params.p_cpu_watts > 0.0)) throw ValueError("energy: CPU power must be > 0");
    if (!(params.utilization > 0.0 && params.utilization <= 1.0)) {
        throw ValueError("energy: utilization must lie in (0, 1]");
    }
    const double wh = params.utilization * params.p_cpu_watts * (t_inf_ms / 1000.0) / 3600.0;
    return wh * 1e6;
}

Attribution attribute(const ProfileReport& report, double threshold) {
    double core = 0.0, tensor = 0.0, other = 0.0;
    for (const auto& [name, s] : report.per_op) {
        switch (s.category) {
            case ops::OpCategory::CoreArithmetic: core += s.total_ms; break;
            case ops::OpCategory::TensorManipulation: tensor += s.total_ms; break;
            case ops::OpCategory::Other: other += s.total_ms; break;
        }
    }
    const double total = core + tensor + other;
    Attribution a;
    if (total > 0.0) {
        a.core_frac = core / total;
        a.tensor_frac = tensor / total;
        a.other_frac = other / total;
    }
    a.flagged = a.tensor_frac >= threshold;
    return a;
}

ProfileReport profile(const Model& model, const Tensor& input, int runs, int warmup,
                      const EnergyParams& energy, double threshold) {
    if (runs < 1) throw ValueError("profile: runs must be >= 1");
    if (warmup < 0) throw ValueError("profile: warmup must be >= 0");
    if (model.training()) throw ValueError("profile: model is in training mode");

    // single-threaded timed region for run-to-run stability
    const int prev_threads = kernels::max_threads();
    kernels::set_max_threads(1);

    ProfileReport report;
    report.runs = runs;
    report.warmup = warmup;
    report.flag_threshold = threshold;
    report.p_cpu_watts = energy.p_cpu_watts;
    report.timer_overhead_ms = measure_timer_overhead_ms();
    report.environment = environment_note();

    for (int i = 0; i < warmup; ++i) {
        (void)model.forward(input);
    }

    Session session;
    Model& m = const_cast<Model&>(model);  // inference forward; store untouched
    double core = 0.0, tensor = 0.0, other = 0.0, attributed = 0.0;
    report.latencies_ms.reserve(static_cast<std::size_t>(runs));
    for (int i = 0; i < runs; ++i) {
        session.begin_run();
        ops::Context ctx{nullptr, &session};
        const auto t0 = Clock::now();
        ops::Value out = m.forward(ctx, ops::Value::raw(input), false);
        const auto t1 = Clock::now();
        (void)out;
        report.latencies_ms.push_back(ms_between(t0, t1));
        core += session.run_core_ms_;
        tensor += session.run_tensor_ms_;
        other += session.run_other_ms_;
        attributed += session.run_attributed_ms_;
    }
    kernels::set_max_threads(prev_threads);

    double sum = 0.0;
    report.min_ms = report.latencies_ms[0];
    report.max_ms = report.latencies_ms[0];
    for (double v : report.latencies_ms) {
        sum += v;
        report.min_ms = std::min(report.min_ms, v);
        report.max_ms = std::max(report.max_ms, v);
    }
    report.mean_ms = sum / runs;
    double sq = 0.0;
    for (double v : report.latencies_ms) sq += (v - report.mean_ms) * (v - report.mean_ms);
    report.std_ms = std::sqrt(sq / runs);

    report.core_ms = core / runs;
    report.tensor_ms = tensor / runs;
    report.other_ms = other / runs;
    const double attr_mean = attributed / runs;
    report.attributed_fraction = report.mean_ms > 0.0 ? attr_mean / report.mean_ms : 0.0;
    if (attr_mean > 0.0) {
        report.core_frac = report.core_ms / attr_mean;
        report.tensor_frac = report.tensor_ms / attr_mean;
        report.other_frac = report.other_ms / attr_mean;
    }
    report.per_op = session.per_op_;
    report.tensor_overhead_flagged = report.tensor_frac >= threshold;
    report.energy_uwh = estimate_energy_uwh(report.mean_ms, energy);
    return report;
}

std::string ProfileReport::to_json() const {
    nlohmann::json j;
    j["runs"] = runs;
    j["warmup"] = warmup;
    j["latencies_ms"] = latencies_ms;
    j["mean_ms"] = mean_ms;
    j["std_ms"] = std_ms;
    j["min_ms"] = min_ms;
    j["max_ms"] = max_ms;
    j["core_ms"] = core_ms;
    j["tensor_ms"] = tensor_ms;
    j["other_ms"] = other_ms;
    j["core_frac"] = core_frac;
    j["tensor_frac"] = tensor_frac;
    j["other_frac"] = other_frac;
    j["attributed_fraction"] = attributed_fraction;
    j["timer_overhead_ms"] = timer_overhead_ms;
    j["energy_uwh"] = energy_uwh;
    j["p_cpu_watts"] = p_cpu_watts;
    j["tensor_overhead_flagged"] = tensor_overhead_flagged;
    j["flag_threshold"] = flag_threshold;
    j["environment"] = environment;
    nlohmann::json per;
    for (const auto& [name, s] : per_op) {
        nlohmann::json o;
        o["category"] = s.category == ops::OpCategory::CoreArithmetic ? "core_arithmetic"
                        : s.category == ops::OpCategory::TensorManipulation ? "tensor_manipulation"
                                                                            : "other";
        o["total_ms"] = s.total_ms;
        o["calls"] = s.calls;
        per[name] = o;
    }
    j["per_op"] = per;
    return j.dump(2);
}

}  // namespace sfac::profiler
