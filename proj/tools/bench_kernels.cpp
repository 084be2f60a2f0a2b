// Benchmark comparing the serial reference lane against the OpenMP lane on
// the stage shapes the network actually runs, plus whole-model forward.
// Usage: sfac-bench [batch] [repeats]

#include <chrono>
#include <iomanip>
#include <iostream>
#include <random>
#include <vector>

#include "sfac/model.hpp"

using namespace sfac;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int repeats) {
    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(repeats));
    for (int i = 0; i < repeats; ++i) {
        const auto t0 = Clock::now();
        fn();
        const auto t1 = Clock::now();
        samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(samples.begin(), samples.end());
    return samples[samples.size() / 2];  // median
}

void row(const std::string& name, const std::string& shape, double ref_ms, double omp_ms) {
    std::cout << std::left << std::setw(26) << name << std::setw(22) << shape << std::right
              << std::fixed << std::setprecision(3) << std::setw(12) << ref_ms << std::setw(12)
              << omp_ms << std::setw(10) << std::setprecision(2) << ref_ms / omp_ms << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    const int batch = argc > 1 ? std::atoi(argv[1]) : 16;
    const int repeats = argc > 2 ? std::atoi(argv[2]) : 5;
    std::mt19937_64 rng(0);

    std::cout << "threads available to the OpenMP lane: " << kernels::max_threads() << "\n\n";
    std::cout << std::left << std::setw(26) << "kernel" << std::setw(22) << "shape" << std::right
              << std::setw(12) << "ref ms" << std::setw(12) << "omp ms" << std::setw(10)
              << "speedup" << "\n";

    struct Case {
        int c_in, c_out, f, t, k, g;
    };
    // FASC stage shapes at gamma=16 plus the expansion conv
    const std::vector<Case> convs = {
        {1, 16, 128, 24, 3, 1}, {16, 8, 64, 12, 1, 2}, {8, 8, 64, 12, 3, 8},
        {64, 32, 16, 6, 1, 2},  {128, 128, 4, 6, 1, 2},
    };
    for (const auto& cs : convs) {
        kernels::ConvSpec spec{cs.c_in, cs.c_out, cs.k, cs.k, cs.g, true};
        Tensor x = Tensor::uniform({batch, cs.c_in, cs.f, cs.t}, -1, 1, rng);
        Tensor w = Tensor::uniform({cs.c_out, cs.c_in / cs.g, cs.k, cs.k}, -1, 1, rng);
        Tensor b = Tensor::uniform({cs.c_out}, -1, 1, rng);
        double ref_ms, omp_ms;
        {
            kernels::BackendGuard g2(kernels::Backend::Reference);
            ref_ms = time_ms([&] { (void)kernels::conv2d_forward(x, spec, w, &b); }, repeats);
        }
        {
            kernels::BackendGuard g2(kernels::Backend::OpenMP);
            omp_ms = time_ms([&] { (void)kernels::conv2d_forward(x, spec, w, &b); }, repeats);
        }
        std::ostringstream shape;
        shape << batch << "x" << cs.c_in << "x" << cs.f << "x" << cs.t << " k" << cs.k << " g"
              << cs.g;
        row("conv2d", shape.str(), ref_ms, omp_ms);
    }

    {
        Tensor x = Tensor::uniform({batch, 64, 16, 6}, -1, 1, rng);
        Tensor gm = Tensor::full({64}, 1.0), bt = Tensor({64});
        Tensor rm({64}), rv = Tensor::full({64}, 1.0);
        kernels::BatchNormCache cache;
        double ref_ms, omp_ms;
        {
            kernels::BackendGuard g2(kernels::Backend::Reference);
            ref_ms = time_ms(
                [&] { (void)kernels::batch_norm_train_forward(x, gm, bt, rm, rv, 1e-5, 0.1, cache); },
                repeats);
        }
        {
            kernels::BackendGuard g2(kernels::Backend::OpenMP);
            omp_ms = time_ms(
                [&] { (void)kernels::batch_norm_train_forward(x, gm, bt, rm, rv, 1e-5, 0.1, cache); },
                repeats);
        }
        std::ostringstream shape;
        shape << batch << "x64x16x6";
        row("batch_norm(train)", shape.str(), ref_ms, omp_ms);
    }

    for (int gamma : {8, 16, 32}) {
        ShuffleFACConfig cfg;
        cfg.gamma = gamma;
        Model model = Model::build(cfg, 0);
        Tensor x = Tensor::uniform({batch, 1, 128, 24}, -1, 1, rng);
        double ref_ms, omp_ms;
        {
            kernels::BackendGuard g2(kernels::Backend::Reference);
            ref_ms = time_ms([&] { (void)model.forward(x); }, repeats);
        }
        {
            kernels::BackendGuard g2(kernels::Backend::OpenMP);
            omp_ms = time_ms([&] { (void)model.forward(x); }, repeats);
        }
        std::ostringstream shape;
        shape << "gamma=" << gamma << " batch=" << batch;
        row("model forward", shape.str(), ref_ms, omp_ms);
    }
    return 0;
}
