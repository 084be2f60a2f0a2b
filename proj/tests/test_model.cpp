#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>

#include "sfac/model.hpp"
#include "test_util.hpp"

using namespace sfac;

namespace {

std::vector<std::vector<int>> expected_stage_shapes(int gamma) {
    return {{gamma, 64, 12},     {2 * gamma, 32, 6},  {4 * gamma, 16, 6}, {8 * gamma, 8, 6},
            {8 * gamma, 4, 6},   {8 * gamma, 2, 6},   {8 * gamma, 1, 6}};
}

}  // namespace

TEST_CASE("stage output shapes follow the fixed ladder for every gamma") {
    for (int gamma : {8, 16, 32, 64}) {
        ShuffleFACConfig cfg;
        cfg.gamma = gamma;
        Model m = Model::build(cfg, 0);
        const auto descs = m.stage_descs();
        REQUIRE(descs.size() == 9);  // expand + 6 FASC + classifier
        const auto want = expected_stage_shapes(gamma);
        for (std::size_t s = 0; s < 7; ++s) {
            CHECK(descs[s].c_out == want[s][0]);
            CHECK(descs[s].f_out == want[s][1]);
            CHECK(descs[s].t_out == want[s][2]);
        }
        CHECK(descs[8].c_out == 4);
        CHECK(descs[7].c_out == 8 * gamma);
    }
}

TEST_CASE("gamma=8 classifier maps 64 features to 4 classes") {
    ShuffleFACConfig cfg;
    cfg.gamma = 8;
    Model m = Model::build(cfg, 0);
    CHECK(m.parameters().at("classifier.linear.weight").shape() == std::vector<int>{4, 64});
    const auto descs = m.stage_descs();
    CHECK(descs[6].c_out == 64);
    CHECK(descs[6].f_out == 1);
    CHECK(descs[6].t_out == 6);
}

TEST_CASE("forward produces logits of the right shape, single and batched") {
    ShuffleFACConfig cfg;
    cfg.gamma = 8;
    Model m = Model::build(cfg, 1);
    std::mt19937_64 rng(2);
    Tensor x = test_util::random_tensor({1, 128, 24}, rng);
    Tensor logits = m.forward(x);
    CHECK(logits.shape() == std::vector<int>{4});
    CHECK(logits.all_finite());

    Tensor xb = test_util::random_tensor({3, 1, 128, 24}, rng);
    Tensor lb = m.forward(xb);
    CHECK(lb.shape() == std::vector<int>{3, 4});

    CHECK_THROWS_AS(m.forward(Tensor({1, 64, 24})), ShapeError);
}

TEST_CASE("same seed builds bit-identical parameter stores") {
    ShuffleFACConfig cfg;
    cfg.gamma = 16;
    Model a = Model::build(cfg, 123);
    Model b = Model::build(cfg, 123);
    CHECK(a.parameters().size() == b.parameters().size());
    for (const auto& [name, t] : a.parameters()) CHECK(t == b.parameters().at(name));
    Model c = Model::build(cfg, 124);
    bool any_diff = false;
    for (const auto& [name, t] : a.parameters()) {
        if (!(t == c.parameters().at(name))) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("all-zero parameters give all-zero logits") {
    ShuffleFACConfig cfg;
    cfg.gamma = 8;
    Model m = Model::build(cfg, 0);
    for (auto& [name, t] : m.mutable_parameters()) {
        std::fill(t.vec().begin(), t.vec().end(), 0.0);
    }
    std::mt19937_64 rng(3);
    Tensor logits = m.forward(test_util::random_tensor({1, 128, 24}, rng));
    for (std::size_t i = 0; i < logits.numel(); ++i) CHECK(logits[i] == 0.0);
}

TEST_CASE("inference forward is deterministic") {
    ShuffleFACConfig cfg;
    cfg.gamma = 8;
    Model m = Model::build(cfg, 5);
    std::mt19937_64 rng(6);
    Tensor x = test_util::random_tensor({1, 128, 24}, rng);
    CHECK(m.forward(x) == m.forward(x));
}

TEST_CASE("save/load round trip is bit-exact and forward-equivalent") {
    test_util::TempDir tmp("model");
    ShuffleFACConfig cfg;
    cfg.gamma = 8;
    cfg.k_dw = 5;
    Model m = Model::build(cfg, 7);
    std::mt19937_64 rng(8);
    Tensor x = test_util::random_tensor({1, 128, 24}, rng);
    Tensor before = m.forward(x);

    const std::string path = tmp.path("m.sfac");
    m.save(path);
    Model back = Model::load(path);
    CHECK(back.config().gamma == 8);
    CHECK(back.config().k_dw == 5);
    for (const auto& [name, t] : m.parameters()) CHECK(t == back.parameters().at(name));
    for (const auto& [name, t] : m.buffers()) CHECK(t == back.buffers().at(name));
    CHECK(back.forward(x) == before);
}

TEST_CASE("model container rejects corruption") {
    test_util::TempDir tmp("modelbad");
    ShuffleFACConfig cfg;
    cfg.gamma = 2;
    Model m = Model::build(cfg, 0);
    const std::string path = tmp.path("m.sfac");
    m.save(path);

    SUBCASE("bad magic") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("NOPE", 4);
        f.close();
        CHECK_THROWS_AS(Model::load(path), FormatError);
    }
    SUBCASE("payload corruption breaks the checksum") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(200);
        f.put('\x7f');
        f.close();
        CHECK_THROWS_AS(Model::load(path), FormatError);
    }
    SUBCASE("truncation") {
        std::error_code ec;
        const auto size = std::filesystem::file_size(path, ec);
        std::filesystem::resize_file(path, size - 16, ec);
        CHECK_THROWS_AS(Model::load(path), FormatError);
    }
}

TEST_CASE("summary: per-stage totals add up to the exact stored count") {
    for (int gamma : {2, 8, 16}) {
        ShuffleFACConfig cfg;
        cfg.gamma = gamma;
        Model m = Model::build(cfg, 0);
        Summary s = summarize(m);
        std::uint64_t row_params = 0;
        for (const auto& row : s.rows) row_params += row.params;
        CHECK(row_params == s.report.total_params);
        CHECK(s.report.total_params == m.parameter_count());
    }
}

TEST_CASE("doubling gamma scales MACs by a factor in (2,4)") {
    std::vector<std::uint64_t> macs;
    for (int gamma : {8, 16, 32, 64}) {
        ShuffleFACConfig cfg;
        cfg.gamma = gamma;
        Model m = Model::build(cfg, 0);
        macs.push_back(complexity::model_cost(m).total_macs);
    }
    for (std::size_t i = 1; i < macs.size(); ++i) {
        const double ratio = static_cast<double>(macs[i]) / static_cast<double>(macs[i - 1]);
        CHECK(ratio > 2.0);
        CHECK(ratio < 4.0);
    }
}

TEST_CASE("bn_before_act switch changes the computation") {
    ShuffleFACConfig a;
    a.gamma = 8;
    ShuffleFACConfig b = a;
    b.bn_before_act = true;
    Model ma = Model::build(a, 9);
    Model mb = Model::build(b, 9);
    std::mt19937_64 rng(10);
    Tensor x = test_util::random_tensor({1, 128, 24}, rng);
    CHECK(max_abs_diff(ma.forward(x), mb.forward(x)) > 0.0);
}

TEST_CASE("invalid configurations are rejected") {
    ShuffleFACConfig odd;
    odd.gamma = 7;
    CHECK_THROWS_AS(Model::build(odd, 0), ValueError);

    ShuffleFACConfig even_kernel;
    even_kernel.k_first = 4;
    CHECK_THROWS_AS(Model::build(even_kernel, 0), ValueError);

    ShuffleFACConfig indivisible;
    indivisible.in_freq = 96;
    CHECK_THROWS_AS(Model::build(indivisible, 0), ValueError);
}

TEST_CASE("channel_mix gate mode builds and runs") {
    ShuffleFACConfig cfg;
    cfg.gamma = 8;
    cfg.fa_gate = blocks::FAGateMode::ChannelMix;
    Model m = Model::build(cfg, 11);
    std::mt19937_64 rng(12);
    Tensor logits = m.forward(test_util::random_tensor({1, 128, 24}, rng));
    CHECK(logits.shape() == std::vector<int>{4});
    CHECK(complexity::model_cost(m).total_params == m.parameter_count());
}
