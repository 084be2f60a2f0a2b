#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "grad_check.hpp"
#include "test_util.hpp"

using namespace sfac;
using ops::Context;
using ops::Value;

namespace {

// keep relu inputs away from the kink so finite differences are valid
Tensor random_away_from_zero(std::vector<int> shape, std::mt19937_64& rng) {
    Tensor t = test_util::random_tensor(std::move(shape), rng);
    for (auto& v : t.vec()) {
        if (std::abs(v) < 0.05) v = v < 0 ? v - 0.1 : v + 0.1;
    }
    return t;
}

Tensor projection(const std::vector<int>& shape, std::mt19937_64& rng) {
    return test_util::random_tensor(shape, rng, -1.0, 1.0);
}

}  // namespace

TEST_CASE("relu subgradient example: d/dx sum(relu(x)) at [-1,2] is [0,1]") {
    autograd::Tape tape;
    Context ctx{&tape, nullptr};
    Value x = tape.param("x", Tensor({2}, {-1.0, 2.0}));
    Value loss = ops::weighted_sum(ctx, ops::relu(ctx, x), Tensor::full({2}, 1.0));
    tape.backward(loss);
    const Tensor& g = tape.gradients().at("x");
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 1.0);
}

TEST_CASE("finite differences: every primitive op") {
    std::mt19937_64 rng(100);

    SUBCASE("conv2d") {
        std::map<std::string, Tensor> params;
        params["x"] = test_util::random_tensor({2, 2, 4, 5}, rng);
        params["w"] = test_util::random_tensor({4, 1, 3, 3}, rng);
        params["b"] = test_util::random_tensor({4}, rng);
        Tensor proj = projection({2, 4, 4, 5}, rng);
        auto fn = [&, proj](Context& ctx, const std::map<std::string, Value>& v) {
            kernels::ConvSpec spec{2, 4, 3, 3, 2, true};
            Value y = ops::conv2d(ctx, v.at("x"), spec, v.at("w"), &v.at("b"));
            return ops::weighted_sum(ctx, y, proj);
        };
        auto r = grad_check::check(fn, params);
        CHECK(r.max_rel_err < 1e-6);
    }

    SUBCASE("depthwise") {
        std::map<std::string, Tensor> params;
        params["x"] = test_util::random_tensor({3, 4, 4}, rng);
        params["w"] = test_util::random_tensor({3, 1, 3, 3}, rng);
        params["b"] = test_util::random_tensor({3}, rng);
        Tensor proj = projection({3, 4, 4}, rng);
        auto fn = [&, proj](Context& ctx, const std::map<std::string, Value>& v) {
            Value y = ops::depthwise_conv2d(ctx, v.at("x"), 3, 3, v.at("w"), &v.at("b"));
            return ops::weighted_sum(ctx, y, proj);
        };
        CHECK(grad_check::check(fn, params).max_rel_err < 1e-6);
    }

    SUBCASE("pointwise group") {
        std::map<std::string, Tensor> params;
        params["x"] = test_util::random_tensor({4, 3, 3}, rng);
        params["w"] = test_util::random_tensor({6, 2, 1, 1}, rng);
        params["b"] = test_util::random_tensor({6}, rng);
        Tensor proj = projection({6, 3, 3}, rng);
        auto fn = [&, proj](Context& ctx, const std::map<std::string, Value>& v) {
            Value y = ops::pointwise_group_conv(ctx, v.at("x"), 6, 2, v.at("w"), &v.at("b"));
            return ops::weighted_sum(ctx, y, proj);
        };
        CHECK(grad_check::check(fn, params).max_rel_err < 1e-6);
    }

    SUBCASE("channel shuffle and reshape") {
        std::map<std::string, Tensor> params;
        params["x"] = test_util::random_tensor({6, 2, 3}, rng);
        Tensor proj = projection({36}, rng);
        auto fn = [&, proj](Context& ctx, const std::map<std::string, Value>& v) {
            Value y = ops::channel_shuffle(ctx, v.at("x"), 3);
            y = ops::reshape(ctx, y, {36});
            return ops::weighted_sum(ctx, y, proj);
        };
        CHECK(grad_check::check(fn, params).max_rel_err < 1e-6);
    }

    SUBCASE("avg_pool and global_avg_pool") {
        std::map<std::string, Tensor> params;
        params["x"] = test_util::random_tensor({2, 3, 4, 6}, rng);
        Tensor proj1 = projection({2, 3, 2, 3}, rng);
        auto fn1 = [&, proj1](Context& ctx, const std::map<std::string, Value>& v) {
            return ops::weighted_sum(ctx, ops::avg_pool2d(ctx, v.at("x"), 2, 2), proj1);
        };
        CHECK(grad_check::check(fn1, params).max_rel_err < 1e-6);

        Tensor proj2 = projection({2, 3}, rng);
        auto fn2 = [&, proj2](Context& ctx, const std::map<std::string, Value>& v) {
            return ops::weighted_sum(ctx, ops::global_avg_pool(ctx, v.at("x")), proj2);
        };
        CHECK(grad_check::check(fn2, params).max_rel_err < 1e-6);
    }

    SUBCASE("batch_norm (train mode, batch of 2)") {
        std::map<std::string, Tensor> params;
        params["x"] = test_util::random_tensor({2, 3, 2, 4}, rng);
        params["gamma"] = test_util::random_tensor({3}, rng, 0.5, 1.5);
        params["beta"] = test_util::random_tensor({3}, rng);
        Tensor proj = projection({2, 3, 2, 4}, rng);
        auto fn = [&, proj](Context& ctx, const std::map<std::string, Value>& v) {
            Tensor rm({3}), rv = Tensor::full({3}, 1.0);
            Value y = ops::batch_norm(ctx, v.at("x"), v.at("gamma"), v.at("beta"), rm, rv, true,
                                      1e-5, 0.1);
            return ops::weighted_sum(ctx, y, proj);
        };
        CHECK(grad_check::check(fn, params).max_rel_err < 1e-6);
    }

    SUBCASE("batch_norm (infer mode, constant stats)") {
        std::map<std::string, Tensor> params;
        params["x"] = test_util::random_tensor({2, 3, 2, 2}, rng);
        params["gamma"] = test_util::random_tensor({3}, rng, 0.5, 1.5);
        params["beta"] = test_util::random_tensor({3}, rng);
        Tensor rm = test_util::random_tensor({3}, rng);
        Tensor rv = test_util::random_tensor({3}, rng, 0.5, 2.0);
        Tensor proj = projection({2, 3, 2, 2}, rng);
        auto fn = [&, proj, rm, rv](Context& ctx, const std::map<std::string, Value>& v) {
            Tensor rm_copy = rm, rv_copy = rv;
            Value y = ops::batch_norm(ctx, v.at("x"), v.at("gamma"), v.at("beta"), rm_copy,
                                      rv_copy, false, 1e-5, 0.1);
            return ops::weighted_sum(ctx, y, proj);
        };
        CHECK(grad_check::check(fn, params).max_rel_err < 1e-6);
    }

    SUBCASE("relu and sigmoid") {
        std::map<std::string, Tensor> params;
        params["x"] = random_away_from_zero({3, 4}, rng);
        Tensor proj = projection({3, 4}, rng);
        auto fn_relu = [&, proj](Context& ctx, const std::map<std::string, Value>& v) {
            return ops::weighted_sum(ctx, ops::relu(ctx, v.at("x")), proj);
        };
        CHECK(grad_check::check(fn_relu, params).max_rel_err < 1e-6);

        auto fn_sig = [&, proj](Context& ctx, const std::map<std::string, Value>& v) {
            return ops::weighted_sum(ctx, ops::sigmoid(ctx, v.at("x")), proj);
        };
        CHECK(grad_check::check(fn_sig, params).max_rel_err < 1e-6);
    }

    SUBCASE("linear") {
        std::map<std::string, Tensor> params;
        params["x"] = test_util::random_tensor({3, 5}, rng);
        params["w"] = test_util::random_tensor({4, 5}, rng);
        params["b"] = test_util::random_tensor({4}, rng);
        Tensor proj = projection({3, 4}, rng);
        auto fn = [&, proj](Context& ctx, const std::map<std::string, Value>& v) {
            return ops::weighted_sum(ctx, ops::linear(ctx, v.at("x"), v.at("w"), &v.at("b")),
                                     proj);
        };
        CHECK(grad_check::check(fn, params).max_rel_err < 1e-6);
    }

    SUBCASE("fa_inject") {
        std::map<std::string, Tensor> params;
        params["x"] = test_util::random_tensor({2, 3, 4, 5}, rng);
        params["gates"] = test_util::random_tensor({2, 3}, rng);
        params["pos"] = test_util::random_tensor({4}, rng);
        Tensor proj = projection({2, 3, 4, 5}, rng);
        auto fn = [&, proj](Context& ctx, const std::map<std::string, Value>& v) {
            Value y = ops::fa_inject(ctx, v.at("x"), v.at("gates"), v.at("pos"));
            return ops::weighted_sum(ctx, y, proj);
        };
        CHECK(grad_check::check(fn, params).max_rel_err < 1e-6);
    }

    SUBCASE("cross_entropy") {
        std::map<std::string, Tensor> params;
        params["logits"] = test_util::random_tensor({3, 4}, rng, -2.0, 2.0);
        const std::vector<int> labels = {2, 0, 3};
        auto fn = [&, labels](Context& ctx, const std::map<std::string, Value>& v) {
            return ops::cross_entropy(ctx, v.at("logits"), labels);
        };
        CHECK(grad_check::check(fn, params).max_rel_err < 1e-6);
    }
}

TEST_CASE("composition: conv -> relu -> global_avg_pool -> linear") {
    std::mt19937_64 rng(200);
    std::map<std::string, Tensor> params;
    params["x"] = test_util::random_tensor({1, 2, 6, 5}, rng);
    params["cw"] = test_util::random_tensor({4, 2, 3, 3}, rng);
    params["cb"] = test_util::random_tensor({4}, rng);
    params["lw"] = test_util::random_tensor({3, 4}, rng);
    params["lb"] = test_util::random_tensor({3}, rng);
    Tensor proj = projection({1, 3}, rng);
    auto fn = [&, proj](Context& ctx, const std::map<std::string, Value>& v) {
        kernels::ConvSpec spec{2, 4, 3, 3, 1, true};
        Value h = ops::conv2d(ctx, v.at("x"), spec, v.at("cw"), &v.at("cb"));
        h = ops::relu(ctx, h);
        h = ops::global_avg_pool(ctx, h);
        h = ops::linear(ctx, h, v.at("lw"), &v.at("lb"));
        return ops::weighted_sum(ctx, h, proj);
    };
    CHECK(grad_check::check(fn, params).max_rel_err < 1e-5);
}

TEST_CASE("a parameter used in two roles accumulates both contributions") {
    autograd::Tape tape;
    Context ctx{&tape, nullptr};
    // y[c,f,t] = p[c] * p[f] on zero input; loss = sum(y) = T * (sum p)^2
    Value x = tape.leaf(Tensor({2, 2, 3}));
    Value p = tape.param("p", Tensor({2}, {0.5, -0.25}));
    Value y = ops::fa_inject(ctx, x, p, p);
    Value loss = ops::weighted_sum(ctx, y, Tensor::full({2, 2, 3}, 1.0));
    tape.backward(loss);
    const Tensor& g = tape.gradients().at("p");
    const double expected = 6.0 * (0.5 - 0.25);  // d/dp_k [3*S^2] = 6S
    CHECK(g[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(g[1] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("untouched parameters receive zero gradients") {
    autograd::Tape tape;
    Context ctx{&tape, nullptr};
    Value used = tape.param("used", Tensor({2}, {1.0, 2.0}));
    Value unused = tape.param("unused", Tensor({3}, {5.0, 6.0, 7.0}));
    (void)unused;
    Value loss = ops::weighted_sum(ctx, used, Tensor({2}, {1.0, 1.0}));
    tape.backward(loss);
    const Tensor& g = tape.gradients().at("unused");
    CHECK(g.shape() == std::vector<int>{3});
    for (std::size_t i = 0; i < 3; ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("backward rejects misuse") {
    SUBCASE("no recorded forward") {
        autograd::Tape tape;
        CHECK_THROWS_AS(tape.backward(ops::Value::raw(Tensor::scalar(1.0))), ValueError);
    }
    SUBCASE("non-scalar loss") {
        autograd::Tape tape;
        Context ctx{&tape, nullptr};
        Value x = tape.param("x", Tensor({2}, {1.0, 2.0}));
        Value y = ops::relu(ctx, x);
        CHECK_THROWS_AS(tape.backward(y), ShapeError);
    }
    SUBCASE("double backward") {
        autograd::Tape tape;
        Context ctx{&tape, nullptr};
        Value x = tape.param("x", Tensor({2}, {1.0, 2.0}));
        Value loss = ops::weighted_sum(ctx, x, Tensor::full({2}, 1.0));
        tape.backward(loss);
        CHECK_THROWS_AS(tape.backward(loss), ValueError);
    }
}
