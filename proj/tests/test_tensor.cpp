#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sfac/tensor.hpp"
#include "sfac/tensor_io.hpp"
#include "test_util.hpp"

#include <fstream>

using namespace sfac;

TEST_CASE("shape/data consistency is enforced") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(Tensor(std::vector<int>{}), ShapeError);
    CHECK_THROWS_AS(Tensor({1, 2, 3, 4, 5}), ShapeError);
    CHECK_THROWS_AS(Tensor({0, 3}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, -1}), ShapeError);

    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.rank() == 2);
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t[i] == 0.0);
}

TEST_CASE("indexing is row-major") {
    Tensor t({2, 3}, {0, 1, 2, 3, 4, 5});
    CHECK(t.at(0, 2) == 2.0);
    CHECK(t.at(1, 0) == 3.0);
    Tensor u({2, 2, 2}, {0, 1, 2, 3, 4, 5, 6, 7});
    CHECK(u.at(1, 0, 1) == 5.0);
    Tensor v({1, 2, 2, 2}, {0, 1, 2, 3, 4, 5, 6, 7});
    CHECK(v.at(0, 1, 1, 0) == 6.0);
}

TEST_CASE("all_finite detects NaN and infinity") {
    Tensor t({3}, {1.0, 2.0, 3.0});
    CHECK(t.all_finite());
    t[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK(!t.all_finite());
    t[1] = std::numeric_limits<double>::infinity();
    CHECK(!t.all_finite());
}

TEST_CASE("sft1 round trip preserves f64 bits") {
    test_util::TempDir tmp("sft1");
    std::mt19937_64 rng(7);
    Tensor t = Tensor::uniform({2, 5, 3}, -4.0, 4.0, rng);
    t[0] = 1.0 / 3.0;
    write_sft1(tmp.path("a.sft1"), t);
    Tensor back = read_sft1(tmp.path("a.sft1"));
    CHECK(back.shape() == t.shape());
    CHECK(back == t);
}

TEST_CASE("sft1 f32 payload widens on read") {
    test_util::TempDir tmp("sft1f32");
    Tensor t({2, 2}, {0.5, -0.25, 1.0, 2.0});  // exactly representable in f32
    write_sft1(tmp.path("b.sft1"), t, Dtype::F32);
    Tensor back = read_sft1(tmp.path("b.sft1"));
    CHECK(back == t);
}

TEST_CASE("sft1 rejects corruption") {
    test_util::TempDir tmp("sft1bad");
    Tensor t({4}, {1, 2, 3, 4});
    const std::string path = tmp.path("c.sft1");
    write_sft1(path, t);

    SUBCASE("bad magic") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("XXXX", 4);
        f.close();
        CHECK_THROWS_AS(read_sft1(path), FormatError);
    }
    SUBCASE("truncated payload") {
        std::error_code ec;
        const auto size = std::filesystem::file_size(path, ec);
        std::filesystem::resize_file(path, size - 8, ec);
        CHECK_THROWS_AS(read_sft1(path), FormatError);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(read_sft1(tmp.path("nope.sft1")), FormatError); }
}
