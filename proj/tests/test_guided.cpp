#include <doctest.h>

#include "ixn/guided.hpp"
#include "ixn/index_functions.hpp"
#include "ixn/random.hpp"
#include "oracles.hpp"

using namespace ixn;

namespace {

Tensor<double> rnd(Shape s, std::uint64_t seed) {
    Rng rng(seed);
    return random_uniform<double>(s, rng);
}

/// Applies an index function window by window over non-overlapping k x k
/// regions, assembling a full-resolution index map.
template <typename T>
Tensor<T> per_window_index(const Tensor<T>& x, int k,
                           Tensor<T> (*fn)(const Tensor<T>&)) {
    const Shape xs = x.shape();
    Tensor<T> out(xs);
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c)
            for (int wy = 0; wy < xs.h / k; ++wy)
                for (int wx = 0; wx < xs.w / k; ++wx) {
                    Tensor<T> region(Shape{1, 1, k, k});
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            region.at(0, 0, ky, kx) = x.at(n, c, wy * k + ky, wx * k + kx);
                    Tensor<T> idx = fn(region);
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            out.at(n, c, wy * k + ky, wx * k + kx) = idx.at(0, 0, ky, kx);
                }
    return out;
}

}  // namespace

TEST_CASE("indexed pooling degenerates to max pooling under argmax maps") {
    for (std::uint64_t s = 0; s < 100; ++s) {
        Tensor<double> x = rnd({1, 8, 16, 16}, 200 + s);
        Tensor<double> idx = per_window_index(x, 2, index_max<double>);
        Tensor<double> got = indexed_pool(Var<double>(x), Var<double>(idx), 2).value();
        Tensor<double> want = oracle::max_pool(x, 2, 2);
        for (std::int64_t i = 0; i < got.numel(); ++i)
            CHECK(std::abs(got[i] - want[i]) <=
                  1e-6 * std::max(1.0, std::abs(want[i])));
    }
}

TEST_CASE("indexed pooling degenerates to average pooling under uniform maps") {
    for (std::uint64_t s = 0; s < 100; ++s) {
        Tensor<double> x = rnd({1, 8, 16, 16}, 300 + s);
        Tensor<double> idx(x.shape(), 0.25);  // uniform weights, sum 1 per window
        Tensor<double> got = indexed_pool(Var<double>(x), Var<double>(idx), 2).value();
        Tensor<double> want = oracle::avg_pool(x, 2, 2);
        for (std::int64_t i = 0; i < got.numel(); ++i)
            CHECK(std::abs(got[i] - want[i]) <=
                  1e-6 * std::max(1.0, std::abs(want[i])));
    }
}

TEST_CASE("indexed upsampling degenerates to nearest-neighbor under all-ones maps") {
    for (std::uint64_t s = 0; s < 100; ++s) {
        Tensor<double> d = rnd({1, 8, 8, 8}, 400 + s);
        Tensor<double> ones(Shape{1, 8, 16, 16}, 1.0);
        Tensor<double> got = indexed_upsample(Var<double>(d), Var<double>(ones), 2).value();
        Tensor<double> want = oracle::nearest_upsample(d, 2);
        for (std::int64_t i = 0; i < got.numel(); ++i)
            CHECK(std::abs(got[i] - want[i]) <=
                  1e-6 * std::max(1.0, std::abs(want[i])));
    }
}

TEST_CASE("indexed pooling matches the per-window weighted-sum oracle") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        Tensor<double> x = rnd({2, 3, 8, 8}, 500 + s);
        Tensor<double> idx = oracle::region_softmax(rnd({2, 3, 8, 8}, 600 + s), 2);
        Tensor<double> got = indexed_pool(Var<double>(x), Var<double>(idx), 2).value();
        Tensor<double> want = oracle::weighted_pool(x, idx, 2);
        for (std::int64_t i = 0; i < got.numel(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-10));
    }
}

TEST_CASE("convex index weights keep pooled values inside the window range") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        Tensor<double> x = rnd({1, 2, 8, 8}, 700 + s);
        Tensor<double> idx = oracle::region_softmax(rnd({1, 2, 8, 8}, 800 + s), 2);
        Tensor<double> pooled = indexed_pool(Var<double>(x), Var<double>(idx), 2).value();
        for (int c = 0; c < 2; ++c)
            for (int oy = 0; oy < 4; ++oy)
                for (int ox = 0; ox < 4; ++ox) {
                    double lo = x.at(0, c, oy * 2, ox * 2), hi = lo;
                    for (int ky = 0; ky < 2; ++ky)
                        for (int kx = 0; kx < 2; ++kx) {
                            lo = std::min(lo, x.at(0, c, oy * 2 + ky, ox * 2 + kx));
                            hi = std::max(hi, x.at(0, c, oy * 2 + ky, ox * 2 + kx));
                        }
                    const double v = pooled.at(0, c, oy, ox);
                    CHECK(v >= lo - 1e-12);
                    CHECK(v <= hi + 1e-12);
                }
    }
}

TEST_CASE("indexed upsampling worked examples") {
    // single source point, one-hot index
    Tensor<double> d1(Shape{1, 1, 1, 1}, {5.0});
    Tensor<double> i1(Shape{1, 1, 2, 2}, {1, 0, 0, 0});
    Tensor<double> u1 = indexed_upsample(Var<double>(d1), Var<double>(i1), 2).value();
    CHECK(u1[0] == 5.0);
    CHECK(u1[1] == 0.0);
    CHECK(u1[2] == 0.0);
    CHECK(u1[3] == 0.0);

    // fractional decoder weights scale the broadcast value
    Tensor<double> d2(Shape{1, 1, 1, 1}, {2.0});
    Tensor<double> i2(Shape{1, 1, 2, 2}, {0.5, 0.25, 0.25, 0.0});
    Tensor<double> u2 = indexed_upsample(Var<double>(d2), Var<double>(i2), 2).value();
    CHECK(u2[0] == 1.0);
    CHECK(u2[1] == 0.5);
    CHECK(u2[2] == 0.5);
    CHECK(u2[3] == 0.0);
}

TEST_CASE("indexed upsampling is one-to-many: each output depends on one source") {
    Tensor<double> d = rnd({1, 1, 4, 4}, 900);
    Tensor<double> idx = rnd({1, 1, 8, 8}, 901);
    Tensor<double> base = indexed_upsample(Var<double>(d), Var<double>(idx), 2).value();
    Tensor<double> d2 = d;
    d2.at(0, 0, 1, 2) += 10.0;  // perturb one low-resolution point
    Tensor<double> bumped = indexed_upsample(Var<double>(d2), Var<double>(idx), 2).value();
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            const bool inside = (y / 2 == 1) && (x / 2 == 2);
            if (inside)
                CHECK(bumped.at(0, 0, y, x) != base.at(0, 0, y, x));
            else
                CHECK(bumped.at(0, 0, y, x) == base.at(0, 0, y, x));
        }
}

TEST_CASE("holistic maps broadcast across channels") {
    Tensor<double> x = rnd({1, 3, 4, 4}, 902);
    Tensor<double> one_ch = oracle::region_softmax(rnd({1, 1, 4, 4}, 903), 2);
    Tensor<double> pooled = indexed_pool(Var<double>(x), Var<double>(one_ch), 2).value();
    // equivalent to a depthwise map with the plane repeated per channel
    Tensor<double> rep(Shape{1, 3, 4, 4});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 16; ++i) rep[c * 16 + i] = one_ch[i];
    Tensor<double> pooled_rep = indexed_pool(Var<double>(x), Var<double>(rep), 2).value();
    for (std::int64_t i = 0; i < pooled.numel(); ++i)
        CHECK(pooled[i] == doctest::Approx(pooled_rep[i]).epsilon(1e-12));

    // expand_holistic materializes the same broadcast
    Tensor<double> ex = expand_holistic(Var<double>(one_ch), 3).value();
    CHECK(ex.shape() == Shape{1, 3, 4, 4});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 16; ++i) CHECK(ex[c * 16 + i] == one_ch[i]);
}

TEST_CASE("broadcast index gradient accumulates C times into the source map") {
    Tensor<double> x(Shape{1, 3, 2, 2}, 1.0);
    Parameter<double> idx("idx", Tensor<double>(Shape{1, 1, 2, 2}, 0.5));
    backward(sum(indexed_pool(Var<double>(x), idx.var, 2)));
    // d/didx of sum over channels of x*idx is sum_c x = 3 at every position
    for (int i = 0; i < 4; ++i) CHECK(idx.var.grad()[i] == doctest::Approx(3.0));
}

TEST_CASE("dimension mismatches are rejected") {
    Tensor<double> x = rnd({1, 4, 8, 8}, 904);
    CHECK_THROWS_AS(indexed_pool(Var<double>(x), Var<double>(rnd({1, 4, 4, 4}, 905)), 2),
                    DimensionError);
    CHECK_THROWS_AS(indexed_pool(Var<double>(x), Var<double>(rnd({1, 3, 8, 8}, 906)), 2),
                    DimensionError);
    Tensor<double> d = rnd({1, 4, 4, 4}, 907);
    CHECK_THROWS_AS(indexed_upsample(Var<double>(d), Var<double>(rnd({1, 4, 4, 4}, 908)), 2),
                    DimensionError);
    CHECK_THROWS_AS(indexed_upsample(Var<double>(d), Var<double>(rnd({1, 2, 8, 8}, 909)), 2),
                    DimensionError);
}
