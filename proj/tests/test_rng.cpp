#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cfpc/rng.hpp"
#include "cfpc/tensor.hpp"

using cfpc::RandomStream;

TEST_CASE("same seed reproduces the same draw sequence") {
    RandomStream a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
    RandomStream a(1), b(2);
    int equal = 0;
    for (int i = 0; i < 100; ++i)
        if (a.next_u64() == b.next_u64()) ++equal;
    CHECK(equal == 0);
}

TEST_CASE("named substreams are independent of parent position and of each other") {
    RandomStream parent(7);
    RandomStream child_before = parent.substream("channel");
    parent.next_u64();
    parent.next_u64();
    RandomStream child_after = parent.substream("channel");
    for (int i = 0; i < 100; ++i)
        CHECK(child_before.next_u64() == child_after.next_u64());

    RandomStream other = parent.substream("deployment");
    RandomStream channel = parent.substream("channel");
    int equal = 0;
    for (int i = 0; i < 100; ++i)
        if (other.next_u64() == channel.next_u64()) ++equal;
    CHECK(equal == 0);
}

TEST_CASE("indexed substreams differ by index and reproduce by index") {
    RandomStream parent(7);
    RandomStream s0 = parent.substream("sample", 0);
    RandomStream s1 = parent.substream("sample", 1);
    CHECK(s0.next_u64() != s1.next_u64());
    RandomStream again = parent.substream("sample", 0);
    RandomStream fresh = parent.substream("sample", 0);
    for (int i = 0; i < 50; ++i) CHECK(again.next_u64() == fresh.next_u64());
}

TEST_CASE("uniform lies in [0,1) and has roughly the right mean") {
    RandomStream rng(3);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK(std::abs(sum / n - 0.5) < 0.01);
}

TEST_CASE("normal has mean ~0 and variance ~1") {
    RandomStream rng(5);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("complex gaussian splits variance across components") {
    RandomStream rng(11);
    const int n = 200000;
    const double variance = 3.0;
    double re_sq = 0.0, im_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto z = rng.cgaussian(variance);
        re_sq += z.real() * z.real();
        im_sq += z.imag() * z.imag();
    }
    CHECK(re_sq / n == doctest::Approx(variance / 2).epsilon(0.02));
    CHECK(im_sq / n == doctest::Approx(variance / 2).epsilon(0.02));
    CHECK(RandomStream(0).cgaussian(0.0) == cfpc::cdouble{0.0, 0.0});
}
