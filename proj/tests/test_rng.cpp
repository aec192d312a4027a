#include <doctest.h>

#include <algorithm>
#include <set>

#include "todprime/rng.hpp"

using namespace todprime;

// Known answers computed with an independent Python implementation.
TEST_CASE("splitmix64 known answers") {
    SplitMix64 s(0);
    CHECK(s.next() == 0xe220a8397b1dcdafULL);
    CHECK(s.next() == 0x6e789e6aa1b965f4ULL);
    CHECK(s.next() == 0x06c45d188009454fULL);
}

TEST_CASE("xoshiro256** known answers") {
    Xoshiro256 x(42);
    CHECK(x.next() == 0x15780b2e0c2ec716ULL);
    CHECK(x.next() == 0x6104d9866d113a7eULL);
    CHECK(x.next() == 0xae17533239e499a1ULL);
}

TEST_CASE("sample_without_replacement") {
    Xoshiro256 rng(7);
    CHECK(sample_without_replacement(10, 4, rng) == std::vector<std::size_t>{4, 6, 8, 0});

    Xoshiro256 a(3), b(3);
    CHECK(sample_without_replacement(100, 20, a) == sample_without_replacement(100, 20, b));

    Xoshiro256 r(9);
    for (std::size_t n = 0; n < 30; ++n) {
        const auto s = sample_without_replacement(n, n + 5, r);
        CHECK(s.size() == n);
        CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == n);
        CHECK(std::all_of(s.begin(), s.end(), [&](std::size_t v) { return v < n; }));
    }
}

TEST_CASE("uniform_below stays in range and covers it") {
    Xoshiro256 r(1);
    std::vector<int> seen(7, 0);
    for (int i = 0; i < 7000; ++i) {
        const auto v = r.uniform_below(7);
        REQUIRE(v < 7);
        ++seen[v];
    }
    for (int c : seen) CHECK(c > 800);
}
