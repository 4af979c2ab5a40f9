#include <doctest.h>

#include <cmath>

#include "acla/sampler.hpp"
#include "fd_check.hpp"

using namespace acla;

TEST_CASE("lattice positions return the exact pixel") {
    Rng rng(21);
    Tensor m = fd::random_map(4, 5, 3, rng);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 5; ++c) {
            auto v = sample_bilinear(m, Position{static_cast<double>(r), static_cast<double>(c)});
            for (int ch = 0; ch < 3; ++ch) CHECK(v[ch] == m.at(r, c, ch));
        }
}

TEST_CASE("cell center averages the four neighbors") {
    Rng rng(22);
    Tensor m = fd::random_map(3, 3, 2, rng);
    auto v = sample_bilinear(m, Position{0.5, 1.5});
    for (int ch = 0; ch < 2; ++ch) {
        const double mean =
            0.25 * (m.at(0, 1, ch) + m.at(0, 2, ch) + m.at(1, 1, ch) + m.at(1, 2, ch));
        CHECK(v[ch] == doctest::Approx(mean).epsilon(1e-15));
    }
}

TEST_CASE("closed-form 2x2 case") {
    Tensor m = Tensor::map(2, 2, 1);
    m.at(0, 0, 0) = 0.0;
    m.at(0, 1, 0) = 1.0;
    m.at(1, 0, 0) = 2.0;
    m.at(1, 1, 0) = 3.0;
    // (1-.25)(1-.75)*0 + (1-.25)(.75)*1 + (.25)(1-.75)*2 + (.25)(.75)*3 = 1.25
    CHECK(sample_bilinear(m, Position{0.25, 0.75})[0] == doctest::Approx(1.25).epsilon(1e-15));
}

TEST_CASE("output is a convex combination of the neighbors") {
    Rng rng(23);
    Tensor m = fd::random_map(5, 5, 1, rng);
    for (int trial = 0; trial < 50; ++trial) {
        const Position p{rng.uniform01() * 6.0 - 1.0, rng.uniform01() * 6.0 - 1.0};
        const auto fp = resolve_footprint(5, 5, p);
        const double v = sample_bilinear(m, p)[0];
        double lo = 1e300, hi = -1e300;
        for (int rr : {fp.r0, fp.r1})
            for (int cc : {fp.c0, fp.c1}) {
                lo = std::min(lo, m.at(rr, cc, 0));
                hi = std::max(hi, m.at(rr, cc, 0));
            }
        CHECK(v >= lo - 1e-12);
        CHECK(v <= hi + 1e-12);
    }
}

TEST_CASE("sampling is piecewise linear along an axis") {
    Rng rng(24);
    Tensor m = fd::random_map(4, 6, 1, rng);
    // three collinear points within one cell along the column axis
    for (int trial = 0; trial < 20; ++trial) {
        const double r = rng.uniform01() * 3.0;
        const int cell = static_cast<int>(rng.below(5));
        const double c0 = cell + 0.1, c1 = cell + 0.5, c2 = cell + 0.9;
        const double v0 = sample_bilinear(m, {r, c0})[0];
        const double v1 = sample_bilinear(m, {r, c1})[0];
        const double v2 = sample_bilinear(m, {r, c2})[0];
        CHECK(v1 == doctest::Approx(v0 + (v2 - v0) * 0.5).epsilon(1e-10));
    }
}

TEST_CASE("position gradients match finite differences away from kinks") {
    Rng rng(25);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Tensor> inputs;
        inputs.push_back(fd::random_map(5, 5, 3, rng));
        Tensor pos = Tensor::vec(2);
        pos[0] = 0.6 + 2.8 * rng.uniform01();
        pos[1] = 0.6 + 2.8 * rng.uniform01();
        // keep >= 0.1 from lattice lines (and >= 0.5 from the border already)
        for (int a = 0; a < 2; ++a) {
            const double frac = pos[a] - std::floor(pos[a]);
            if (frac < 0.1) pos[a] += 0.15;
            if (frac > 0.9) pos[a] -= 0.15;
        }
        inputs.push_back(pos);
        const double rel = fd::check(inputs, [](Tape& t, std::vector<Var>& v) {
            Var s = t.sample_bilinear(v[0], v[1]);
            return t.sum(t.sigmoid(s));
        });
        CHECK(rel < 1e-4);
    }
}

TEST_CASE("clamped positions sample the border with zero position gradient") {
    Rng rng(26);
    Tensor m = fd::random_map(4, 4, 2, rng);
    auto v = sample_bilinear(m, Position{-3.0, 1.25});
    const double want0 = m.at(0, 1, 0) * 0.75 + m.at(0, 2, 0) * 0.25;
    CHECK(v[0] == doctest::Approx(want0).epsilon(1e-14));

    const auto fp = resolve_footprint(4, 4, Position{-3.0, 1.25});
    CHECK(fp.clamped_row);
    CHECK(!fp.clamped_col);
    std::vector<double> upstream{1.0, 1.0};
    std::vector<double> map_grad(static_cast<std::size_t>(m.size()), 0.0);
    const auto pg = sample_bilinear_backward(m, fp, upstream, map_grad);
    CHECK(pg.d_row == 0.0);

    const auto fp2 = resolve_footprint(4, 4, Position{2.0, 9.5});
    CHECK(fp2.clamped_col);
    const auto pg2 = sample_bilinear_backward(m, fp2, upstream, map_grad);
    CHECK(pg2.d_col == 0.0);
}

TEST_CASE("non-finite positions are rejected") {
    Tensor m = Tensor::map(2, 2, 1);
    CHECK_THROWS_AS(sample_bilinear(m, Position{std::nan(""), 0.0}), DomainError);
    CHECK_THROWS_AS(sample_bilinear(m, Position{0.0, INFINITY}), DomainError);
    CHECK_THROWS_AS(resolve_footprint(0, 0, Position{0, 0}), DimensionError);
}

TEST_CASE("single-row and single-column maps degenerate cleanly") {
    Tensor m = Tensor::map(1, 3, 1);
    m.at(0, 0, 0) = 1.0;
    m.at(0, 1, 0) = 2.0;
    m.at(0, 2, 0) = 3.0;
    CHECK(sample_bilinear(m, Position{0.0, 1.5})[0] == doctest::Approx(2.5));
    CHECK(sample_bilinear(m, Position{5.0, 0.0})[0] == doctest::Approx(1.0));
}
