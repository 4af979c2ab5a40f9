#include <doctest.h>

#include <cmath>

#include "acla/tape.hpp"
#include "fd_check.hpp"

using namespace acla;

TEST_CASE("tensor shape invariants") {
    Tensor t = Tensor::map(3, 4, 2);
    CHECK(t.size() == 24);
    CHECK(t.height() == 3);
    CHECK(t.width() == 4);
    CHECK(t.channels() == 2);
    t.at(1, 2, 1) = 7.0;
    CHECK(t[(1 * 4 + 2) * 2 + 1] == 7.0);
    CHECK_THROWS_AS(Tensor::of_shape({-1, 2, 2, 1}), DimensionError);
}

TEST_CASE("conv1x1 identity and constant cases") {
    Rng rng(11);
    Tensor x = fd::random_map(3, 3, 2, rng);
    Tensor w = Tensor::matrix(2, 2);
    w[0] = 1.0;
    w[3] = 1.0;  // identity
    Tape tape;
    Var y = tape.conv1x1(tape.leaf(x), tape.leaf(w));
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(tape.value(y)[i] == x[i]);

    // all-zero weight, bias b: every position reports b
    Tensor wz = Tensor::matrix(2, 3);
    Tensor b = Tensor::vec(3);
    b[0] = 0.5;
    b[1] = -1.0;
    b[2] = 2.0;
    Tape t2;
    Var y2 = t2.conv1x1(t2.leaf(x), t2.leaf(wz), t2.leaf(b));
    for (int p = 0; p < 9; ++p)
        for (int co = 0; co < 3; ++co) CHECK(t2.value(y2)[p * 3 + co] == b[co]);
}

TEST_CASE("conv1x1 matches per-pixel matrix multiply oracle") {
    Rng rng(12);
    Tensor x = fd::random_map(3, 3, 2, rng);
    Tensor w = fd::random_of({2, 4, 1, 1}, rng);
    Tensor b = fd::random_of({4, 1, 1, 1}, rng);
    Tape tape;
    Var y = tape.conv1x1(tape.leaf(x), tape.leaf(w), tape.leaf(b));
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            for (int co = 0; co < 4; ++co) {
                double want = b[co];
                for (int ci = 0; ci < 2; ++ci) want += x.at(r, c, ci) * w[ci * 4 + co];
                CHECK(tape.value(y)[(r * 3 + c) * 4 + co] == doctest::Approx(want).epsilon(1e-12));
            }
    CHECK_THROWS_AS([&] {
        Tensor bad = Tensor::matrix(3, 4);
        Tape t;
        t.conv1x1(t.leaf(x), t.leaf(bad));
    }(), DimensionError);
}

TEST_CASE("conv3x3 center-tap identity and constant interior") {
    Rng rng(13);
    Tensor x = fd::random_map(4, 5, 2, rng);
    Tensor w = Tensor::kernel3(2, 2);
    // center tap identity: w[1][1][ci][ci] = 1
    for (int ci = 0; ci < 2; ++ci) w[((1 * 3 + 1) * 2 + ci) * 2 + ci] = 1.0;
    Tape tape;
    Var y = tape.conv3x3(tape.leaf(x), tape.leaf(w));
    for (std::int64_t i = 0; i < x.size(); ++i)
        CHECK(tape.value(y)[i] == doctest::Approx(x[i]).epsilon(1e-15));

    // constant input, interior output = constant * kernel sum
    Tensor xc = Tensor::map(5, 5, 1);
    xc.fill(0.7);
    Tensor k1 = fd::random_of({3, 3, 1, 1}, rng);
    double ksum = 0.0;
    for (double v : k1.values()) ksum += v;
    Tape t2;
    Var y2 = t2.conv3x3(t2.leaf(xc), t2.leaf(k1));
    CHECK(t2.value(y2).at(2, 2, 0) == doctest::Approx(0.7 * ksum).epsilon(1e-12));
}

TEST_CASE("conv3x3 matches the naive six-loop oracle") {
    Rng rng(14);
    const int h = 5, w = 5, cin = 2, cout = 3;
    Tensor x = fd::random_map(h, w, cin, rng);
    Tensor k = fd::random_of({3, 3, cin, cout}, rng);
    Tensor b = fd::random_of({cout, 1, 1, 1}, rng);
    Tape tape;
    Var y = tape.conv3x3(tape.leaf(x), tape.leaf(k), tape.leaf(b));
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int co = 0; co < cout; ++co) {
                double want = b[co];
                for (int kr = 0; kr < 3; ++kr)
                    for (int kc = 0; kc < 3; ++kc)
                        for (int ci = 0; ci < cin; ++ci) {
                            const int rr = r + kr - 1, cc = c + kc - 1;
                            if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                            want += x.at(rr, cc, ci) * k[((kr * 3 + kc) * cin + ci) * cout + co];
                        }
                CHECK(tape.value(y)[(r * w + c) * cout + co] ==
                      doctest::Approx(want).epsilon(1e-12));
            }
}

TEST_CASE("softmax basics") {
    Tape tape;
    Tensor logits = Tensor::vec(4);
    logits.fill(1.3);
    Var s = tape.softmax(tape.leaf(logits));
    for (int i = 0; i < 4; ++i) CHECK(tape.value(s)[i] == doctest::Approx(0.25).epsilon(1e-15));

    Tensor two = Tensor::vec(2);
    two[0] = 0.0;
    two[1] = std::log(3.0);
    Tape t2;
    Var s2 = t2.softmax(t2.leaf(two));
    CHECK(t2.value(s2)[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(t2.value(s2)[1] == doctest::Approx(0.75).epsilon(1e-12));

    Tensor one = Tensor::vec(1);
    one[0] = -3.7;
    Tape t3;
    CHECK(t3.value(t3.softmax(t3.leaf(one)))[0] == 1.0);

    Tape t4;
    Tensor empty = Tensor::vec(0);
    CHECK_THROWS_AS(t4.softmax(t4.leaf(empty)), DomainError);
}

TEST_CASE("softmax sums to one and is bitwise shift-invariant on dyadic logits") {
    Rng rng(15);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor v = Tensor::vec(6);
        for (auto& x : v.values())
            x = static_cast<double>(static_cast<int>(rng.below(64))) / 8.0;  // exact dyadics
        Tape t1;
        auto s1 = t1.value(t1.softmax(t1.leaf(v)));
        double sum = 0.0;
        for (int i = 0; i < 6; ++i) sum += s1[i];
        CHECK(std::fabs(sum - 1.0) <= 1e-12);

        Tensor shifted = v;
        for (auto& x : shifted.values()) x += 2.0;  // exact shift
        Tape t2;
        auto s2 = t2.value(t2.softmax(t2.leaf(shifted)));
        for (int i = 0; i < 6; ++i) CHECK(s1[i] == s2[i]);  // bitwise
    }
}

TEST_CASE("sigmoid closed-form values") {
    Tape tape;
    Tensor x = Tensor::vec(3);
    x[0] = 0.0;
    x[1] = std::log(3.0);
    x[2] = -std::log(3.0);
    Var y = tape.sigmoid(tape.leaf(x));
    CHECK(tape.value(y)[0] == 0.5);
    CHECK(tape.value(y)[1] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(tape.value(y)[2] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("backward on trivial losses") {
    Rng rng(16);
    Tensor x = fd::random_map(3, 3, 2, rng);
    x.set_requires_grad(true);
    {
        Tape tape;
        Var loss = tape.sum(tape.leaf(x));
        tape.backward(loss);
        for (double g : x.grad()) CHECK(g == 1.0);
    }
    x.zero_grad();
    {
        Tape tape;
        Var a = tape.leaf(x);
        Var loss = tape.mse(a, tape.constant(x));
        tape.backward(loss);
        for (double g : x.grad()) CHECK(g == 0.0);
    }
    {
        Tape tape;
        Var a = tape.leaf(x);
        CHECK_THROWS_AS(tape.backward(a), ContractError);
    }
}

TEST_CASE("gradients of a random composite graph match finite differences") {
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<Tensor> inputs;
        inputs.push_back(fd::random_map(4, 4, 2, rng));
        inputs.push_back(fd::random_of({2, 3, 1, 1}, rng));       // 1x1 weight
        inputs.push_back(fd::random_of({3, 1, 1, 1}, rng));       // bias
        inputs.push_back(fd::random_of({3, 3, 3, 2}, rng, 0.5));  // 3x3 kernel
        const double rel = fd::check(inputs, [](Tape& t, std::vector<Var>& v) {
            Var h1 = t.conv1x1(v[0], v[1], v[2]);
            Var h2 = t.relu(h1);
            Var h3 = t.conv3x3(h2, v[3]);
            Var h4 = t.sigmoid(h3);
            return t.mse(h4, t.scale(v[0], 0.25));
        });
        CHECK(rel < 1e-4);
    }
}

TEST_CASE("pixel shuffle rearranges and round-trips gradients") {
    Rng rng(18);
    std::vector<Tensor> inputs{fd::random_map(2, 2, 8, rng)};
    const double rel = fd::check(inputs, [](Tape& t, std::vector<Var>& v) {
        Var y = t.pixel_shuffle(v[0], 2);
        return t.mse(y, t.scale(y, 0.0));
    });
    CHECK(rel < 1e-4);

    Tape tape;
    Var y = tape.pixel_shuffle(tape.leaf(inputs[0]), 2);
    CHECK(tape.value(y).height() == 4);
    CHECK(tape.value(y).width() == 4);
    CHECK(tape.value(y).channels() == 2);
    // (0,0) block gathers channels 0..3 of source pixel (0,0)
    CHECK(tape.value(y).at(0, 0, 0) == inputs[0].at(0, 0, 0));
    CHECK(tape.value(y).at(0, 1, 0) == inputs[0].at(0, 0, 2));
    CHECK(tape.value(y).at(1, 0, 0) == inputs[0].at(0, 0, 4));
    CHECK(tape.value(y).at(1, 1, 1) == inputs[0].at(0, 0, 7));
}

TEST_CASE("taped graphs replay bit-identically under one seed") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor x = fd::random_map(3, 3, 2, rng);
        Tensor w = fd::random_of({2, 2, 1, 1}, rng);
        x.set_requires_grad(true);
        w.set_requires_grad(true);
        Tape tape;
        Var loss = tape.mse(tape.conv1x1(tape.leaf(x), tape.leaf(w)),
                            tape.constant(Tensor::map(3, 3, 2)));
        tape.backward(loss);
        std::vector<double> out{tape.value(loss)[0]};
        out.insert(out.end(), x.grad().begin(), x.grad().end());
        out.insert(out.end(), w.grad().begin(), w.grad().end());
        return out;
    };
    CHECK(run(42) == run(42));
}

TEST_CASE("log_floored guards the regularizer at zero cost") {
    Tensor x = Tensor::scalar(0.25);
    x.set_requires_grad(true);
    Tape tape;
    Var y = tape.log_floored(tape.leaf(x), 1.0);
    CHECK(tape.value(y)[0] == 0.0);  // floored
    tape.backward(y);
    CHECK(x.grad()[0] == 0.0);

    Tensor x2 = Tensor::scalar(std::exp(1.0));
    x2.set_requires_grad(true);
    Tape t2;
    Var y2 = t2.log_floored(t2.leaf(x2), 1.0);
    CHECK(t2.value(y2)[0] == doctest::Approx(1.0).epsilon(1e-12));
    t2.backward(y2);
    CHECK(x2.grad()[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-10));
}
