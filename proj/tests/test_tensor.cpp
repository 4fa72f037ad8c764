#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "promptrec/tensor.hpp"

using namespace promptrec;
using oracle::fd_check_tensor;
using oracle::random_tensor;

namespace {

// Builds the graph once to populate analytic gradients, then probes each
// input against central differences.
double run_backward(const std::function<Tensor()>& build) {
    Tensor loss = build();
    backward(loss);
    return loss.item();
}

void gradcheck(const std::function<Tensor()>& build, std::vector<Tensor> inputs, std::size_t samples = 64,
               double tol = 1e-5) {
    for (Tensor& t : inputs) t.zero_grad();
    run_backward(build);
    Rng probe(99);
    auto value = [&build]() {
        NoGradGuard ng;
        return build().item();
    };
    for (Tensor& t : inputs) {
        auto res = fd_check_tensor(value, t, probe, samples);
        INFO("max relative error " << res.max_rel << " over " << res.checked << " probes");
        CHECK(res.max_rel < tol);
    }
}

}  // namespace

TEST_CASE("matmul matches the triple-loop oracle") {
    Rng rng(1);
    Tensor a = random_tensor({4, 6}, rng);
    Tensor b = random_tensor({6, 5}, rng);
    Tensor c = matmul(a, b);
    std::vector<double> want = oracle::naive_matmul(a.data(), b.data(), 4, 6, 5);
    REQUIRE(c.shape() == std::vector<std::size_t>({4, 5}));
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(c.data()[i] == Catch::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("matmul_nt equals matmul against the explicit transpose") {
    Rng rng(2);
    Tensor a = random_tensor({3, 7}, rng);
    Tensor bt = random_tensor({5, 7}, rng);  // holds B^T; rows are B's columns
    Tensor b({7, 5}, 0.0);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 7; ++j) b.data()[j * 5 + i] = bt.data()[i * 7 + j];
    Tensor via_nt = matmul_nt(a, bt);
    Tensor via_nn = matmul(a, b);
    for (std::size_t i = 0; i < via_nt.numel(); ++i)
        CHECK(via_nt.data()[i] == Catch::Approx(via_nn.data()[i]).epsilon(1e-13));
}

TEST_CASE("shape mismatches throw") {
    Tensor a({2, 3}, 1.0), b({4, 2}, 1.0);
    CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
    CHECK_THROWS_AS(add(a, b), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({2, 0}, 1.0), std::invalid_argument);
    CHECK_THROWS(Tensor({2, 2}, std::vector<double>{1.0, 2.0}));
}

TEST_CASE("gradcheck: matmul chain") {
    Rng rng(3);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 5}, rng);
    gradcheck([&] { return sum(matmul(a, b)); }, {a, b});
}

TEST_CASE("gradcheck: matmul_nt") {
    Rng rng(4);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({6, 4}, rng);
    gradcheck([&] { return sum(matmul_nt(a, b)); }, {a, b});
}

TEST_CASE("gradcheck: add, scale, relu, add_bias_rows") {
    Rng rng(5);
    Tensor a = random_tensor({4, 4}, rng);
    Tensor b = random_tensor({4, 4}, rng);
    Tensor bias = random_tensor({4}, rng);
    gradcheck([&] { return sum(scale(add(relu(a), add_bias_rows(b, bias)), 0.7)); }, {a, b, bias});
}

TEST_CASE("gradcheck: softmax_rows") {
    Rng rng(6);
    Tensor x = random_tensor({3, 6}, rng, 2.0);
    Tensor w = random_tensor({3, 6}, rng);
    // weight the softmax so every entry's gradient is exercised
    gradcheck([&] { return sum(matmul_nt(softmax_rows(x), w)); }, {x}, 64, 1e-4);
    Tensor s = softmax_rows(x);
    for (std::size_t i = 0; i < 3; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < 6; ++j) row += s.at(i, j);
        CHECK(row == Catch::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("gradcheck: layer_norm") {
    Rng rng(7);
    Tensor x = random_tensor({4, 8}, rng, 2.0);
    Tensor gain = random_tensor({8}, rng);
    Tensor bias = random_tensor({8}, rng);
    Tensor mixer = random_tensor({4, 8}, rng);
    gradcheck([&] { return sum(matmul_nt(layer_norm(x, gain, bias), mixer)); }, {x, gain, bias}, 64, 1e-4);

    std::vector<double> want = oracle::naive_layer_norm(x.data(), gain.data(), bias.data(), 4, 8);
    Tensor got = layer_norm(x, gain, bias);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(got.data()[i] == Catch::Approx(want[i]).margin(1e-12));
}

TEST_CASE("gradcheck: mul_scalar broadcasts a graph scalar") {
    Rng rng(8);
    Tensor s = random_tensor({1}, rng);
    Tensor x = random_tensor({3, 5}, rng);
    gradcheck([&] { return sum(mul_scalar(s, x)); }, {s, x});
}

TEST_CASE("gradcheck: concat and slice") {
    Rng rng(9);
    Tensor a = random_tensor({2, 4}, rng);
    Tensor b = random_tensor({3, 4}, rng);
    Tensor c = random_tensor({2, 3}, rng);
    gradcheck([&] { return sum(slice_rows(concat_rows({a, b}), 1, 4)); }, {a, b});
    gradcheck([&] { return sum(concat_cols({a, c})); }, {a, c});
}

TEST_CASE("add_causal_mask zeroes future attention") {
    Rng rng(10);
    Tensor scores = random_tensor({4, 4}, rng);
    Tensor w = softmax_rows(add_causal_mask(scores));
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j) CHECK(w.at(i, j) == 0.0);
    CHECK_THROWS_AS(add_causal_mask(random_tensor({2, 3}, rng)), std::invalid_argument);
}

TEST_CASE("gradcheck: causal-masked softmax") {
    Rng rng(11);
    Tensor scores = random_tensor({4, 4}, rng);
    Tensor v = random_tensor({4, 4}, rng);
    gradcheck([&] { return sum(matmul(softmax_rows(add_causal_mask(scores)), v)); }, {scores, v}, 64, 1e-4);
}

TEST_CASE("relpos_bias_matrix gathers the expected diagonals") {
    Tensor table({7}, std::vector<double>{-3, -2, -1, 0, 1, 2, 3}, true);
    Tensor m = relpos_bias_matrix(table, 3, 3, 3);
    // entry (i, j) holds table[center + i - j] = i - j
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(m.at(i, j) == static_cast<double>(i) - static_cast<double>(j));
    CHECK_THROWS_AS(relpos_bias_matrix(table, 5, 5, 3), std::invalid_argument);
}

TEST_CASE("gradcheck: relpos bias gather accumulates per diagonal") {
    Rng rng(12);
    Tensor table = random_tensor({9}, rng);
    Tensor w = random_tensor({4, 4}, rng);
    gradcheck([&] { return sum(matmul_nt(relpos_bias_matrix(table, 4, 4, 4), w)); }, {table, w});
}

TEST_CASE("gradcheck: cross_entropy_rows") {
    Rng rng(13);
    Tensor logits = random_tensor({5, 7}, rng, 2.0);
    std::vector<int> targets{0, 3, 6, 2, 2};
    gradcheck([&] { return cross_entropy_rows(logits, targets); }, {logits}, 35, 1e-5);

    // hand value: mean of -log softmax at the target
    double want = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        std::vector<double> row(logits.data().begin() + static_cast<std::ptrdiff_t>(i * 7),
                                logits.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * 7));
        oracle::naive_softmax_row(row.data(), 7);
        want += -std::log(row[static_cast<std::size_t>(targets[i])]);
    }
    want /= 5.0;
    CHECK(cross_entropy_rows(logits, targets).item() == Catch::Approx(want).epsilon(1e-12));

    CHECK_THROWS_AS(cross_entropy_rows(logits, std::vector<int>{0, 1}), std::invalid_argument);
    CHECK_THROWS_AS(cross_entropy_rows(logits, std::vector<int>{0, 1, 2, 3, 9}), std::invalid_argument);
}

TEST_CASE("diamond reuse accumulates both paths") {
    Tensor x({1}, std::vector<double>{3.0}, true);
    x.zero_grad();
    Tensor y = add(scale(x, 2.0), scale(x, 5.0));  // y = 7x
    backward(y);
    CHECK(x.grad()[0] == Catch::Approx(7.0));
}

TEST_CASE("backward ignores non-grad graphs and NoGradGuard suppresses taping") {
    Tensor a({2, 2}, 1.0, /*requires_grad=*/false);
    Tensor b = scale(a, 2.0);
    CHECK_FALSE(b.requires_grad());

    Tensor p({2, 2}, 1.0, true);
    {
        NoGradGuard ng;
        Tensor q = scale(p, 2.0);
        CHECK_FALSE(q.requires_grad());
    }
    Tensor r = scale(p, 2.0);
    CHECK(r.requires_grad());

    CHECK_THROWS_AS(backward(scale(p, 1.0)), std::invalid_argument);  // non-scalar
}

TEST_CASE("gradients accumulate across two backward passes") {
    Tensor x({1}, std::vector<double>{2.0}, true);
    x.zero_grad();
    backward(scale(x, 3.0));
    backward(scale(x, 4.0));
    CHECK(x.grad()[0] == Catch::Approx(7.0));
    x.zero_grad();
    CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("clone_detached copies values without graph links") {
    Tensor x({2}, std::vector<double>{1.0, 2.0}, true);
    Tensor c = x.clone_detached();
    CHECK_FALSE(c.requires_grad());
    c.data()[0] = 9.0;
    CHECK(x.data()[0] == 1.0);
}
