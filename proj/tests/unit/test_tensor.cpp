#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "alkd/ops.hpp"
#include "../support/oracles.hpp"
#include "../support/random.hpp"

using namespace alkd;
using testing_util::randn;

namespace {

// Each primitive wrapped as a scalar function: sum of (output * fixed weights)
// so every output element contributes a distinct gradient.
Tensor weighted(Tape& tape, const Tensor& y, std::uint64_t seed) {
    Rng rng(seed);
    Tensor w = randn(y.shape(), rng, 1.0, false);
    return ops::sum(tape, ops::mul(tape, y, w));
}

void check_primitive(const char* name, const std::function<Tensor(Tape&, const std::vector<Tensor>&)>& op,
                     const std::vector<Shape>& shapes, double scale = 1.0) {
    NumericsScope scope(oracle::f64());
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        Rng rng(1000 + trial);
        std::vector<Tensor> inputs;
        std::vector<std::pair<std::string, Tensor>> leaves;
        for (std::size_t i = 0; i < shapes.size(); ++i) {
            inputs.push_back(randn(shapes[i], rng, scale));
            leaves.emplace_back(std::string(name) + ".in" + std::to_string(i), inputs.back());
        }
        auto rep = oracle::grad_check([&](Tape& t) { return weighted(t, op(t, inputs), 77 + trial); }, leaves);
        INFO(name << " trial " << trial << " worst " << rep.worst);
        CHECK(rep.max_rel_err < 1e-4);
    }
}

}  // namespace

TEST_CASE("matmul examples") {
    Tape tape;
    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor y = ops::matmul(tape, eye, m);
    CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>{1, 2, 3, 4});
    Tensor z = ops::matmul(tape, Tensor::from({1, 2}, {1, 0}), Tensor::from({2, 1}, {0, 1}));
    CHECK(z.item() == 0.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tape tape;
    try {
        ops::matmul(tape, Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
    }
}

TEST_CASE("gelu values") {
    Tape tape;
    CHECK(ops::gelu(tape, Tensor::scalar(0.0)).item() == 0.0);
    CHECK(std::abs(ops::gelu(tape, Tensor::scalar(6.0)).item() - 6.0) < 1e-3);
    CHECK(ops::kGeluCubic == 0.044715);
}

TEST_CASE("gelu gradient at fixed points") {
    NumericsScope scope(oracle::f64());
    for (double x0 : {-2.0, -0.5, 0.5, 2.0}) {
        Tensor x = Tensor::scalar(x0, true);
        auto rep = oracle::grad_check([&](Tape& t) { return ops::sum(t, ops::gelu(t, x)); }, {{"x", x}});
        CHECK(rep.max_rel_err < 1e-4);
    }
}

TEST_CASE("layer_norm examples") {
    NumericsScope scope(oracle::f64());
    Tape tape;
    Tensor g = Tensor::full({4}, 1.0), b = Tensor::zeros({4});
    Tensor y = ops::layer_norm(tape, Tensor::full({1, 4}, 3.0), g, b, 1e-12);
    for (double v : y.data()) CHECK(v == 0.0);
    Tensor g2 = Tensor::full({2}, 1.0), b2 = Tensor::zeros({2});
    Tensor y2 = ops::layer_norm(tape, Tensor::from({1, 2}, {1, -1}), g2, b2, 1e-15);
    CHECK(y2.data()[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(y2.data()[1] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK_THROWS_AS(ops::layer_norm(tape, Tensor::zeros({2, 0}), Tensor::zeros({0}), Tensor::zeros({0}), 1e-5),
                    DimensionError);
}

TEST_CASE("log_softmax examples") {
    NumericsScope scope(oracle::f64());
    Tape tape;
    Tensor u = ops::log_softmax(tape, Tensor::zeros({1, 4}));
    for (double v : u.data()) CHECK(v == doctest::Approx(-std::log(4.0)).epsilon(1e-12));
    Tensor s = ops::log_softmax(tape, Tensor::from({1, 2}, {1000, 0}));
    CHECK(s.data()[0] == doctest::Approx(0.0));
    CHECK(s.data()[1] == doctest::Approx(-1000.0));
    Rng rng(3);
    Tensor r = ops::log_softmax(tape, randn({16, 32}, rng, 5.0, false));
    for (std::size_t i = 0; i < 16; ++i) {
        double z = 0.0;
        for (std::size_t j = 0; j < 32; ++j) z += std::exp(r.data()[i * 32 + j]);
        CHECK(std::abs(z - 1.0) < 1e-6);
    }
}

TEST_CASE("backward examples") {
    Tensor x = Tensor::from({3}, {1, 2, 3}, true);
    Tape tape;
    Tensor y = ops::sum(tape, x);
    tape.backward(y);
    for (double g : x.grad()) CHECK(g == 1.0);

    Tensor a = Tensor::scalar(3.0, true), b = Tensor::scalar(5.0, true);
    Tape t2;
    Tensor p = ops::mul(t2, a, b);
    t2.backward(p);
    CHECK(a.grad()[0] == 5.0);
    CHECK(b.grad()[0] == 3.0);

    // Repeated backward accumulates.
    t2.backward(p);
    CHECK(a.grad()[0] == 10.0);

    Tape t3;
    Tensor v = ops::scale(t3, x, 2.0);
    CHECK_THROWS_AS(t3.backward(v), ContractError);
}

TEST_CASE("finite check raises NumericError") {
    Numerics n = oracle::f64();
    n.check_finite = true;
    NumericsScope scope(n);
    Tape tape;
    CHECK_THROWS_AS(ops::scale(tape, Tensor::scalar(1e300), 1e300), NumericError);
}

TEST_CASE("f32 mode stores float-representable values") {
    Tape tape;
    Tensor y = ops::scale(tape, Tensor::scalar(1.0), 1.0 / 3.0);
    CHECK(y.item() == static_cast<double>(static_cast<float>(1.0 / 3.0)));
}

TEST_CASE("primitive gradients against central differences") {
    using V = const std::vector<Tensor>&;
    check_primitive("matmul", [](Tape& t, V in) { return ops::matmul(t, in[0], in[1]); }, {{3, 4}, {4, 2}});
    check_primitive("matmul_bt", [](Tape& t, V in) { return ops::matmul_bt(t, in[0], in[1]); }, {{3, 4}, {2, 4}});
    check_primitive("bmm", [](Tape& t, V in) { return ops::bmm(t, in[0], in[1]); }, {{2, 3, 4}, {2, 4, 2}});
    check_primitive("bmm_bt", [](Tape& t, V in) { return ops::bmm_bt(t, in[0], in[1]); }, {{2, 3, 4}, {2, 5, 4}});
    check_primitive("add", [](Tape& t, V in) { return ops::add(t, in[0], in[1]); }, {{3, 4}, {3, 4}});
    check_primitive("sub", [](Tape& t, V in) { return ops::sub(t, in[0], in[1]); }, {{3, 4}, {3, 4}});
    check_primitive("mul", [](Tape& t, V in) { return ops::mul(t, in[0], in[1]); }, {{3, 4}, {3, 4}});
    check_primitive("add_bias", [](Tape& t, V in) { return ops::add_bias(t, in[0], in[1]); }, {{3, 4}, {4}});
    check_primitive("scale", [](Tape& t, V in) { return ops::scale(t, in[0], -1.7); }, {{3, 4}});
    check_primitive("gelu", [](Tape& t, V in) { return ops::gelu(t, in[0]); }, {{3, 4}}, 2.0);
    check_primitive("sum", [](Tape& t, V in) { return ops::sum(t, in[0]); }, {{3, 4}});
    check_primitive("mean", [](Tape& t, V in) { return ops::mean(t, in[0]); }, {{3, 4}});
    check_primitive("layer_norm", [](Tape& t, V in) { return ops::layer_norm(t, in[0], in[1], in[2], 1e-12); },
                    {{2, 8}, {8}, {8}});
    check_primitive("log_softmax", [](Tape& t, V in) { return ops::log_softmax(t, in[0]); }, {{3, 5}});
    check_primitive("masked_softmax",
                    [](Tape& t, V in) {
                        static const std::vector<std::uint8_t> valid{1, 1, 0, 1, 1, 1};
                        return ops::masked_softmax(t, in[0], valid, 2);
                    },
                    {{4, 3, 3}});
    check_primitive("masked_nll",
                    [](Tape& t, V in) {
                        static const std::vector<std::int32_t> tgt{0, 2, 1, 4};
                        static const std::vector<std::uint8_t> m{1, 0, 1, 1};
                        return ops::masked_nll(t, ops::log_softmax(t, in[0]), tgt, m);
                    },
                    {{4, 5}});
    check_primitive("embedding",
                    [](Tape& t, V in) {
                        static const std::vector<std::int32_t> ids{0, 2, 2, 1};
                        return ops::embedding(t, in[0], ids);
                    },
                    {{3, 4}});
    check_primitive("gather_rows",
                    [](Tape& t, V in) {
                        static const std::vector<std::size_t> rows{2, 0, 2};
                        return ops::gather_rows(t, in[0], rows);
                    },
                    {{3, 4}});
    check_primitive("reshape", [](Tape& t, V in) { return ops::reshape(t, in[0], {4, 3}); }, {{3, 4}});
    check_primitive("swap_axes_12", [](Tape& t, V in) { return ops::swap_axes_12(t, in[0]); }, {{2, 3, 4, 2}});
}

TEST_CASE("masked_softmax gives zero probability to invalid keys") {
    Tape tape;
    Rng rng(1);
    Tensor s = randn({1, 3, 3}, rng, 1.0, false);
    const std::vector<std::uint8_t> valid{1, 0, 1};
    Tensor p = ops::masked_softmax(tape, s, valid, 1);
    for (std::size_t q = 0; q < 3; ++q) CHECK(p.data()[q * 3 + 1] == 0.0);
    const std::vector<std::uint8_t> none{0, 0, 0};
    CHECK_THROWS(ops::masked_softmax(tape, s, none, 1));
}

TEST_CASE("dropout with rate 0 is identity and is seeded otherwise") {
    Tape tape;
    Rng rng(5);
    Tensor x = randn({4, 8}, rng, 1.0, false);
    Rng r0(9);
    CHECK(ops::dropout(tape, x, 0.0, r0).same(x));
    Rng r1(9), r2(9);
    Tensor a = ops::dropout(tape, x, 0.5, r1), b = ops::dropout(tape, x, 0.5, r2);
    CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST_CASE("primitive chains are deterministic") {
    auto run = [] {
        Rng rng(11);
        Tensor a = randn({8, 16}, rng), b = randn({16, 8}, rng);
        Tape tape;
        Tensor y = ops::log_softmax(tape, ops::gelu(tape, ops::matmul(tape, a, b)));
        return std::vector<double>(y.data().begin(), y.data().end());
    };
    CHECK(run() == run());
}

TEST_CASE("threaded kernels match single-threaded results bit for bit") {
    Rng rng(12);
    Tensor a = randn({96, 64}, rng, 1.0, false), b = randn({64, 80}, rng, 1.0, false);
    auto product = [&](int threads) {
        Numerics n = numerics();
        n.threads = threads;
        NumericsScope scope(n);
        Tape tape;
        Tensor y = ops::matmul(tape, a, b);
        return std::vector<double>(y.data().begin(), y.data().end());
    };
    CHECK(product(1) == product(4));
}
