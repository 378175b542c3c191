#include <doctest.h>

#include <functional>
#include <vector>

#include "lvg/autodiff.hpp"
#include "lvg/common.hpp"

using namespace lvg;

namespace {

using DTape = Tape<double>;
using Var = DTape::Var;
using Builder = std::function<Var(DTape&, const std::vector<Var>&)>;

Tensor<double> random_tensor(int r, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(r, c);
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

double eval_scalar(const std::vector<Tensor<double>>& inputs, const Builder& build) {
    DTape tape(false);
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto& t : inputs) vars.push_back(tape.input(Tensor<double>(t)));
    return tape.value(build(tape, vars)).data[0];
}

// Central finite differences against the tape's reverse-mode gradients.
void check_gradients(const std::vector<Tensor<double>>& inputs, const Builder& build) {
    DTape tape(true);
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.input(Tensor<double>(t)));
    Var loss = build(tape, vars);
    REQUIRE(tape.value(loss).size() == 1);
    tape.backward(loss);

    const double h = 1e-5;
    for (size_t i = 0; i < inputs.size(); ++i) {
        for (size_t k = 0; k < inputs[i].size(); ++k) {
            auto shifted = inputs;
            shifted[i].data[k] += h;
            double up = eval_scalar(shifted, build);
            shifted[i].data[k] -= 2 * h;
            double down = eval_scalar(shifted, build);
            double numeric = (up - down) / (2 * h);
            double analytic = tape.grad(vars[i]).data[k];
            CHECK(analytic ==
                  doctest::Approx(numeric).epsilon(1e-5).scale(std::max(1.0, std::abs(numeric))));
        }
    }
}

// Fixed random projection turning a matrix output into a scalar loss.
Var reduce(DTape& tape, Var m, uint64_t salt) {
    const Tensor<double>& v = tape.value(m);
    Rng rng(salt);
    Tensor<double> coeff(v.rows, v.cols);
    for (auto& c : coeff.data) c = rng.uniform(-1.0, 1.0);
    return tape.inner_const(m, coeff);
}

}  // namespace

TEST_CASE("inner_const gradient is the coefficient tensor") {
    Rng rng(21);
    auto x = random_tensor(3, 4, rng);
    auto coeff = random_tensor(3, 4, rng);

    DTape tape(true);
    Var v = tape.input(Tensor<double>(x));
    Var loss = tape.inner_const(v, coeff);
    tape.backward(loss);

    double want = 0;
    for (size_t i = 0; i < x.size(); ++i) want += x.data[i] * coeff.data[i];
    CHECK(tape.value(loss).data[0] == doctest::Approx(want));
    for (size_t i = 0; i < x.size(); ++i) CHECK(tape.grad(v).data[i] == coeff.data[i]);
}

TEST_CASE("mse_const value and closed-form gradient") {
    Rng rng(22);
    auto x = random_tensor(2, 5, rng);
    auto target = random_tensor(2, 5, rng);

    DTape tape(true);
    Var v = tape.input(Tensor<double>(x));
    Var loss = tape.mse_const(v, target);
    tape.backward(loss);

    double n = double(x.size());
    double want = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        double d = x.data[i] - target.data[i];
        want += d * d;
    }
    want /= n;
    CHECK(tape.value(loss).data[0] == doctest::Approx(want));
    // d mean((x-t)^2) / dx = 2 (x - t) / n
    for (size_t i = 0; i < x.size(); ++i)
        CHECK(tape.grad(v).data[i] ==
              doctest::Approx(2.0 * (x.data[i] - target.data[i]) / n));
}

TEST_CASE("gradient of half square norm is the input scaled by 2/n") {
    Rng rng(23);
    auto x = random_tensor(4, 4, rng);
    DTape tape(true);
    Var v = tape.input(Tensor<double>(x));
    Var loss = tape.mse_const(v, Tensor<double>(4, 4));  // mean of squares
    tape.backward(loss);
    for (size_t i = 0; i < x.size(); ++i)
        CHECK(tape.grad(v).data[i] == doctest::Approx(2.0 * x.data[i] / 16.0));
}

TEST_CASE("input-independent loss has zero gradient") {
    Rng rng(24);
    auto x = random_tensor(3, 3, rng);
    DTape tape(true);
    Var v = tape.input(Tensor<double>(x));
    Var c = tape.constant(random_tensor(2, 2, rng));
    Var loss = tape.mse_const(c, Tensor<double>(2, 2));
    tape.backward(loss);
    for (double g : tape.grad(v).data) CHECK(g == 0.0);
}

TEST_CASE("finite differences: elementwise and linear ops") {
    Rng rng(100);

    SUBCASE("add") {
        check_gradients({random_tensor(3, 4, rng), random_tensor(3, 4, rng)},
                        [](DTape& t, const std::vector<Var>& v) {
                            return reduce(t, t.add(v[0], v[1]), 1);
                        });
    }
    SUBCASE("sub") {
        check_gradients({random_tensor(3, 4, rng), random_tensor(3, 4, rng)},
                        [](DTape& t, const std::vector<Var>& v) {
                            return reduce(t, t.sub(v[0], v[1]), 2);
                        });
    }
    SUBCASE("mul") {
        check_gradients({random_tensor(3, 4, rng), random_tensor(3, 4, rng)},
                        [](DTape& t, const std::vector<Var>& v) {
                            return reduce(t, t.mul(v[0], v[1]), 3);
                        });
    }
    SUBCASE("scale") {
        check_gradients({random_tensor(3, 4, rng)}, [](DTape& t, const std::vector<Var>& v) {
            return reduce(t, t.scale(v[0], 2.5), 4);
        });
    }
    SUBCASE("add_row") {
        check_gradients({random_tensor(3, 4, rng), random_tensor(1, 4, rng)},
                        [](DTape& t, const std::vector<Var>& v) {
                            return reduce(t, t.add_row(v[0], v[1]), 5);
                        });
    }
    SUBCASE("transpose") {
        check_gradients({random_tensor(3, 5, rng)}, [](DTape& t, const std::vector<Var>& v) {
            return reduce(t, t.transpose(v[0]), 6);
        });
    }
}

TEST_CASE("finite differences: matrix products") {
    Rng rng(101);

    SUBCASE("matmul") {
        check_gradients({random_tensor(3, 4, rng), random_tensor(4, 2, rng)},
                        [](DTape& t, const std::vector<Var>& v) {
                            return reduce(t, t.matmul(v[0], v[1]), 7);
                        });
    }
    SUBCASE("matmul_nt_scaled") {
        check_gradients({random_tensor(3, 4, rng), random_tensor(5, 4, rng)},
                        [](DTape& t, const std::vector<Var>& v) {
                            return reduce(t, t.matmul_nt_scaled(v[0], v[1], 0.5), 8);
                        });
    }
}

TEST_CASE("finite differences: slicing and concatenation") {
    Rng rng(102);

    SUBCASE("slice_cols") {
        check_gradients({random_tensor(3, 6, rng)}, [](DTape& t, const std::vector<Var>& v) {
            return reduce(t, t.slice_cols(v[0], 1, 4), 9);
        });
    }
    SUBCASE("slice_rows") {
        check_gradients({random_tensor(5, 3, rng)}, [](DTape& t, const std::vector<Var>& v) {
            return reduce(t, t.slice_rows(v[0], 2, 4), 10);
        });
    }
    SUBCASE("concat_cols") {
        check_gradients({random_tensor(3, 2, rng), random_tensor(3, 4, rng)},
                        [](DTape& t, const std::vector<Var>& v) {
                            return reduce(t, t.concat_cols({v[0], v[1]}), 11);
                        });
    }
    SUBCASE("concat_rows") {
        check_gradients({random_tensor(2, 3, rng), random_tensor(4, 3, rng)},
                        [](DTape& t, const std::vector<Var>& v) {
                            return reduce(t, t.concat_rows({v[0], v[1]}), 12);
                        });
    }
    SUBCASE("gather_rows with a repeated index accumulates") {
        check_gradients({random_tensor(4, 3, rng)}, [](DTape& t, const std::vector<Var>& v) {
            return reduce(t, t.gather_rows(v[0], {2, 0, 2}), 13);
        });
    }
}

TEST_CASE("finite differences: nonlinearities") {
    Rng rng(103);

    SUBCASE("gelu") {
        check_gradients({random_tensor(3, 4, rng, -2.0, 2.0)},
                        [](DTape& t, const std::vector<Var>& v) {
                            return reduce(t, t.gelu(v[0]), 14);
                        });
    }
    SUBCASE("softmax_rows") {
        check_gradients({random_tensor(3, 5, rng, -2.0, 2.0)},
                        [](DTape& t, const std::vector<Var>& v) {
                            return reduce(t, t.softmax_rows(v[0]), 15);
                        });
    }
    SUBCASE("layer_norm") {
        check_gradients(
            {random_tensor(3, 6, rng), random_tensor(1, 6, rng, 0.5, 1.5),
             random_tensor(1, 6, rng)},
            [](DTape& t, const std::vector<Var>& v) {
                return reduce(t, t.layer_norm(v[0], v[1], v[2]), 16);
            });
    }
    SUBCASE("rotate_pairs") {
        Rng angles(104);
        Tensor<double> cs(3, 2), sn(3, 2);
        for (int i = 0; i < 6; ++i) {
            double a = angles.uniform(0, 6.28);
            cs.data[i] = std::cos(a);
            sn.data[i] = std::sin(a);
        }
        check_gradients({random_tensor(3, 4, rng)},
                        [cs, sn](DTape& t, const std::vector<Var>& v) {
                            return reduce(t, t.rotate_pairs(v[0], cs, sn), 17);
                        });
    }
}

TEST_CASE("softmax rows sum to one and match a direct computation") {
    Rng rng(105);
    auto x = random_tensor(4, 7, rng, -3.0, 3.0);
    DTape tape(false);
    auto y = tape.value(tape.softmax_rows(tape.constant(Tensor<double>(x))));
    for (int r = 0; r < 4; ++r) {
        double sum = 0, mx = x.at(r, 0);
        for (int c = 0; c < 7; ++c) mx = std::max(mx, x.at(r, c));
        double z = 0;
        for (int c = 0; c < 7; ++c) z += std::exp(x.at(r, c) - mx);
        for (int c = 0; c < 7; ++c) {
            CHECK(y.at(r, c) == doctest::Approx(std::exp(x.at(r, c) - mx) / z));
            sum += y.at(r, c);
        }
        CHECK(sum == doctest::Approx(1.0));
    }
}

TEST_CASE("parameter leaves accumulate into external sinks") {
    Tensor<double> w(2, 2, {1, 2, 3, 4});
    Tensor<double> sink(2, 2);

    DTape tape(true);
    Var p = tape.param(w, &sink);
    Var doubled = tape.add(p, p);  // gradient 2 per element
    Var loss = tape.inner_const(doubled, Tensor<double>(2, 2, {1, 1, 1, 1}));
    tape.backward(loss);
    for (double g : sink.data) CHECK(g == 2.0);

    // A second backward pass on a fresh tape accumulates, not overwrites.
    DTape tape2(true);
    Var p2 = tape2.param(w, &sink);
    tape2.backward(tape2.inner_const(p2, Tensor<double>(2, 2, {1, 1, 1, 1})));
    for (double g : sink.data) CHECK(g == 3.0);
}

TEST_CASE("disabled tape computes values but never gradients") {
    Tensor<double> w(1, 2, {3, 4});
    Tensor<double> sink(1, 2);
    DTape tape(false);
    CHECK_FALSE(tape.grad_enabled());
    Var p = tape.param(w, &sink);
    Var out = tape.scale(p, 2.0);
    CHECK(tape.value(out).data[0] == 6.0);
    CHECK(tape.value(out).data[1] == 8.0);
    for (double g : sink.data) CHECK(g == 0.0);
    CHECK_THROWS_AS(tape.backward(out), Error);
}

TEST_CASE("backward rejects non-scalar outputs") {
    DTape tape(true);
    Var v = tape.input(Tensor<double>(2, 3));
    CHECK_THROWS_AS(tape.backward(tape.scale(v, 1.0)), DataError);
}

TEST_CASE("shape checks throw") {
    DTape tape(true);
    Var a = tape.constant(Tensor<double>(2, 3));
    Var b = tape.constant(Tensor<double>(3, 2));
    CHECK_THROWS_AS(tape.add(a, b), DataError);
    CHECK_THROWS_AS(tape.mul(a, b), DataError);
    CHECK_THROWS_AS(tape.matmul(b, b), DataError);  // 3x2 times 3x2
}
