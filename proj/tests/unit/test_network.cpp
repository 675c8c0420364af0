#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "tsa/errors.hpp"
#include "tsa/network.hpp"
#include "tsa/oracle.hpp"

using namespace tsa;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double sd = 1.0) {
    std::normal_distribution<double> n(0.0, sd);
    Matrix m(r, c);
    for (double& v : m.data()) v = n(rng);
    return m;
}

// L = sum(G * logits) + sum(H * features), evaluated in extended precision
// by a forward pass written out here, independently of forward().
LossProbe linear_probe(const ModelParams& p, const Matrix& x, const Matrix& g, const Matrix& h) {
    using Wide = long double;
    LossProbe probe;
    Wide total = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        std::vector<Wide> a(x.row(i).begin(), x.row(i).end());
        for (std::size_t l = 0; l < p.extractor.size(); ++l) {
            const auto& layer = p.extractor[l];
            std::vector<Wide> z(layer.weight.rows());
            for (std::size_t o = 0; o < z.size(); ++o) {
                Wide s = layer.bias[o];
                for (std::size_t k = 0; k < a.size(); ++k) s += static_cast<Wide>(layer.weight(o, k)) * a[k];
                z[o] = s;
            }
            if (l + 1 < p.extractor.size()) {
                for (Wide& v : z) {
                    probe.rectifier_inputs.push_back(static_cast<double>(v));
                    if (!(v > 0)) v = 0;
                }
            }
            a = std::move(z);
        }
        for (std::size_t k = 0; k < a.size(); ++k) total += h(i, k) * a[k];
        for (std::size_t c = 0; c < p.head_w.rows(); ++c) {
            Wide s = p.head_b[c];
            for (std::size_t k = 0; k < a.size(); ++k) s += static_cast<Wide>(p.head_w(c, k)) * a[k];
            total += g(i, c) * s;
        }
    }
    probe.value = total;
    return probe;
}

double audit_backward(const std::vector<std::size_t>& widths, std::size_t in, std::size_t classes,
                      std::uint64_t seed) {
    Rng rng(seed);
    ModelParams p = init_model(in, widths, classes, rng);
    std::normal_distribution<double> n(0.0, 0.1);
    for (auto& l : p.extractor)
        for (double& b : l.bias) b = n(rng);
    const Matrix x = random_matrix(5, in, rng);
    const Matrix g = random_matrix(5, classes, rng);
    const Matrix h = random_matrix(5, p.feature_dim(), rng);

    const auto rec = forward(p, x);
    const Vector analytic = flatten(backward(p, rec, g, h));
    const LossEvaluator eval = [&](std::span<const double> flat) {
        return linear_probe(unflatten(p, flat), x, g, h);
    };
    const auto result = finite_diff_audit(eval, flatten(p), analytic, 1e-5);
    CHECK(result.checked > 0);
    return result.max_relative_error;
}

}  // namespace

TEST_SUITE("network") {

TEST_CASE("init shapes and He scaling") {
    Rng rng(1);
    const std::vector<std::size_t> widths{32, 32};
    const auto p = init_model(2, widths, 3, rng);
    CHECK(p.input_dim() == 2);
    CHECK(p.feature_dim() == 32);
    CHECK(p.class_count() == 3);
    CHECK(p.parameter_count() == (2 * 32 + 32) + (32 * 32 + 32) + (3 * 32 + 3));
    for (const auto& l : p.extractor)
        for (double b : l.bias) CHECK(b == 0.0);
    for (double b : p.head_b) CHECK(b == 0.0);

    Rng big(2);
    const std::vector<std::size_t> wide{400};
    const auto q = init_model(200, wide, 2, big);
    double ss = 0.0;
    for (double w : q.extractor[0].weight.data()) ss += w * w;
    const double var = ss / static_cast<double>(q.extractor[0].weight.size());
    CHECK(var == doctest::Approx(2.0 / 200.0).epsilon(0.02));

    CHECK_THROWS_AS(init_model(0, widths, 3, rng), ConfigError);
}

TEST_CASE("forward examples") {
    Rng rng(3);
    const std::vector<std::size_t> widths{4, 3};
    ModelParams zero = init_model(2, widths, 2, rng).zeros_like();
    const auto rec = forward(zero, Matrix(3, 2, 1.0));
    for (double v : rec.logits.data()) CHECK(v == 0.0);

    ModelParams ident;
    ident.extractor.push_back({Matrix::identity(3), Vector(3, 0.0)});
    ident.head_w = Matrix::identity(3);
    ident.head_b = Vector(3, 0.0);
    const Matrix x(2, 3, {1.0, -2.0, 3.5, 0.25, 0.0, -1.0});
    CHECK(forward(ident, x).logits == x);

    const auto p = init_model(2, widths, 2, rng);
    Matrix dup(2, 2, {0.3, -0.7, 0.3, -0.7});
    const auto d = forward(p, dup);
    CHECK(d.logits(0, 0) == d.logits(1, 0));
    CHECK(d.logits(0, 1) == d.logits(1, 1));

    CHECK_THROWS_AS(forward(p, Matrix(2, 3, 0.0)), DimensionError);
}

TEST_CASE("forward rows are batch independent and logits follow the head") {
    Rng rng(4);
    const std::vector<std::size_t> widths{8, 6};
    const auto p = init_model(3, widths, 4, rng);
    const Matrix x = random_matrix(7, 3, rng);
    const auto all = forward(p, x);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        Matrix one(1, 3);
        std::copy(x.row(r).begin(), x.row(r).end(), one.data().begin());
        const auto single = forward(p, one);
        for (std::size_t c = 0; c < 4; ++c) CHECK(single.logits(0, c) == all.logits(r, c));
        for (std::size_t c = 0; c < 4; ++c) {
            double s = p.head_b[c];
            for (std::size_t k = 0; k < 6; ++k) s += p.head_w(c, k) * all.features(r, k);
            CHECK(std::abs(s - all.logits(r, c)) <= 1e-12);
        }
    }
}

TEST_CASE("softmax examples") {
    CHECK(softmax(Matrix(1, 2, {0.0, 0.0})) == Matrix(1, 2, {0.5, 0.5}));
    const Matrix p = softmax(Matrix(1, 2, {std::log(1.0), std::log(3.0)}));
    CHECK(std::abs(p(0, 0) - 0.25) <= 1e-12);
    CHECK(std::abs(p(0, 1) - 0.75) <= 1e-12);

    Rng rng(5);
    const Matrix z = random_matrix(6, 5, rng, 3.0);
    Matrix shifted = z;
    for (double& v : shifted.data()) v += 1000.0;
    const Matrix a = softmax(z);
    const Matrix b = softmax(shifted);
    for (std::size_t r = 0; r < z.rows(); ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < z.cols(); ++c) {
            CHECK(a(r, c) >= 0.0);
            CHECK(std::abs(a(r, c) - b(r, c)) <= 1e-12);
            sum += a(r, c);
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("pseudo labels take the first maximum") {
    CHECK(pseudo_label(Matrix(1, 3, {0.1, 0.7, 0.2})) == std::vector<int>{1});
    CHECK(pseudo_label(Matrix(1, 2, {0.5, 0.5})) == std::vector<int>{0});
    CHECK(pseudo_label(Matrix(3, 3, {0, 0, 1, 1, 0, 0, 0, 1, 0})) == std::vector<int>{2, 0, 1});
}

TEST_CASE("backward with zero upstream gradient is zero") {
    Rng rng(6);
    const std::vector<std::size_t> widths{5, 4};
    const auto p = init_model(2, widths, 3, rng);
    const auto rec = forward(p, random_matrix(4, 2, rng));
    const auto g = backward(p, rec, Matrix(4, 3, 0.0), Matrix(4, 4, 0.0));
    CHECK(g == p.zeros_like());
    CHECK_THROWS_AS(backward(p, rec, Matrix(4, 2, 0.0), Matrix(4, 4, 0.0)), DimensionError);
    CHECK_THROWS_AS(backward(p, rec, Matrix(4, 3, 0.0), Matrix(3, 4, 0.0)), DimensionError);
}

TEST_CASE("backward matches finite differences on a 2-4-3 net") {
    CHECK(audit_backward({4}, 2, 3, 7) <= 1e-6);
}

TEST_CASE("backward matches finite differences through rectifiers") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        CHECK(audit_backward({6, 5, 4}, 3, 3, 100 + seed) <= 1e-6);
        CHECK(audit_backward({32, 32}, 2, 4, 200 + seed) <= 1e-6);
    }
}

TEST_CASE("feature-only gradient leaves the head untouched") {
    Rng rng(8);
    const std::vector<std::size_t> widths{5, 4};
    const auto p = init_model(2, widths, 3, rng);
    const auto rec = forward(p, random_matrix(4, 2, rng));
    const auto g = backward(p, rec, Matrix(4, 3, 0.0), random_matrix(4, 4, rng));
    for (double v : g.head_w.data()) CHECK(v == 0.0);
    for (double v : g.head_b) CHECK(v == 0.0);
    double mass = 0.0;
    for (double v : g.extractor.back().weight.data()) mass += std::abs(v);
    CHECK(mass > 0.0);
}

TEST_CASE("sgd with momentum") {
    Rng rng(9);
    const std::vector<std::size_t> widths{3};
    ModelParams p = init_model(2, widths, 2, rng);
    const ModelParams start = p;

    auto zero_state = make_optimizer(p, 0.1, 0.9);
    sgd_step(p, p.zeros_like(), zero_state);
    CHECK(p == start);

    Gradients g = p.zeros_like();
    for (auto arr : g.arrays())
        for (double& v : arr) v = 0.5;

    ModelParams plain = start;
    auto gd = make_optimizer(plain, 0.1, 0.0);
    sgd_step(plain, g, gd);
    sgd_step(plain, g, gd);
    const auto s = flatten(start);
    const auto q = flatten(plain);
    for (std::size_t k = 0; k < s.size(); ++k) CHECK(q[k] == doctest::Approx(s[k] - 2 * 0.1 * 0.5));

    ModelParams mom = start;
    auto state = make_optimizer(mom, 0.1, 0.9);
    sgd_step(mom, g, state);
    sgd_step(mom, g, state);
    const auto m = flatten(mom);
    for (std::size_t k = 0; k < s.size(); ++k)
        CHECK(std::abs((s[k] - m[k]) - 0.1 * 0.5 * (1.0 + 1.9)) <= 1e-12);
}

TEST_CASE("checkpoint round trip is lossless") {
    Rng rng(10);
    const std::vector<std::size_t> widths{7, 5};
    ModelParams p = init_model(3, widths, 4, rng);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto arr : p.arrays())
        for (double& v : arr) v = n(rng) * 1e-3 + v;

    CHECK(parse_model(serialize_model(p)) == p);

    const auto path = std::filesystem::temp_directory_path() / "tsa_model_roundtrip.txt";
    save_model(p, path);
    CHECK(load_model(path) == p);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_model(path), IoError);
}

TEST_CASE("checkpoint parse errors") {
    CHECK_THROWS_AS(parse_model(""), ParseError);
    CHECK_THROWS_AS(parse_model("tsa-model 2\n"), ParseError);
    CHECK_THROWS_AS(parse_model("tsa-model 1\nextractor 1\nlayer 1 1\nx\n0\nhead 1 1\n1\n0\n"),
                    ParseError);
    CHECK_THROWS_AS(parse_model("tsa-model 1\nextractor 1\nlayer 1 1\n1\n0\nhead 2 2\n1 2 3 4\n0 0\n"),
                    DimensionError);
}

}  // TEST_SUITE
