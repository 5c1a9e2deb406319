#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <stdexcept>

#include "fusionnet/rng.hpp"
#include "fusionnet/tensor.hpp"

using namespace fusionnet;

TEST_CASE("zeros") {
    const Tensor a = Tensor::zeros(Shape{2, 2});
    CHECK(a.size() == 4);
    for (double v : a.data) CHECK(v == 0.0);

    CHECK(Tensor::zeros(Shape{1}).size() == 1);
    CHECK(Tensor::zeros(Shape{3, 3, 3}).size() == 27);
}

TEST_CASE("shape validation") {
    CHECK_THROWS_AS((Shape{0, 2}), std::invalid_argument);
    CHECK_THROWS_AS((Shape{-1}), std::invalid_argument);
    CHECK_THROWS_AS(Shape(std::vector<int64_t>{}), std::invalid_argument);
    CHECK_THROWS_AS((Shape{1, 2, 3, 4, 5}), std::invalid_argument);
    // element count must fit in 64 bits
    CHECK_THROWS_AS((Shape{1'000'000'000'000, 1'000'000'000'000}), std::invalid_argument);
}

TEST_CASE("shape parse and print") {
    CHECK(Shape::parse("28x28x128") == Shape{28, 28, 128});
    CHECK(Shape::parse("(7,7,1024)") == Shape{7, 7, 1024});
    CHECK(Shape{2048}.str() == "(2048)");
    CHECK_THROWS_AS(Shape::parse("2x"), std::invalid_argument);
}

TEST_CASE("elementwise_add basics") {
    const Tensor a(Shape{2}, {1, 2});
    CHECK(elementwise_add(a, Tensor::zeros(Shape{2})).data == std::vector<double>{1, 2});
    CHECK(elementwise_add(a, Tensor(Shape{2}, {3, 4})).data == std::vector<double>{4, 6});

    Tensor neg = a;
    for (double& v : neg.data) v = -v;
    const Tensor sum = elementwise_add(a, neg);
    for (double v : sum.data) CHECK(v == 0.0);
}

TEST_CASE("elementwise_add errors") {
    CHECK_THROWS_AS(elementwise_add(Tensor::zeros(Shape{2}), Tensor::zeros(Shape{3})), std::invalid_argument);
}

TEST_CASE("elementwise_add is bitwise commutative") {
    Rng rng(7);
    Tensor a = Tensor::zeros(Shape{64});
    Tensor b = Tensor::zeros(Shape{64});
    for (double& v : a.data) v = rng.uniform(-10.0, 10.0);
    for (double& v : b.data) v = rng.uniform(-10.0, 10.0);
    CHECK(elementwise_add(a, b).data == elementwise_add(b, a).data);
}

TEST_CASE("matmul identity and forced values") {
    const Tensor eye(Shape{2, 2}, {1, 0, 0, 1});
    const Tensor a(Shape{2, 2}, {1, 2, 3, 4});
    CHECK(matmul(eye, a).data == a.data);

    const Tensor row(Shape{1, 2}, {1, 2});
    const Tensor col(Shape{2, 1}, {3, 4});
    CHECK(matmul(row, col).data == std::vector<double>{11});
}

namespace {
// independent naive reference, same summation order as the contract
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
    const int64_t m = a.shape.dim(0), k = a.shape.dim(1), n = b.shape.dim(1);
    Tensor c = Tensor::zeros(Shape{m, n});
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += a.at2(i, p) * b.at2(p, j);
            c.at2(i, j) = acc;
        }
    }
    return c;
}
}  // namespace

TEST_CASE("matmul matches the naive oracle exactly") {
    Rng rng(13);
    for (int round = 0; round < 20; ++round) {
        const int64_t m = 1 + rng.uniform_int(8), k = 1 + rng.uniform_int(8), n = 1 + rng.uniform_int(8);
        Tensor a = Tensor::zeros(Shape{m, k});
        Tensor b = Tensor::zeros(Shape{k, n});
        for (double& v : a.data) v = rng.uniform(-2.0, 2.0);
        for (double& v : b.data) v = rng.uniform(-2.0, 2.0);
        CHECK(matmul(a, b).data == matmul_oracle(a, b).data);
    }
}

TEST_CASE("matmul shape errors") {
    CHECK_THROWS_AS(matmul(Tensor::zeros(Shape{2, 3}), Tensor::zeros(Shape{2, 3})), std::invalid_argument);
    CHECK_THROWS_AS(matmul(Tensor::zeros(Shape{2}), Tensor::zeros(Shape{2, 2})), std::invalid_argument);
}
