#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace fusionnet {

/// Dense tensor shape, rank 1..4, channels-last convention for activations:
/// rank-3 is (height, width, channels), rank-4 adds a leading batch dim.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<int64_t> dims);
    explicit Shape(std::vector<int64_t> dims);

    int rank() const { return static_cast<int>(dims_.size()); }
    int64_t dim(int i) const { return dims_.at(static_cast<size_t>(i)); }
    const std::vector<int64_t>& dims() const { return dims_; }

    /// Product of all dims; construction rejects overflow.
    int64_t elements() const;

    bool operator==(const Shape& other) const = default;

    /// "(28,28,128)"
    std::string str() const;

    /// Accepts "28x28x128" or "(28,28,128)".
    static Shape parse(std::string_view text);

private:
    void validate() const;
    std::vector<int64_t> dims_;
};

struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d);

    static Tensor zeros(const Shape& s);
    static Tensor full(const Shape& s, double value);

    int64_t size() const { return static_cast<int64_t>(data.size()); }

    double& at2(int64_t i, int64_t j);
    double at2(int64_t i, int64_t j) const;
    double& at4(int64_t n, int64_t h, int64_t w, int64_t c);
    double at4(int64_t n, int64_t h, int64_t w, int64_t c) const;
};

Tensor elementwise_add(const Tensor& a, const Tensor& b);

/// (M,K) x (K,N) -> (M,N). Summation over K runs innermost in ascending
/// order so results are reproducible and match the naive reference.
Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace fusionnet
