#include "fusionnet/tensor.hpp"

#include <limits>
#include <sstream>
#include <stdexcept>

#include "fusionnet/kernels.hpp"

namespace fusionnet {

Shape::Shape(std::initializer_list<int64_t> dims) : dims_(dims) { validate(); }
Shape::Shape(std::vector<int64_t> dims) : dims_(std::move(dims)) { validate(); }

void Shape::validate() const {
    if (dims_.empty() || dims_.size() > 4) {
        throw std::invalid_argument("Shape: rank must be 1..4, got " + std::to_string(dims_.size()));
    }
    int64_t count = 1;
    for (int64_t d : dims_) {
        if (d < 1) throw std::invalid_argument("Shape: dims must be >= 1, got " + std::to_string(d));
        if (count > std::numeric_limits<int64_t>::max() / d) {
            throw std::invalid_argument("Shape: element count overflows 64-bit");
        }
        count *= d;
    }
}

int64_t Shape::elements() const {
    int64_t count = 1;
    for (int64_t d : dims_) count *= d;
    return count;
}

std::string Shape::str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < dims_.size(); ++i) {
        if (i) os << ",";
        os << dims_[i];
    }
    os << ")";
    return os.str();
}

Shape Shape::parse(std::string_view text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    for (char ch : text) {
        if (ch == '(' || ch == ')' || ch == ' ') continue;
        cleaned.push_back(ch == 'x' || ch == 'X' ? ',' : ch);
    }
    if (cleaned.empty() || cleaned.front() == ',' || cleaned.back() == ',' ||
        cleaned.find(",,") != std::string::npos) {
        throw std::invalid_argument("Shape::parse: malformed shape '" + std::string(text) + "'");
    }
    std::vector<int64_t> dims;
    std::stringstream ss(cleaned);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) throw std::invalid_argument("Shape::parse: empty dim in '" + std::string(text) + "'");
        size_t pos = 0;
        int64_t v = std::stoll(item, &pos);
        if (pos != item.size()) throw std::invalid_argument("Shape::parse: bad dim '" + item + "'");
        dims.push_back(v);
    }
    return Shape(std::move(dims));
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != shape.elements()) {
        throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape.str());
    }
}

Tensor Tensor::zeros(const Shape& s) {
    return Tensor(s, std::vector<double>(static_cast<size_t>(s.elements()), 0.0));
}

Tensor Tensor::full(const Shape& s, double value) {
    return Tensor(s, std::vector<double>(static_cast<size_t>(s.elements()), value));
}

double& Tensor::at2(int64_t i, int64_t j) {
    return data[static_cast<size_t>(i * shape.dim(1) + j)];
}
double Tensor::at2(int64_t i, int64_t j) const {
    return data[static_cast<size_t>(i * shape.dim(1) + j)];
}
double& Tensor::at4(int64_t n, int64_t h, int64_t w, int64_t c) {
    return data[static_cast<size_t>(((n * shape.dim(1) + h) * shape.dim(2) + w) * shape.dim(3) + c)];
}
double Tensor::at4(int64_t n, int64_t h, int64_t w, int64_t c) const {
    return data[static_cast<size_t>(((n * shape.dim(1) + h) * shape.dim(2) + w) * shape.dim(3) + c)];
}

Tensor elementwise_add(const Tensor& a, const Tensor& b) {
    if (!(a.shape == b.shape)) {
        throw std::invalid_argument("elementwise_add: shape mismatch " + a.shape.str() + " vs " + b.shape.str());
    }
    Tensor out = a;
    kernels::add(b.data.data(), out.data.data(), out.size());
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape.rank() != 2 || b.shape.rank() != 2) {
        throw std::invalid_argument("matmul: both operands must be rank-2");
    }
    if (a.shape.dim(1) != b.shape.dim(0)) {
        throw std::invalid_argument("matmul: inner dims differ, " + a.shape.str() + " vs " + b.shape.str());
    }
    const int64_t m = a.shape.dim(0), k = a.shape.dim(1), n = b.shape.dim(1);
    Tensor out = Tensor::zeros(Shape{m, n});
    kernels::matmul(a.data.data(), b.data.data(), out.data.data(), m, k, n);
    return out;
}

}  // namespace fusionnet
