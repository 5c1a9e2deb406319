#pragma once

#include <cstdint>

namespace fusionnet::kernels {

/// Layout: activations are row-major (n, h, w, c); conv filters are
/// (kh, kw, in_c, out_c). Output spatial extents and the top/left pad are
/// precomputed by the caller; bottom/right padding is implied.
struct ConvDims {
    int64_t n = 1;
    int64_t in_h = 0, in_w = 0, in_c = 0;
    int64_t kh = 0, kw = 0, out_c = 0;
    int64_t sh = 1, sw = 1;
    int64_t pad_top = 0, pad_left = 0;
    int64_t out_h = 0, out_w = 0;
};

struct PoolDims {
    int64_t n = 1;
    int64_t in_h = 0, in_w = 0, c = 0;
    int64_t fh = 0, fw = 0;
    int64_t sh = 1, sw = 1;
    int64_t pad_top = 0, pad_left = 0;
    int64_t out_h = 0, out_w = 0;
};

/// Every kernel exists twice: `serial` is the reference implementation,
/// `omp` parallelizes over independent output elements. Both visit the
/// summed terms of each output element in the same order, so their results
/// are bit-identical and independent of thread count. The unprefixed
/// functions dispatch on parallel_enabled().

namespace serial {
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void conv2d_forward(const double* x, const double* w, const double* bias, double* y, const ConvDims& d);
void conv2d_backward_input(const double* dy, const double* w, double* dx, const ConvDims& d);
void conv2d_backward_filter(const double* x, const double* dy, double* dw, const ConvDims& d);
void maxpool_forward(const double* x, double* y, int64_t* argmax, const PoolDims& d);
void maxpool_backward(const double* dy, const int64_t* argmax, double* dx, const PoolDims& d);
void avgpool_forward(const double* x, double* y, const PoolDims& d);
void avgpool_backward(const double* dy, double* dx, const PoolDims& d);
}  // namespace serial

namespace omp {
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void conv2d_forward(const double* x, const double* w, const double* bias, double* y, const ConvDims& d);
void conv2d_backward_input(const double* dy, const double* w, double* dx, const ConvDims& d);
void conv2d_backward_filter(const double* x, const double* dy, double* dw, const ConvDims& d);
void maxpool_forward(const double* x, double* y, int64_t* argmax, const PoolDims& d);
void maxpool_backward(const double* dy, const int64_t* argmax, double* dx, const PoolDims& d);
void avgpool_forward(const double* x, double* y, const PoolDims& d);
void avgpool_backward(const double* dy, double* dx, const PoolDims& d);
}  // namespace omp

bool parallel_enabled();
void set_parallel_enabled(bool enabled);

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void conv2d_forward(const double* x, const double* w, const double* bias, double* y, const ConvDims& d);
void conv2d_backward_input(const double* dy, const double* w, double* dx, const ConvDims& d);
void conv2d_backward_filter(const double* x, const double* dy, double* dw, const ConvDims& d);
void conv2d_backward_bias(const double* dy, double* db, const ConvDims& d);
void maxpool_forward(const double* x, double* y, int64_t* argmax, const PoolDims& d);
void maxpool_backward(const double* dy, const int64_t* argmax, double* dx, const PoolDims& d);
void avgpool_forward(const double* x, double* y, const PoolDims& d);
void avgpool_backward(const double* dy, double* dx, const PoolDims& d);

/// y[i] += x[i]
void add(const double* x, double* y, int64_t count);

}  // namespace fusionnet::kernels
