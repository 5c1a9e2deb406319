// Times the serial reference kernels against the OpenMP kernels and checks
// that both produce bit-identical results.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fusionnet/kernels.hpp"
#include "fusionnet/rng.hpp"

using namespace fusionnet;

namespace {

std::vector<double> random_vec(int64_t count, Rng& rng) {
    std::vector<double> v(static_cast<size_t>(count));
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

double time_ms(const std::function<void()>& fn, int repeats) {
    fn();  // warm up
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < repeats; ++i) fn();
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(stop - start).count() / repeats;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

void report(const char* name, double serial_ms, double omp_ms, double diff) {
    std::printf("%-24s serial %8.2f ms   omp %8.2f ms   speedup %5.2fx   max|diff| %g\n", name, serial_ms, omp_ms,
                serial_ms / omp_ms, diff);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP\n");
#endif
    Rng rng(42);
    const int repeats = 5;

    {  // matmul 256x256x256
        const int64_t n = 256;
        const std::vector<double> a = random_vec(n * n, rng), b = random_vec(n * n, rng);
        std::vector<double> c1(static_cast<size_t>(n * n)), c2(c1);
        const double t1 = time_ms([&] { kernels::serial::matmul(a.data(), b.data(), c1.data(), n, n, n); }, repeats);
        const double t2 = time_ms([&] { kernels::omp::matmul(a.data(), b.data(), c2.data(), n, n, n); }, repeats);
        report("matmul 256^3", t1, t2, max_abs_diff(c1, c2));
    }

    {  // conv2d forward 8x64x64x8 -> 16, 3x3
        kernels::ConvDims d;
        d.n = 8;
        d.in_h = d.in_w = 64;
        d.in_c = 8;
        d.kh = d.kw = 3;
        d.out_c = 16;
        d.out_h = d.out_w = 62;
        const std::vector<double> x = random_vec(d.n * d.in_h * d.in_w * d.in_c, rng);
        const std::vector<double> w = random_vec(d.kh * d.kw * d.in_c * d.out_c, rng);
        const std::vector<double> bias = random_vec(d.out_c, rng);
        std::vector<double> y1(static_cast<size_t>(d.n * d.out_h * d.out_w * d.out_c)), y2(y1);
        const double t1 =
            time_ms([&] { kernels::serial::conv2d_forward(x.data(), w.data(), bias.data(), y1.data(), d); }, repeats);
        const double t2 =
            time_ms([&] { kernels::omp::conv2d_forward(x.data(), w.data(), bias.data(), y2.data(), d); }, repeats);
        report("conv2d fwd 8x64x64", t1, t2, max_abs_diff(y1, y2));

        std::vector<double> dx1(x.size()), dx2(x.size());
        const std::vector<double> dy = random_vec(static_cast<int64_t>(y1.size()), rng);
        const double t3 =
            time_ms([&] { kernels::serial::conv2d_backward_input(dy.data(), w.data(), dx1.data(), d); }, repeats);
        const double t4 =
            time_ms([&] { kernels::omp::conv2d_backward_input(dy.data(), w.data(), dx2.data(), d); }, repeats);
        report("conv2d bwd input", t3, t4, max_abs_diff(dx1, dx2));

        std::vector<double> dw1(w.size()), dw2(w.size());
        const double t5 =
            time_ms([&] { kernels::serial::conv2d_backward_filter(x.data(), dy.data(), dw1.data(), d); }, repeats);
        const double t6 =
            time_ms([&] { kernels::omp::conv2d_backward_filter(x.data(), dy.data(), dw2.data(), d); }, repeats);
        report("conv2d bwd filter", t5, t6, max_abs_diff(dw1, dw2));
    }

    {  // maxpool 8x64x64x16, 2x2/2
        kernels::PoolDims d;
        d.n = 8;
        d.in_h = d.in_w = 64;
        d.c = 16;
        d.fh = d.fw = 2;
        d.sh = d.sw = 2;
        d.out_h = d.out_w = 32;
        const std::vector<double> x = random_vec(d.n * d.in_h * d.in_w * d.c, rng);
        std::vector<double> y1(static_cast<size_t>(d.n * d.out_h * d.out_w * d.c)), y2(y1);
        std::vector<int64_t> am1(y1.size()), am2(y1.size());
        const double t1 = time_ms([&] { kernels::serial::maxpool_forward(x.data(), y1.data(), am1.data(), d); }, repeats);
        const double t2 = time_ms([&] { kernels::omp::maxpool_forward(x.data(), y2.data(), am2.data(), d); }, repeats);
        report("maxpool fwd 8x64x64", t1, t2, max_abs_diff(y1, y2));
    }

    return 0;
}
