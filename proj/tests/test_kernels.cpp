#include <doctest.h>

#include "hgm_ehr/kernels.hpp"
#include "hgm_ehr/rng.hpp"

using namespace hgm_ehr;
namespace k = hgm_ehr::kernels;
using k::ConvShape;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (auto& v : m.data) v = rng.uniform(-1.0, 1.0);
    return m;
}

Vec random_vec(Rng& rng, std::size_t n) {
    Vec v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

}  // namespace

TEST_CASE("matvec serial, omp and naive agree") {
    Rng rng(1);
    for (auto [r, c] : {std::pair<std::size_t, std::size_t>{3, 4}, {128, 30}, {512, 409}}) {
        auto w = random_matrix(rng, r, c);
        auto x = random_vec(rng, c);
        Vec a(r), b(r);
        k::serial::matvec(w, x, a);
        k::omp::matvec(w, x, b);
        CHECK(a == b);
        for (std::size_t i = 0; i < r; ++i) {
            long double s = 0;
            for (std::size_t j = 0; j < c; ++j) s += static_cast<long double>(w(i, j)) * x[j];
            CHECK(a[i] == doctest::Approx(static_cast<double>(s)).epsilon(1e-12));
        }
    }
}

TEST_CASE("conv_forward serial, omp and naive agree") {
    Rng rng(2);
    for (ConvShape s : {ConvShape{5, 2, 3, 2}, ConvShape{12, 158, 32, 3}, ConvShape{48, 158, 64, 5}}) {
        auto input = random_vec(rng, s.time * s.features);
        auto filters = random_matrix(rng, s.filters, s.kernel * s.features);
        auto bias = random_vec(rng, s.filters);
        Matrix a(s.filters, s.out_time()), b(s.filters, s.out_time());
        k::serial::conv_forward(s, input, filters, bias, a);
        k::omp::conv_forward(s, input, filters, bias, b);
        CHECK(a == b);
        for (std::size_t f = 0; f < s.filters; ++f) {
            for (std::size_t t = 0; t < s.out_time(); ++t) {
                double ref = bias[f];
                for (std::size_t j = 0; j < s.kernel; ++j) {
                    for (std::size_t i = 0; i < s.features; ++i) {
                        ref += filters(f, j * s.features + i) * input[(t + j) * s.features + i];
                    }
                }
                CHECK(a(f, t) == doctest::Approx(ref).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("conv_filter_grad serial, omp and naive agree") {
    Rng rng(3);
    for (ConvShape s : {ConvShape{5, 2, 3, 2}, ConvShape{24, 158, 32, 3}}) {
        auto input = random_vec(rng, s.time * s.features);
        auto grad_out = random_matrix(rng, s.filters, s.out_time());
        auto start = random_matrix(rng, s.filters, s.kernel * s.features);
        Matrix a = start, b = start;
        k::serial::conv_filter_grad(s, input, grad_out, a);
        k::omp::conv_filter_grad(s, input, grad_out, b);
        CHECK(a == b);
        for (std::size_t f = 0; f < s.filters; ++f) {
            for (std::size_t j = 0; j < s.kernel; ++j) {
                for (std::size_t i = 0; i < s.features; ++i) {
                    double ref = start(f, j * s.features + i);
                    for (std::size_t t = 0; t < s.out_time(); ++t) {
                        ref += grad_out(f, t) * input[(t + j) * s.features + i];
                    }
                    CHECK(a(f, j * s.features + i) == doctest::Approx(ref).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_CASE("hand-computed convolution") {
    // T=3, F=1, one filter [1, -1]: differences of consecutive rows
    ConvShape s{3, 1, 1, 2};
    const Vec input{1.0, 4.0, 9.0};
    Matrix filters(1, 2);
    filters(0, 0) = 1.0;
    filters(0, 1) = -1.0;
    const Vec bias{0.5};
    Matrix out(1, 2);
    k::serial::conv_forward(s, input, filters, bias, out);
    CHECK(out(0, 0) == -2.5);
    CHECK(out(0, 1) == -4.5);
}
