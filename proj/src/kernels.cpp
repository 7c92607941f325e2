#include "hgm_ehr/kernels.hpp"

#include <omp.h>

namespace hgm_ehr::kernels {

namespace {

inline void matvec_row(const Matrix& w, std::span<const double> x, std::span<double> out, std::size_t r) {
    const double* row = w.data.data() + r * w.cols;
    double s = 0.0;
    for (std::size_t c = 0; c < w.cols; ++c) s += row[c] * x[c];
    out[r] = s;
}

inline void conv_filter(const ConvShape& shape, std::span<const double> input, const Matrix& filters,
                        std::span<const double> bias, Matrix& out, std::size_t f) {
    const std::size_t F = shape.features;
    const double* w = filters.data.data() + f * filters.cols;
    for (std::size_t t = 0; t < shape.out_time(); ++t) {
        double s = bias[f];
        for (std::size_t j = 0; j < shape.kernel; ++j) {
            const double* x = input.data() + (t + j) * F;
            const double* tap = w + j * F;
            for (std::size_t i = 0; i < F; ++i) s += tap[i] * x[i];
        }
        out(f, t) = s;
    }
}

inline void filter_grad(const ConvShape& shape, std::span<const double> input, const Matrix& grad_out,
                        Matrix& grad_filters, std::size_t f) {
    const std::size_t F = shape.features;
    double* g = grad_filters.data.data() + f * grad_filters.cols;
    for (std::size_t t = 0; t < shape.out_time(); ++t) {
        const double go = grad_out(f, t);
        if (go == 0.0) continue;
        for (std::size_t j = 0; j < shape.kernel; ++j) {
            const double* x = input.data() + (t + j) * F;
            double* tap = g + j * F;
            for (std::size_t i = 0; i < F; ++i) tap[i] += go * x[i];
        }
    }
}

}  // namespace

namespace serial {

void matvec(const Matrix& w, std::span<const double> x, std::span<double> out) {
    for (std::size_t r = 0; r < w.rows; ++r) matvec_row(w, x, out, r);
}

void conv_forward(const ConvShape& shape, std::span<const double> input, const Matrix& filters,
                  std::span<const double> bias, Matrix& out) {
    for (std::size_t f = 0; f < shape.filters; ++f) conv_filter(shape, input, filters, bias, out, f);
}

void conv_filter_grad(const ConvShape& shape, std::span<const double> input, const Matrix& grad_out,
                      Matrix& grad_filters) {
    for (std::size_t f = 0; f < shape.filters; ++f) filter_grad(shape, input, grad_out, grad_filters, f);
}

}  // namespace serial

namespace omp {

void matvec(const Matrix& w, std::span<const double> x, std::span<double> out) {
    const auto rows = static_cast<long>(w.rows);
#pragma omp parallel for schedule(static) if (w.rows * w.cols > 65536)
    for (long r = 0; r < rows; ++r) matvec_row(w, x, out, static_cast<std::size_t>(r));
}

void conv_forward(const ConvShape& shape, std::span<const double> input, const Matrix& filters,
                  std::span<const double> bias, Matrix& out) {
    const auto n = static_cast<long>(shape.filters);
    const std::size_t work = shape.filters * shape.out_time() * shape.kernel * shape.features;
#pragma omp parallel for schedule(static) if (work > 65536)
    for (long f = 0; f < n; ++f) conv_filter(shape, input, filters, bias, out, static_cast<std::size_t>(f));
}

void conv_filter_grad(const ConvShape& shape, std::span<const double> input, const Matrix& grad_out,
                      Matrix& grad_filters) {
    const auto n = static_cast<long>(shape.filters);
    const std::size_t work = shape.filters * shape.out_time() * shape.kernel * shape.features;
#pragma omp parallel for schedule(static) if (work > 65536)
    for (long f = 0; f < n; ++f) filter_grad(shape, input, grad_out, grad_filters, static_cast<std::size_t>(f));
}

}  // namespace omp

}  // namespace hgm_ehr::kernels
