#pragma once

#include <span>

#include "hgm_ehr/tensor.hpp"

// Inner loops shared by the HGM projections and the CNN. Each kernel has a
// serial reference and an OpenMP version that splits the outer loop only, so
// both produce bit-identical results; tests compare them directly.
namespace hgm_ehr::kernels {

// Full-height temporal convolution.
//   input:   T x F
//   filters: n_f x (k * F), tap j of filter f at columns [j*F, (j+1)*F)
//   out:     n_f x (T - k + 1), out(f, t) = bias[f] + sum_j <filter_f tap j, input row t+j>
struct ConvShape {
    std::size_t time = 0;
    std::size_t features = 0;
    std::size_t filters = 0;
    std::size_t kernel = 0;
    std::size_t out_time() const { return time - kernel + 1; }
};

namespace serial {

void matvec(const Matrix& w, std::span<const double> x, std::span<double> out);
void conv_forward(const ConvShape& shape, std::span<const double> input, const Matrix& filters,
                  std::span<const double> bias, Matrix& out);
// grad_filters(f, j*F + i) += sum_t grad_out(f, t) * input(t + j, i)
void conv_filter_grad(const ConvShape& shape, std::span<const double> input, const Matrix& grad_out,
                      Matrix& grad_filters);

}  // namespace serial

namespace omp {

void matvec(const Matrix& w, std::span<const double> x, std::span<double> out);
void conv_forward(const ConvShape& shape, std::span<const double> input, const Matrix& filters,
                  std::span<const double> bias, Matrix& out);
void conv_filter_grad(const ConvShape& shape, std::span<const double> input, const Matrix& grad_out,
                      Matrix& grad_filters);

}  // namespace omp

}  // namespace hgm_ehr::kernels
