#pragma once

// Dense compute kernels behind the autodiff ops.
//
// Two implementations share one signature set:
//   serial::   straightforward loops, the reference used by tests
//   parallel:: OpenMP work-sharing over independent output blocks
//
// Every parallel kernel partitions the *outputs* and keeps the per-element
// accumulation order of the serial version, so results do not depend on the
// thread count.
//
// Layouts are row-major. Feature maps are channels-last [W][H][C]; conv
// kernels are [kw][kh][Cin][Cout].

#include <cstddef>
#include <span>

namespace stefnet::kernels {

struct ConvShape {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_w = 0;
  std::size_t kernel_h = 0;
};

namespace serial {

// out[m x n] = a[m x k] * b[k x n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);
// grad_a += grad_out * b^T
void matmul_grad_a(std::span<const double> grad_out, std::span<const double> b,
                   std::span<double> grad_a, std::size_t m, std::size_t k, std::size_t n);
// grad_b += a^T * grad_out
void matmul_grad_b(std::span<const double> a, std::span<const double> grad_out,
                   std::span<double> grad_b, std::size_t m, std::size_t k, std::size_t n);

// Same-padded cross-correlation with zero borders.
void conv2d(std::span<const double> input, std::span<const double> kernel,
            std::span<const double> bias, std::span<double> out, const ConvShape& s);
void conv2d_grad_input(std::span<const double> grad_out, std::span<const double> kernel,
                       std::span<double> grad_input, const ConvShape& s);
void conv2d_grad_kernel(std::span<const double> input, std::span<const double> grad_out,
                        std::span<double> grad_kernel, const ConvShape& s);
void conv2d_grad_bias(std::span<const double> grad_out, std::span<double> grad_bias,
                      const ConvShape& s);

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_grad_a(std::span<const double> grad_out, std::span<const double> b,
                   std::span<double> grad_a, std::size_t m, std::size_t k, std::size_t n);
void matmul_grad_b(std::span<const double> a, std::span<const double> grad_out,
                   std::span<double> grad_b, std::size_t m, std::size_t k, std::size_t n);

void conv2d(std::span<const double> input, std::span<const double> kernel,
            std::span<const double> bias, std::span<double> out, const ConvShape& s);
void conv2d_grad_input(std::span<const double> grad_out, std::span<const double> kernel,
                       std::span<double> grad_input, const ConvShape& s);
void conv2d_grad_kernel(std::span<const double> input, std::span<const double> grad_out,
                        std::span<double> grad_kernel, const ConvShape& s);
void conv2d_grad_bias(std::span<const double> grad_out, std::span<double> grad_bias,
                      const ConvShape& s);

}  // namespace parallel

}  // namespace stefnet::kernels
