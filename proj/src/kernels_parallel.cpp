#include "stefnet/kernels.hpp"

#include <algorithm>

namespace stefnet::kernels::parallel {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kMinParallelWork = 1 << 14;

constexpr std::size_t kColumnBlock = 64;

}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  const bool big = m * k * n >= kMinParallelWork;
  if (m > 1) {
    const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (big)
    for (long i = 0; i < rows; ++i) {
      double* row = out.data() + static_cast<std::size_t>(i) * n;
      std::fill(row, row + n, 0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = a[static_cast<std::size_t>(i) * k + p];
        const double* brow = b.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
      }
    }
    return;
  }
  // Row vector times matrix: split the columns instead.
  const long blocks = static_cast<long>((n + kColumnBlock - 1) / kColumnBlock);
#pragma omp parallel for schedule(static) if (big)
  for (long blk = 0; blk < blocks; ++blk) {
    const std::size_t j0 = static_cast<std::size_t>(blk) * kColumnBlock;
    const std::size_t j1 = std::min(n, j0 + kColumnBlock);
    double* row = out.data();
    std::fill(row + j0, row + j1, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = j0; j < j1; ++j) row[j] += aip * brow[j];
    }
  }
}

void matmul_grad_a(std::span<const double> grad_out, std::span<const double> b,
                   std::span<double> grad_a, std::size_t m, std::size_t k, std::size_t n) {
  const bool big = m * k * n >= kMinParallelWork;
  const long cells = static_cast<long>(m * k);
#pragma omp parallel for schedule(static) if (big)
  for (long c = 0; c < cells; ++c) {
    const std::size_t i = static_cast<std::size_t>(c) / k;
    const std::size_t p = static_cast<std::size_t>(c) % k;
    const double* g = grad_out.data() + i * n;
    const double* brow = b.data() + p * n;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += g[j] * brow[j];
    grad_a[static_cast<std::size_t>(c)] += s;
  }
}

void matmul_grad_b(std::span<const double> a, std::span<const double> grad_out,
                   std::span<double> grad_b, std::size_t m, std::size_t k, std::size_t n) {
  const bool big = m * k * n >= kMinParallelWork;
  const long rows = static_cast<long>(k);
#pragma omp parallel for schedule(static) if (big)
  for (long p = 0; p < rows; ++p) {
    double* gb = grad_b.data() + static_cast<std::size_t>(p) * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double aip = a[i * k + static_cast<std::size_t>(p)];
      const double* g = grad_out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) gb[j] += aip * g[j];
    }
  }
}

void conv2d(std::span<const double> input, std::span<const double> kernel,
            std::span<const double> bias, std::span<double> out, const ConvShape& s) {
  const long pw = static_cast<long>(s.kernel_w / 2);
  const long ph = static_cast<long>(s.kernel_h / 2);
  const long W = static_cast<long>(s.width);
  const long H = static_cast<long>(s.height);
  const std::size_t cin = s.in_channels;
  const std::size_t cout = s.out_channels;
  const bool big = s.width * s.height * s.kernel_w * s.kernel_h * cin * cout >= kMinParallelWork;
#pragma omp parallel for collapse(2) schedule(static) if (big)
  for (long x = 0; x < W; ++x) {
    for (long y = 0; y < H; ++y) {
      double* o = out.data() + static_cast<std::size_t>(x * H + y) * cout;
      for (std::size_t co = 0; co < cout; ++co) o[co] = bias[co];
      for (std::size_t dx = 0; dx < s.kernel_w; ++dx) {
        const long xx = x + static_cast<long>(dx) - pw;
        if (xx < 0 || xx >= W) continue;
        for (std::size_t dy = 0; dy < s.kernel_h; ++dy) {
          const long yy = y + static_cast<long>(dy) - ph;
          if (yy < 0 || yy >= H) continue;
          const double* in = input.data() + static_cast<std::size_t>(xx * H + yy) * cin;
          const double* kr = kernel.data() + (dx * s.kernel_h + dy) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double v = in[ci];
            const double* kc = kr + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) o[co] += v * kc[co];
          }
        }
      }
    }
  }
}

void conv2d_grad_input(std::span<const double> grad_out, std::span<const double> kernel,
                       std::span<double> grad_input, const ConvShape& s) {
  const long pw = static_cast<long>(s.kernel_w / 2);
  const long ph = static_cast<long>(s.kernel_h / 2);
  const long W = static_cast<long>(s.width);
  const long H = static_cast<long>(s.height);
  const std::size_t cin = s.in_channels;
  const std::size_t cout = s.out_channels;
  const bool big = s.width * s.height * s.kernel_w * s.kernel_h * cin * cout >= kMinParallelWork;
#pragma omp parallel for collapse(2) schedule(static) if (big)
  for (long xx = 0; xx < W; ++xx) {
    for (long yy = 0; yy < H; ++yy) {
      double* gi = grad_input.data() + static_cast<std::size_t>(xx * H + yy) * cin;
      for (std::size_t dx = 0; dx < s.kernel_w; ++dx) {
        const long x = xx + pw - static_cast<long>(dx);
        if (x < 0 || x >= W) continue;
        for (std::size_t dy = 0; dy < s.kernel_h; ++dy) {
          const long y = yy + ph - static_cast<long>(dy);
          if (y < 0 || y >= H) continue;
          const double* go = grad_out.data() + static_cast<std::size_t>(x * H + y) * cout;
          const double* kr = kernel.data() + (dx * s.kernel_h + dy) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* kc = kr + ci * cout;
            double acc = 0.0;
            for (std::size_t co = 0; co < cout; ++co) acc += go[co] * kc[co];
            gi[ci] += acc;
          }
        }
      }
    }
  }
}

void conv2d_grad_kernel(std::span<const double> input, std::span<const double> grad_out,
                        std::span<double> grad_kernel, const ConvShape& s) {
  const long pw = static_cast<long>(s.kernel_w / 2);
  const long ph = static_cast<long>(s.kernel_h / 2);
  const long W = static_cast<long>(s.width);
  const long H = static_cast<long>(s.height);
  const std::size_t cin = s.in_channels;
  const std::size_t cout = s.out_channels;
  const bool big = s.width * s.height * s.kernel_w * s.kernel_h * cin * cout >= kMinParallelWork;
  const long taps = static_cast<long>(s.kernel_w * s.kernel_h * cin);
#pragma omp parallel for schedule(static) if (big)
  for (long tap = 0; tap < taps; ++tap) {
    const std::size_t ci = static_cast<std::size_t>(tap) % cin;
    const std::size_t dxy = static_cast<std::size_t>(tap) / cin;
    const long dx = static_cast<long>(dxy / s.kernel_h);
    const long dy = static_cast<long>(dxy % s.kernel_h);
    double* gk = grad_kernel.data() + static_cast<std::size_t>(tap) * cout;
    for (long x = 0; x < W; ++x) {
      const long xx = x + dx - pw;
      if (xx < 0 || xx >= W) continue;
      for (long y = 0; y < H; ++y) {
        const long yy = y + dy - ph;
        if (yy < 0 || yy >= H) continue;
        const double v = input[static_cast<std::size_t>(xx * H + yy) * cin + ci];
        const double* go = grad_out.data() + static_cast<std::size_t>(x * H + y) * cout;
        for (std::size_t co = 0; co < cout; ++co) gk[co] += v * go[co];
      }
    }
  }
}

void conv2d_grad_bias(std::span<const double> grad_out, std::span<double> grad_bias,
                      const ConvShape& s) {
  const std::size_t positions = s.width * s.height;
  const long channels = static_cast<long>(s.out_channels);
#pragma omp parallel for schedule(static) if (positions * s.out_channels >= kMinParallelWork)
  for (long co = 0; co < channels; ++co) {
    double acc = grad_bias[static_cast<std::size_t>(co)];
    for (std::size_t p = 0; p < positions; ++p)
      acc += grad_out[p * s.out_channels + static_cast<std::size_t>(co)];
    grad_bias[static_cast<std::size_t>(co)] = acc;
  }
}

}  // namespace stefnet::kernels::parallel
