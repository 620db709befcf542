#include "stefnet/kernels.hpp"

namespace stefnet::kernels::serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) row[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
}

void matmul_grad_a(std::span<const double> grad_out, std::span<const double> b,
                   std::span<double> grad_a, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* g = grad_out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b.data() + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += g[j] * brow[j];
      grad_a[i * k + p] += s;
    }
  }
}

void matmul_grad_b(std::span<const double> a, std::span<const double> grad_out,
                   std::span<double> grad_b, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    double* gb = grad_b.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double aip = a[i * k + p];
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
  for (std::size_t dx = 0; dx < s.kernel_w; ++dx) {
    for (std::size_t dy = 0; dy < s.kernel_h; ++dy) {
      for (std::size_t ci = 0; ci < cin; ++ci) {
        double* gk = grad_kernel.data() + ((dx * s.kernel_h + dy) * cin + ci) * cout;
        for (long x = 0; x < W; ++x) {
          const long xx = x + static_cast<long>(dx) - pw;
          if (xx < 0 || xx >= W) continue;
          for (long y = 0; y < H; ++y) {
            const long yy = y + static_cast<long>(dy) - ph;
            if (yy < 0 || yy >= H) continue;
            const double v = input[static_cast<std::size_t>(xx * H + yy) * cin + ci];
            const double* go = grad_out.data() + static_cast<std::size_t>(x * H + y) * cout;
            for (std::size_t co = 0; co < cout; ++co) gk[co] += v * go[co];
          }
        }
      }
    }
  }
}

void conv2d_grad_bias(std::span<const double> grad_out, std::span<double> grad_bias,
                      const ConvShape& s) {
  const std::size_t positions = s.width * s.height;
  for (std::size_t p = 0; p < positions; ++p) {
    const double* go = grad_out.data() + p * s.out_channels;
    for (std::size_t co = 0; co < s.out_channels; ++co) grad_bias[co] += go[co];
  }
}

}  // namespace stefnet::kernels::serial
