#include "modnet/kernels.hpp"

#include <algorithm>
#include <cstring>

// The `if` clauses keep tiny launches serial; desk-scale nets sit well below
// the thresholds while the benchmark sizes sit above them.

namespace modnet::kernels {

namespace {
// Arithmetic-heavy kernels parallelize above this many multiply-adds.
constexpr long kParallelCutoff = 1 << 13;
// Memory-bound elementwise kernels need far more work to amortize a region.
constexpr long kElemCutoff = 1 << 16;
}

void conv3x3_valid_forward(const double* x, int h, int w, int cin,
                           const double* wgt, const double* bias, int cout,
                           double* y) {
  const int oh = h - 2, ow = w - 2;
  const long total = static_cast<long>(oh) * ow;
#pragma omp parallel for schedule(static) if (total* cin* cout > kParallelCutoff)
  for (long p = 0; p < total; ++p) {
    const int r = static_cast<int>(p / ow);
    const int col = static_cast<int>(p % ow);
    double* yp = y + p * cout;
    for (int co = 0; co < cout; ++co) yp[co] = bias[co];
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* xp = x + (static_cast<long>(r + ky) * w + (col + kx)) * cin;
        const double* wp = wgt + (static_cast<long>(ky * 3 + kx) * cin) * cout;
        for (int ci = 0; ci < cin; ++ci) {
          const double xv = xp[ci];
          const double* wrow = wp + static_cast<long>(ci) * cout;
          for (int co = 0; co < cout; ++co) yp[co] += xv * wrow[co];
        }
      }
    }
  }
}

void conv3x3_valid_backward(const double* x, int h, int w, int cin,
                            const double* wgt, int cout, const double* dy,
                            double* dx, double* dwgt, double* dbias) {
  const int oh = h - 2, ow = w - 2;
  const long in_total = static_cast<long>(h) * w;
  const long out_total = static_cast<long>(oh) * ow;

  // Input gradient: gather over the output positions that read each pixel.
#pragma omp parallel for schedule(static) if (in_total* cin* cout > kParallelCutoff)
  for (long p = 0; p < in_total; ++p) {
    const int r = static_cast<int>(p / w);
    const int col = static_cast<int>(p % w);
    double* dxp = dx + p * cin;
    for (int ci = 0; ci < cin; ++ci) dxp[ci] = 0.0;
    for (int ky = 0; ky < 3; ++ky) {
      const int orow = r - ky;
      if (orow < 0 || orow >= oh) continue;
      for (int kx = 0; kx < 3; ++kx) {
        const int ocol = col - kx;
        if (ocol < 0 || ocol >= ow) continue;
        const double* dyp = dy + (static_cast<long>(orow) * ow + ocol) * cout;
        const double* wp = wgt + (static_cast<long>(ky * 3 + kx) * cin) * cout;
        for (int ci = 0; ci < cin; ++ci) {
          const double* wrow = wp + static_cast<long>(ci) * cout;
          double acc = 0.0;
          for (int co = 0; co < cout; ++co) acc += wrow[co] * dyp[co];
          dxp[ci] += acc;
        }
      }
    }
  }

  // Weight gradient: one gather per weight element.
  const long wn = 9L * cin * cout;
#pragma omp parallel for schedule(static) if (wn* out_total > kParallelCutoff)
  for (long widx = 0; widx < wn; ++widx) {
    const int co = static_cast<int>(widx % cout);
    const long rest = widx / cout;
    const int ci = static_cast<int>(rest % cin);
    const int k = static_cast<int>(rest / cin);
    const int ky = k / 3, kx = k % 3;
    double acc = 0.0;
    for (int r = 0; r < oh; ++r) {
      const double* xrow = x + (static_cast<long>(r + ky) * w + kx) * cin + ci;
      const double* dyrow = dy + static_cast<long>(r) * ow * cout + co;
      for (int col = 0; col < ow; ++col) {
        acc += xrow[static_cast<long>(col) * cin] * dyrow[static_cast<long>(col) * cout];
      }
    }
    dwgt[widx] += acc;
  }

#pragma omp parallel for schedule(static) if (static_cast<long>(cout) * out_total > kParallelCutoff)
  for (int co = 0; co < cout; ++co) {
    double acc = 0.0;
    for (long p = 0; p < out_total; ++p) acc += dy[p * cout + co];
    dbias[co] += acc;
  }
}

void conv3x3_same_forward(const double* x, int h, int w, int cin,
                          const double* wgt, const double* bias, int cout,
                          double* y) {
  const long total = static_cast<long>(h) * w;
#pragma omp parallel for schedule(static) if (total* cin* cout > kParallelCutoff)
  for (long p = 0; p < total; ++p) {
    const int r = static_cast<int>(p / w);
    const int col = static_cast<int>(p % w);
    double* yp = y + p * cout;
    for (int co = 0; co < cout; ++co) yp[co] = bias[co];
    for (int ky = 0; ky < 3; ++ky) {
      const int ir = r + ky - 1;
      if (ir < 0 || ir >= h) continue;
      for (int kx = 0; kx < 3; ++kx) {
        const int ic = col + kx - 1;
        if (ic < 0 || ic >= w) continue;
        const double* xp = x + (static_cast<long>(ir) * w + ic) * cin;
        const double* wp = wgt + (static_cast<long>(ky * 3 + kx) * cin) * cout;
        for (int ci = 0; ci < cin; ++ci) {
          const double xv = xp[ci];
          const double* wrow = wp + static_cast<long>(ci) * cout;
          for (int co = 0; co < cout; ++co) yp[co] += xv * wrow[co];
        }
      }
    }
  }
}

void conv3x3_same_backward(const double* x, int h, int w, int cin,
                           const double* wgt, int cout, const double* dy,
                           double* dx, double* dwgt, double* dbias) {
  const long total = static_cast<long>(h) * w;

#pragma omp parallel for schedule(static) if (total* cin* cout > kParallelCutoff)
  for (long p = 0; p < total; ++p) {
    const int r = static_cast<int>(p / w);
    const int col = static_cast<int>(p % w);
    double* dxp = dx + p * cin;
    for (int ci = 0; ci < cin; ++ci) dxp[ci] = 0.0;
    for (int ky = 0; ky < 3; ++ky) {
      const int orow = r - ky + 1;
      if (orow < 0 || orow >= h) continue;
      for (int kx = 0; kx < 3; ++kx) {
        const int ocol = col - kx + 1;
        if (ocol < 0 || ocol >= w) continue;
        const double* dyp = dy + (static_cast<long>(orow) * w + ocol) * cout;
        const double* wp = wgt + (static_cast<long>(ky * 3 + kx) * cin) * cout;
        for (int ci = 0; ci < cin; ++ci) {
          const double* wrow = wp + static_cast<long>(ci) * cout;
          double acc = 0.0;
          for (int co = 0; co < cout; ++co) acc += wrow[co] * dyp[co];
          dxp[ci] += acc;
        }
      }
    }
  }

  const long wn = 9L * cin * cout;
#pragma omp parallel for schedule(static) if (wn* total > kParallelCutoff)
  for (long widx = 0; widx < wn; ++widx) {
    const int co = static_cast<int>(widx % cout);
    const long rest = widx / cout;
    const int ci = static_cast<int>(rest % cin);
    const int k = static_cast<int>(rest / cin);
    const int ky = k / 3, kx = k % 3;
    double acc = 0.0;
    for (int r = 0; r < h; ++r) {
      const int ir = r + ky - 1;
      if (ir < 0 || ir >= h) continue;
      for (int col = 0; col < w; ++col) {
        const int ic = col + kx - 1;
        if (ic < 0 || ic >= w) continue;
        acc += x[(static_cast<long>(ir) * w + ic) * cin + ci] *
               dy[(static_cast<long>(r) * w + col) * cout + co];
      }
    }
    dwgt[widx] += acc;
  }

#pragma omp parallel for schedule(static) if (static_cast<long>(cout) * total > kParallelCutoff)
  for (int co = 0; co < cout; ++co) {
    double acc = 0.0;
    for (long p = 0; p < total; ++p) acc += dy[p * cout + co];
    dbias[co] += acc;
  }
}

void relu_forward(const double* x, size_t n, double* y) {
  const long nn = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (nn > kElemCutoff)
  for (long i = 0; i < nn; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* y, const double* dy, size_t n, double* dx) {
  const long nn = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (nn > kElemCutoff)
  for (long i = 0; i < nn; ++i) dx[i] = y[i] > 0.0 ? dy[i] : 0.0;
}

void maxpool2_forward(const double* x, int h, int w, int c, double* y,
                      int* argmax) {
  const int oh = h / 2, ow = w / 2;
  const long total = static_cast<long>(oh) * ow * c;
#pragma omp parallel for schedule(static) if (total > kElemCutoff)
  for (long o = 0; o < total; ++o) {
    const int ch = static_cast<int>(o % c);
    const long p = o / c;
    const int r = static_cast<int>(p / ow);
    const int col = static_cast<int>(p % ow);
    long best = (static_cast<long>(2 * r) * w + 2 * col) * c + ch;
    double bv = x[best];
    for (int dyy = 0; dyy < 2; ++dyy) {
      for (int dxx = 0; dxx < 2; ++dxx) {
        const long idx = (static_cast<long>(2 * r + dyy) * w + (2 * col + dxx)) * c + ch;
        if (x[idx] > bv) {
          bv = x[idx];
          best = idx;
        }
      }
    }
    y[o] = bv;
    argmax[o] = static_cast<int>(best);
  }
}

void maxpool2_backward(const int* argmax, const double* dy, size_t out_n,
                       size_t in_n, double* dx) {
  std::memset(dx, 0, in_n * sizeof(double));
  const long nn = static_cast<long>(out_n);
#pragma omp parallel for schedule(static) if (nn > kElemCutoff)
  for (long o = 0; o < nn; ++o) dx[argmax[o]] = dy[o];
}

void fc_forward(const double* x, int in_dim, const double* wgt,
                const double* bias, int out_dim, double* y) {
#pragma omp parallel for schedule(static) if (static_cast<long>(in_dim) * out_dim > kParallelCutoff)
  for (int o = 0; o < out_dim; ++o) {
    const double* wrow = wgt + static_cast<long>(o) * in_dim;
    double acc = bias[o];
    for (int i = 0; i < in_dim; ++i) acc += wrow[i] * x[i];
    y[o] = acc;
  }
}

void fc_backward(const double* x, int in_dim, const double* wgt, int out_dim,
                 const double* dy, double* dx, double* dwgt, double* dbias) {
#pragma omp parallel for schedule(static) if (static_cast<long>(in_dim) * out_dim > kParallelCutoff)
  for (int i = 0; i < in_dim; ++i) {
    double acc = 0.0;
    for (int o = 0; o < out_dim; ++o) acc += wgt[static_cast<long>(o) * in_dim + i] * dy[o];
    dx[i] = acc;
  }
#pragma omp parallel for schedule(static) if (static_cast<long>(in_dim) * out_dim > kParallelCutoff)
  for (int o = 0; o < out_dim; ++o) {
    const double g = dy[o];
    double* wrow = dwgt + static_cast<long>(o) * in_dim;
    for (int i = 0; i < in_dim; ++i) wrow[i] += g * x[i];
    dbias[o] += g;
  }
}

void scale_channels_forward(const double* x, int hw, int c, const double* wv,
                            double* y) {
  const long total = static_cast<long>(hw) * c;
#pragma omp parallel for schedule(static) if (total > kElemCutoff)
  for (long i = 0; i < total; ++i) y[i] = x[i] * wv[i % c];
}

void scale_channels_backward(const double* x, const double* wv, int hw, int c,
                             const double* dy, double* dx, double* dw) {
  const long total = static_cast<long>(hw) * c;
#pragma omp parallel for schedule(static) if (total > kElemCutoff)
  for (long i = 0; i < total; ++i) dx[i] = dy[i] * wv[i % c];
#pragma omp parallel for schedule(static) if (total > kElemCutoff)
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (int p = 0; p < hw; ++p) {
      const long i = static_cast<long>(p) * c + ch;
      acc += x[i] * dy[i];
    }
    dw[ch] += acc;
  }
}

void project_channels_forward(const double* x, int hw, int c, const double* wm,
                              double* y) {
  const long total = static_cast<long>(hw);
#pragma omp parallel for schedule(static) if (total* c* c > kParallelCutoff)
  for (long p = 0; p < total; ++p) {
    const double* xp = x + p * c;
    double* yp = y + p * c;
    for (int i = 0; i < c; ++i) {
      const double* wrow = wm + static_cast<long>(i) * c;
      double acc = 0.0;
      for (int j = 0; j < c; ++j) acc += xp[j] * wrow[j];
      yp[i] = acc;
    }
  }
}

void project_channels_backward(const double* x, const double* wm, int hw,
                               int c, const double* dy, double* dx,
                               double* dwm) {
  const long total = static_cast<long>(hw);
#pragma omp parallel for schedule(static) if (total* c* c > kParallelCutoff)
  for (long p = 0; p < total; ++p) {
    const double* dyp = dy + p * c;
    double* dxp = dx + p * c;
    for (int j = 0; j < c; ++j) {
      double acc = 0.0;
      for (int i = 0; i < c; ++i) acc += dyp[i] * wm[static_cast<long>(i) * c + j];
      dxp[j] = acc;
    }
  }
#pragma omp parallel for schedule(static) if (static_cast<long>(c) * c * total > kParallelCutoff)
  for (long widx = 0; widx < static_cast<long>(c) * c; ++widx) {
    const int i = static_cast<int>(widx / c);
    const int j = static_cast<int>(widx % c);
    double acc = 0.0;
    for (long p = 0; p < total; ++p) acc += dy[p * c + i] * x[p * c + j];
    dwm[widx] += acc;
  }
}

}  // namespace modnet::kernels
