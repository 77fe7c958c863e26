#include "reference_kernels.hpp"

namespace modnet::refk {

static long fm(int w, int c, int r, int col, int ch) {
  return (static_cast<long>(r) * w + col) * c + ch;
}

static long cw(int cin, int cout, int ky, int kx, int ci, int co) {
  return ((static_cast<long>(ky) * 3 + kx) * cin + ci) * cout + co;
}

void conv3x3_valid_forward(const double* x, int h, int w, int cin,
                           const double* wgt, const double* bias, int cout,
                           double* y) {
  const int oh = h - 2, ow = w - 2;
  for (int r = 0; r < oh; ++r) {
    for (int col = 0; col < ow; ++col) {
      for (int co = 0; co < cout; ++co) {
        double acc = bias[co];
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            for (int ci = 0; ci < cin; ++ci) {
              acc += x[fm(w, cin, r + ky, col + kx, ci)] * wgt[cw(cin, cout, ky, kx, ci, co)];
            }
          }
        }
        y[fm(ow, cout, r, col, co)] = acc;
      }
    }
  }
}

void conv3x3_valid_backward(const double* x, int h, int w, int cin,
                            const double* wgt, int cout, const double* dy,
                            double* dx, double* dwgt, double* dbias) {
  const int oh = h - 2, ow = w - 2;
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < w; ++col) {
      for (int ci = 0; ci < cin; ++ci) dx[fm(w, cin, r, col, ci)] = 0.0;
      for (int ky = 0; ky < 3; ++ky) {
        const int orow = r - ky;
        if (orow < 0 || orow >= oh) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ocol = col - kx;
          if (ocol < 0 || ocol >= ow) continue;
          for (int ci = 0; ci < cin; ++ci) {
            double acc = 0.0;
            for (int co = 0; co < cout; ++co) {
              acc += wgt[cw(cin, cout, ky, kx, ci, co)] * dy[fm(ow, cout, orow, ocol, co)];
            }
            dx[fm(w, cin, r, col, ci)] += acc;
          }
        }
      }
    }
  }
  for (int ky = 0; ky < 3; ++ky) {
    for (int kx = 0; kx < 3; ++kx) {
      for (int ci = 0; ci < cin; ++ci) {
        for (int co = 0; co < cout; ++co) {
          double acc = 0.0;
          for (int r = 0; r < oh; ++r) {
            for (int col = 0; col < ow; ++col) {
              acc += x[fm(w, cin, r + ky, col + kx, ci)] * dy[fm(ow, cout, r, col, co)];
            }
          }
          dwgt[cw(cin, cout, ky, kx, ci, co)] += acc;
        }
      }
    }
  }
  for (int co = 0; co < cout; ++co) {
    double acc = 0.0;
    for (int r = 0; r < oh; ++r) {
      for (int col = 0; col < ow; ++col) acc += dy[fm(ow, cout, r, col, co)];
    }
    dbias[co] += acc;
  }
}

void conv3x3_same_forward(const double* x, int h, int w, int cin,
                          const double* wgt, const double* bias, int cout,
                          double* y) {
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < w; ++col) {
      for (int co = 0; co < cout; ++co) {
        double acc = bias[co];
        for (int ky = 0; ky < 3; ++ky) {
          const int ir = r + ky - 1;
          if (ir < 0 || ir >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ic = col + kx - 1;
            if (ic < 0 || ic >= w) continue;
            for (int ci = 0; ci < cin; ++ci) {
              acc += x[fm(w, cin, ir, ic, ci)] * wgt[cw(cin, cout, ky, kx, ci, co)];
            }
          }
        }
        y[fm(w, cout, r, col, co)] = acc;
      }
    }
  }
}

void conv3x3_same_backward(const double* x, int h, int w, int cin,
                           const double* wgt, int cout, const double* dy,
                           double* dx, double* dwgt, double* dbias) {
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < w; ++col) {
      for (int ci = 0; ci < cin; ++ci) dx[fm(w, cin, r, col, ci)] = 0.0;
      for (int ky = 0; ky < 3; ++ky) {
        const int orow = r - ky + 1;
        if (orow < 0 || orow >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ocol = col - kx + 1;
          if (ocol < 0 || ocol >= w) continue;
          for (int ci = 0; ci < cin; ++ci) {
            double acc = 0.0;
            for (int co = 0; co < cout; ++co) {
              acc += wgt[cw(cin, cout, ky, kx, ci, co)] * dy[fm(w, cout, orow, ocol, co)];
            }
            dx[fm(w, cin, r, col, ci)] += acc;
          }
        }
      }
    }
  }
  for (int ky = 0; ky < 3; ++ky) {
    for (int kx = 0; kx < 3; ++kx) {
      for (int ci = 0; ci < cin; ++ci) {
        for (int co = 0; co < cout; ++co) {
          double acc = 0.0;
          for (int r = 0; r < h; ++r) {
            const int ir = r + ky - 1;
            if (ir < 0 || ir >= h) continue;
            for (int col = 0; col < w; ++col) {
              const int ic = col + kx - 1;
              if (ic < 0 || ic >= w) continue;
              acc += x[fm(w, cin, ir, ic, ci)] * dy[fm(w, cout, r, col, co)];
            }
          }
          dwgt[cw(cin, cout, ky, kx, ci, co)] += acc;
        }
      }
    }
  }
  for (int co = 0; co < cout; ++co) {
    double acc = 0.0;
    for (int r = 0; r < h; ++r) {
      for (int col = 0; col < w; ++col) acc += dy[fm(w, cout, r, col, co)];
    }
    dbias[co] += acc;
  }
}

void relu_forward(const double* x, size_t n, double* y) {
  for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* y, const double* dy, size_t n, double* dx) {
  for (size_t i = 0; i < n; ++i) dx[i] = y[i] > 0.0 ? dy[i] : 0.0;
}

void maxpool2_forward(const double* x, int h, int w, int c, double* y,
                      int* argmax) {
  const int oh = h / 2, ow = w / 2;
  for (int r = 0; r < oh; ++r) {
    for (int col = 0; col < ow; ++col) {
      for (int ch = 0; ch < c; ++ch) {
        long best = fm(w, c, 2 * r, 2 * col, ch);
        double bv = x[best];
        for (int dyy = 0; dyy < 2; ++dyy) {
          for (int dxx = 0; dxx < 2; ++dxx) {
            const long idx = fm(w, c, 2 * r + dyy, 2 * col + dxx, ch);
            if (x[idx] > bv) {
              bv = x[idx];
              best = idx;
            }
          }
        }
        const long o = fm(ow, c, r, col, ch);
        y[o] = bv;
        argmax[o] = static_cast<int>(best);
      }
    }
  }
}

void maxpool2_backward(const int* argmax, const double* dy, size_t out_n,
                       size_t in_n, double* dx) {
  for (size_t i = 0; i < in_n; ++i) dx[i] = 0.0;
  for (size_t o = 0; o < out_n; ++o) dx[argmax[o]] = dy[o];
}

void fc_forward(const double* x, int in_dim, const double* wgt,
                const double* bias, int out_dim, double* y) {
  for (int o = 0; o < out_dim; ++o) {
    double acc = bias[o];
    for (int i = 0; i < in_dim; ++i) acc += wgt[static_cast<long>(o) * in_dim + i] * x[i];
    y[o] = acc;
  }
}

void fc_backward(const double* x, int in_dim, const double* wgt, int out_dim,
                 const double* dy, double* dx, double* dwgt, double* dbias) {
  for (int i = 0; i < in_dim; ++i) {
    double acc = 0.0;
    for (int o = 0; o < out_dim; ++o) acc += wgt[static_cast<long>(o) * in_dim + i] * dy[o];
    dx[i] = acc;
  }
  for (int o = 0; o < out_dim; ++o) {
    for (int i = 0; i < in_dim; ++i) dwgt[static_cast<long>(o) * in_dim + i] += dy[o] * x[i];
    dbias[o] += dy[o];
  }
}

void scale_channels_forward(const double* x, int hw, int c, const double* wv,
                            double* y) {
  for (int p = 0; p < hw; ++p) {
    for (int ch = 0; ch < c; ++ch) {
      y[static_cast<long>(p) * c + ch] = x[static_cast<long>(p) * c + ch] * wv[ch];
    }
  }
}

void scale_channels_backward(const double* x, const double* wv, int hw, int c,
                             const double* dy, double* dx, double* dw) {
  for (int p = 0; p < hw; ++p) {
    for (int ch = 0; ch < c; ++ch) {
      dx[static_cast<long>(p) * c + ch] = dy[static_cast<long>(p) * c + ch] * wv[ch];
    }
  }
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (int p = 0; p < hw; ++p) {
      acc += x[static_cast<long>(p) * c + ch] * dy[static_cast<long>(p) * c + ch];
    }
    dw[ch] += acc;
  }
}

void project_channels_forward(const double* x, int hw, int c, const double* wm,
                              double* y) {
  for (int p = 0; p < hw; ++p) {
    for (int i = 0; i < c; ++i) {
      double acc = 0.0;
      for (int j = 0; j < c; ++j) {
        acc += x[static_cast<long>(p) * c + j] * wm[static_cast<long>(i) * c + j];
      }
      y[static_cast<long>(p) * c + i] = acc;
    }
  }
}

void project_channels_backward(const double* x, const double* wm, int hw,
                               int c, const double* dy, double* dx,
                               double* dwm) {
  for (int p = 0; p < hw; ++p) {
    for (int j = 0; j < c; ++j) {
      double acc = 0.0;
      for (int i = 0; i < c; ++i) {
        acc += dy[static_cast<long>(p) * c + i] * wm[static_cast<long>(i) * c + j];
      }
      dx[static_cast<long>(p) * c + j] = acc;
    }
  }
  for (int i = 0; i < c; ++i) {
    for (int j = 0; j < c; ++j) {
      double acc = 0.0;
      for (int p = 0; p < hw; ++p) {
        acc += dy[static_cast<long>(p) * c + i] * x[static_cast<long>(p) * c + j];
      }
      dwm[static_cast<long>(i) * c + j] += acc;
    }
  }
}

}  // namespace modnet::refk
