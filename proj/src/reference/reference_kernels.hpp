#pragma once

#include <cstddef>

// Straight-line serial re-implementation of the layer arithmetic in
// modnet/kernels.hpp. Kept deliberately naive and free of any shared helpers
// with the production kernels: tests use it as an independent oracle and the
// benchmark uses it as the single-thread baseline. Per-element accumulation
// order matches the production kernels, so agreement is exact, not
// approximate.

namespace modnet::refk {

void conv3x3_valid_forward(const double* x, int h, int w, int cin,
                           const double* wgt, const double* bias, int cout,
                           double* y);
void conv3x3_valid_backward(const double* x, int h, int w, int cin,
                            const double* wgt, int cout, const double* dy,
                            double* dx, double* dwgt, double* dbias);
void conv3x3_same_forward(const double* x, int h, int w, int cin,
                          const double* wgt, const double* bias, int cout,
                          double* y);
void conv3x3_same_backward(const double* x, int h, int w, int cin,
                           const double* wgt, int cout, const double* dy,
                           double* dx, double* dwgt, double* dbias);
void relu_forward(const double* x, size_t n, double* y);
void relu_backward(const double* y, const double* dy, size_t n, double* dx);
void maxpool2_forward(const double* x, int h, int w, int c, double* y,
                      int* argmax);
void maxpool2_backward(const int* argmax, const double* dy, size_t out_n,
                       size_t in_n, double* dx);
void fc_forward(const double* x, int in_dim, const double* wgt,
                const double* bias, int out_dim, double* y);
void fc_backward(const double* x, int in_dim, const double* wgt, int out_dim,
                 const double* dy, double* dx, double* dwgt, double* dbias);
void scale_channels_forward(const double* x, int hw, int c, const double* wv,
                            double* y);
void scale_channels_backward(const double* x, const double* wv, int hw, int c,
                             const double* dy, double* dx, double* dw);
void project_channels_forward(const double* x, int hw, int c, const double* wm,
                              double* y);
void project_channels_backward(const double* x, const double* wm, int hw,
                               int c, const double* dy, double* dx,
                               double* dwm);

}  // namespace modnet::refk
