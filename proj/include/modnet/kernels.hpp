#pragma once

#include <cstddef>

// Data-parallel layer arithmetic. Layouts:
//   feature map x:  [h][w][c]            flat (r*w + col)*c + ch
//   conv weight:    [3][3][cin][cout]    flat ((ky*3 + kx)*cin + ci)*cout + co
//   fc weight:      [out][in]            flat o*in + i
//   channel matrix: [cout][cin]          flat i*c + j
//
// Every kernel computes each output element as an independent gather with a
// fixed inner accumulation order, so results are bit-identical regardless of
// thread count and match the serial reference implementation exactly.
// Gradient outputs: dx buffers are overwritten, parameter gradients (dw, db)
// are accumulated with +=.

namespace modnet::kernels {

void conv3x3_valid_forward(const double* x, int h, int w, int cin,
                           const double* wgt, const double* bias, int cout,
                           double* y);
void conv3x3_valid_backward(const double* x, int h, int w, int cin,
                            const double* wgt, int cout, const double* dy,
                            double* dx, double* dwgt, double* dbias);

// Zero padding of 1 on each border; output spatial size equals input.
void conv3x3_same_forward(const double* x, int h, int w, int cin,
                          const double* wgt, const double* bias, int cout,
                          double* y);
void conv3x3_same_backward(const double* x, int h, int w, int cin,
                           const double* wgt, int cout, const double* dy,
                           double* dx, double* dwgt, double* dbias);

void relu_forward(const double* x, size_t n, double* y);
// Mask taken from the forward output y (y > 0).
void relu_backward(const double* y, const double* dy, size_t n, double* dx);

// 2x2 max pooling with stride 2; trailing row/column dropped on odd extents.
// argmax receives, per output element, the flat index of the winning input.
void maxpool2_forward(const double* x, int h, int w, int c, double* y,
                      int* argmax);
// Pooling windows are disjoint, so the scatter is race-free.
void maxpool2_backward(const int* argmax, const double* dy, size_t out_n,
                       size_t in_n, double* dx);

void fc_forward(const double* x, int in_dim, const double* wgt,
                const double* bias, int out_dim, double* y);
void fc_backward(const double* x, int in_dim, const double* wgt, int out_dim,
                 const double* dy, double* dx, double* dwgt, double* dbias);

// Per-channel scaling: y[p][ch] = x[p][ch] * wv[ch] over hw pixels.
void scale_channels_forward(const double* x, int hw, int c, const double* wv,
                            double* y);
void scale_channels_backward(const double* x, const double* wv, int hw, int c,
                             const double* dy, double* dx, double* dw);

// Per-pixel channel mixing: y[p][i] = sum_j x[p][j] * wm[i][j].
void project_channels_forward(const double* x, int hw, int c, const double* wm,
                              double* y);
void project_channels_backward(const double* x, const double* wm, int hw,
                               int c, const double* dy, double* dx,
                               double* dwm);

}  // namespace modnet::kernels
