#pragma once

// Dense NCHW f64 kernels. Two implementations share these signatures:
//
//   phnn::kernels  - OpenMP-parallel production path. Every output element
//                    is produced by exactly one iteration with a fixed
//                    sequential reduction order, so results are
//                    bit-identical for any thread count.
//   phnn::ref      - plain serial loops with scatter-style backward,
//                    kept as an independent reference for tests and the
//                    benchmark. Never called from the production ops.
//
// Gradient buffers are accumulated into (callers zero them).

namespace phnn {

struct Conv2dDims {
  int batch, cin, h, w;
  int cout, k, stride, pad;
  int oh, ow;
};

struct Pool2dDims {
  int batch, channels, h, w;
  int k, stride;
  int oh, ow;
};

struct UpsampleDims {
  int batch, channels, h, w;
  int oh, ow;
};

namespace kernels {

void conv2d_forward(const double* x, const double* weight, const double* bias, double* y,
                    const Conv2dDims& d);
void conv2d_grad_input(const double* weight, const double* gy, double* gx, const Conv2dDims& d);
void conv2d_grad_weight(const double* x, const double* gy, double* gw, const Conv2dDims& d);
void conv2d_grad_bias(const double* gy, double* gb, const Conv2dDims& d);

// argmax holds, per output element, the flat (h*w) index of the selected
// input cell inside its (b, c) plane. Ties go to the first cell in
// row-major order.
void maxpool_forward(const double* x, double* y, int* argmax, const Pool2dDims& d);
void maxpool_backward(const double* gy, const int* argmax, double* gx, const Pool2dDims& d);

// Align-corners bilinear interpolation, fixed weights.
void upsample_bilinear_forward(const double* x, double* y, const UpsampleDims& d);
void upsample_bilinear_backward(const double* gy, double* gx, const UpsampleDims& d);

}  // namespace kernels

namespace ref {

void conv2d_forward(const double* x, const double* weight, const double* bias, double* y,
                    const Conv2dDims& d);
// Scatter-style: one pass over output elements accumulating all three grads.
void conv2d_backward(const double* x, const double* weight, const double* gy, double* gx,
                     double* gw, double* gb, const Conv2dDims& d);

void maxpool_forward(const double* x, double* y, int* argmax, const Pool2dDims& d);
void maxpool_backward(const double* gy, const int* argmax, double* gx, const Pool2dDims& d);

void upsample_bilinear_forward(const double* x, double* y, const UpsampleDims& d);
void upsample_bilinear_backward(const double* gy, double* gx, const UpsampleDims& d);

}  // namespace ref

}  // namespace phnn
