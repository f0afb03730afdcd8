#include <algorithm>

#include "phnn/kernels.hpp"

// Serial reference path. Written with the opposite structure to the
// production kernels (scatter over outputs instead of gather per element)
// so the two routes cross-check each other in the parity tests.

namespace phnn::ref {

namespace {

inline long long idx4(int a, int b, int c, int d, int eb, int ec, int ed) {
  return ((static_cast<long long>(a) * eb + b) * ec + c) * ed + d;
}

inline double src_pos(int o, int in_extent, int out_extent) {
  if (out_extent == 1) return 0.0;
  return static_cast<double>(o) * (in_extent - 1) / (out_extent - 1);
}

}  // namespace

void conv2d_forward(const double* x, const double* weight, const double* bias, double* y,
                    const Conv2dDims& d) {
  for (int b = 0; b < d.batch; ++b) {
    for (int oc = 0; oc < d.cout; ++oc) {
      for (int oh = 0; oh < d.oh; ++oh) {
        for (int ow = 0; ow < d.ow; ++ow) {
          double acc = bias ? bias[oc] : 0.0;
          for (int kh = 0; kh < d.k; ++kh) {
            const int ih = oh * d.stride - d.pad + kh;
            if (ih < 0 || ih >= d.h) continue;
            for (int kw = 0; kw < d.k; ++kw) {
              const int iw = ow * d.stride - d.pad + kw;
              if (iw < 0 || iw >= d.w) continue;
              for (int ic = 0; ic < d.cin; ++ic) {
                acc += x[idx4(b, ic, ih, iw, d.cin, d.h, d.w)] *
                       weight[idx4(oc, ic, kh, kw, d.cin, d.k, d.k)];
              }
            }
          }
          y[idx4(b, oc, oh, ow, d.cout, d.oh, d.ow)] = acc;
        }
      }
    }
  }
}

void conv2d_backward(const double* x, const double* weight, const double* gy, double* gx,
                     double* gw, double* gb, const Conv2dDims& d) {
  for (int b = 0; b < d.batch; ++b) {
    for (int oc = 0; oc < d.cout; ++oc) {
      for (int oh = 0; oh < d.oh; ++oh) {
        for (int ow = 0; ow < d.ow; ++ow) {
          const double g = gy[idx4(b, oc, oh, ow, d.cout, d.oh, d.ow)];
          if (gb) gb[oc] += g;
          for (int kh = 0; kh < d.k; ++kh) {
            const int ih = oh * d.stride - d.pad + kh;
            if (ih < 0 || ih >= d.h) continue;
            for (int kw = 0; kw < d.k; ++kw) {
              const int iw = ow * d.stride - d.pad + kw;
              if (iw < 0 || iw >= d.w) continue;
              for (int ic = 0; ic < d.cin; ++ic) {
                const long long xi = idx4(b, ic, ih, iw, d.cin, d.h, d.w);
                const long long wi = idx4(oc, ic, kh, kw, d.cin, d.k, d.k);
                if (gw) gw[wi] += x[xi] * g;
                if (gx) gx[xi] += weight[wi] * g;
              }
            }
          }
        }
      }
    }
  }
}

void maxpool_forward(const double* x, double* y, int* argmax, const Pool2dDims& d) {
  for (int b = 0; b < d.batch; ++b) {
    for (int c = 0; c < d.channels; ++c) {
      for (int oh = 0; oh < d.oh; ++oh) {
        for (int ow = 0; ow < d.ow; ++ow) {
          int best = -1;
          double best_v = 0.0;
          for (int kh = 0; kh < d.k; ++kh) {
            for (int kw = 0; kw < d.k; ++kw) {
              const int ih = oh * d.stride + kh;
              const int iw = ow * d.stride + kw;
              const double v = x[idx4(b, c, ih, iw, d.channels, d.h, d.w)];
              if (best < 0 || v > best_v) {
                best_v = v;
                best = ih * d.w + iw;
              }
            }
          }
          const long long o = idx4(b, c, oh, ow, d.channels, d.oh, d.ow);
          y[o] = best_v;
          argmax[o] = best;
        }
      }
    }
  }
}

void maxpool_backward(const double* gy, const int* argmax, double* gx, const Pool2dDims& d) {
  for (int b = 0; b < d.batch; ++b) {
    for (int c = 0; c < d.channels; ++c) {
      for (int oh = 0; oh < d.oh; ++oh) {
        for (int ow = 0; ow < d.ow; ++ow) {
          const long long o = idx4(b, c, oh, ow, d.channels, d.oh, d.ow);
          gx[idx4(b, c, 0, 0, d.channels, d.h, d.w) + argmax[o]] += gy[o];
        }
      }
    }
  }
}

void upsample_bilinear_forward(const double* x, double* y, const UpsampleDims& d) {
  for (int b = 0; b < d.batch; ++b) {
    for (int c = 0; c < d.channels; ++c) {
      for (int oh = 0; oh < d.oh; ++oh) {
        for (int ow = 0; ow < d.ow; ++ow) {
          const double sh = src_pos(oh, d.h, d.oh);
          const double sw = src_pos(ow, d.w, d.ow);
          const int h0 = static_cast<int>(sh);
          const int w0 = static_cast<int>(sw);
          const int h1 = std::min(h0 + 1, d.h - 1);
          const int w1 = std::min(w0 + 1, d.w - 1);
          const double fh = sh - h0;
          const double fw = sw - w0;
          y[idx4(b, c, oh, ow, d.channels, d.oh, d.ow)] =
              (1.0 - fh) * (1.0 - fw) * x[idx4(b, c, h0, w0, d.channels, d.h, d.w)] +
              (1.0 - fh) * fw * x[idx4(b, c, h0, w1, d.channels, d.h, d.w)] +
              fh * (1.0 - fw) * x[idx4(b, c, h1, w0, d.channels, d.h, d.w)] +
              fh * fw * x[idx4(b, c, h1, w1, d.channels, d.h, d.w)];
        }
      }
    }
  }
}

void upsample_bilinear_backward(const double* gy, double* gx, const UpsampleDims& d) {
  for (int b = 0; b < d.batch; ++b) {
    for (int c = 0; c < d.channels; ++c) {
      for (int oh = 0; oh < d.oh; ++oh) {
        for (int ow = 0; ow < d.ow; ++ow) {
          const double sh = src_pos(oh, d.h, d.oh);
          const double sw = src_pos(ow, d.w, d.ow);
          const int h0 = static_cast<int>(sh);
          const int w0 = static_cast<int>(sw);
          const int h1 = std::min(h0 + 1, d.h - 1);
          const int w1 = std::min(w0 + 1, d.w - 1);
          const double fh = sh - h0;
          const double fw = sw - w0;
          const double g = gy[idx4(b, c, oh, ow, d.channels, d.oh, d.ow)];
          gx[idx4(b, c, h0, w0, d.channels, d.h, d.w)] += (1.0 - fh) * (1.0 - fw) * g;
          gx[idx4(b, c, h0, w1, d.channels, d.h, d.w)] += (1.0 - fh) * fw * g;
          gx[idx4(b, c, h1, w0, d.channels, d.h, d.w)] += fh * (1.0 - fw) * g;
          gx[idx4(b, c, h1, w1, d.channels, d.h, d.w)] += fh * fw * g;
        }
      }
    }
  }
}

}  // namespace phnn::ref
