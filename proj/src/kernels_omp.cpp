#include <algorithm>

#include "phnn/kernels.hpp"
#include "phnn/threads.hpp"

namespace phnn::kernels {

namespace {

inline long long idx4(int a, int b, int c, int d, int eb, int ec, int ed) {
  return ((static_cast<long long>(a) * eb + b) * ec + c) * ed + d;
}

// Align-corners source position for output index o.
inline double src_pos(int o, int in_extent, int out_extent) {
  if (out_extent == 1) return 0.0;
  return static_cast<double>(o) * (in_extent - 1) / (out_extent - 1);
}

}  // namespace

void conv2d_forward(const double* x, const double* weight, const double* bias, double* y,
                    const Conv2dDims& d) {
  const int nth = thread_count();
#pragma omp parallel for collapse(3) schedule(static) num_threads(nth) if (nth > 1)
  for (int b = 0; b < d.batch; ++b) {
    for (int oc = 0; oc < d.cout; ++oc) {
      for (int oh = 0; oh < d.oh; ++oh) {
        for (int ow = 0; ow < d.ow; ++ow) {
          double acc = bias ? bias[oc] : 0.0;
          const int ih0 = oh * d.stride - d.pad;
          const int iw0 = ow * d.stride - d.pad;
          for (int ic = 0; ic < d.cin; ++ic) {
            const double* xp = x + idx4(b, ic, 0, 0, d.cin, d.h, d.w);
            const double* wp = weight + idx4(oc, ic, 0, 0, d.cin, d.k, d.k);
            for (int kh = 0; kh < d.k; ++kh) {
              const int ih = ih0 + kh;
              if (ih < 0 || ih >= d.h) continue;
              for (int kw = 0; kw < d.k; ++kw) {
                const int iw = iw0 + kw;
                if (iw < 0 || iw >= d.w) continue;
                acc += xp[static_cast<long long>(ih) * d.w + iw] * wp[kh * d.k + kw];
              }
            }
          }
          y[idx4(b, oc, oh, ow, d.cout, d.oh, d.ow)] = acc;
        }
      }
    }
  }
}

void conv2d_grad_input(const double* weight, const double* gy, double* gx, const Conv2dDims& d) {
  const int nth = thread_count();
  // Gather per input element: iterate the output positions whose window
  // covers (ih, iw), in a fixed order.
#pragma omp parallel for collapse(3) schedule(static) num_threads(nth) if (nth > 1)
  for (int b = 0; b < d.batch; ++b) {
    for (int ic = 0; ic < d.cin; ++ic) {
      for (int ih = 0; ih < d.h; ++ih) {
        for (int iw = 0; iw < d.w; ++iw) {
          double acc = 0.0;
          for (int oc = 0; oc < d.cout; ++oc) {
            const double* wp = weight + idx4(oc, ic, 0, 0, d.cin, d.k, d.k);
            const double* gp = gy + idx4(b, oc, 0, 0, d.cout, d.oh, d.ow);
            for (int kh = 0; kh < d.k; ++kh) {
              const int num_h = ih + d.pad - kh;
              if (num_h < 0 || num_h % d.stride != 0) continue;
              const int oh = num_h / d.stride;
              if (oh >= d.oh) continue;
              for (int kw = 0; kw < d.k; ++kw) {
                const int num_w = iw + d.pad - kw;
                if (num_w < 0 || num_w % d.stride != 0) continue;
                const int ow = num_w / d.stride;
                if (ow >= d.ow) continue;
                acc += wp[kh * d.k + kw] * gp[static_cast<long long>(oh) * d.ow + ow];
              }
            }
          }
          gx[idx4(b, ic, ih, iw, d.cin, d.h, d.w)] += acc;
        }
      }
    }
  }
}

void conv2d_grad_weight(const double* x, const double* gy, double* gw, const Conv2dDims& d) {
  const int nth = thread_count();
#pragma omp parallel for collapse(2) schedule(static) num_threads(nth) if (nth > 1)
  for (int oc = 0; oc < d.cout; ++oc) {
    for (int ic = 0; ic < d.cin; ++ic) {
      for (int kh = 0; kh < d.k; ++kh) {
        for (int kw = 0; kw < d.k; ++kw) {
          double acc = 0.0;
          for (int b = 0; b < d.batch; ++b) {
            const double* xp = x + idx4(b, ic, 0, 0, d.cin, d.h, d.w);
            const double* gp = gy + idx4(b, oc, 0, 0, d.cout, d.oh, d.ow);
            for (int oh = 0; oh < d.oh; ++oh) {
              const int ih = oh * d.stride - d.pad + kh;
              if (ih < 0 || ih >= d.h) continue;
              for (int ow = 0; ow < d.ow; ++ow) {
                const int iw = ow * d.stride - d.pad + kw;
                if (iw < 0 || iw >= d.w) continue;
                acc += xp[static_cast<long long>(ih) * d.w + iw] *
                       gp[static_cast<long long>(oh) * d.ow + ow];
              }
            }
          }
          gw[idx4(oc, ic, kh, kw, d.cin, d.k, d.k)] += acc;
        }
      }
    }
  }
}

void conv2d_grad_bias(const double* gy, double* gb, const Conv2dDims& d) {
  const int nth = thread_count();
#pragma omp parallel for schedule(static) num_threads(nth) if (nth > 1)
  for (int oc = 0; oc < d.cout; ++oc) {
    double acc = 0.0;
    for (int b = 0; b < d.batch; ++b) {
      const double* gp = gy + idx4(b, oc, 0, 0, d.cout, d.oh, d.ow);
      const long long n = static_cast<long long>(d.oh) * d.ow;
      for (long long i = 0; i < n; ++i) acc += gp[i];
    }
    gb[oc] += acc;
  }
}

void maxpool_forward(const double* x, double* y, int* argmax, const Pool2dDims& d) {
  const int nth = thread_count();
#pragma omp parallel for collapse(2) schedule(static) num_threads(nth) if (nth > 1)
  for (int b = 0; b < d.batch; ++b) {
    for (int c = 0; c < d.channels; ++c) {
      const double* xp = x + idx4(b, c, 0, 0, d.channels, d.h, d.w);
      for (int oh = 0; oh < d.oh; ++oh) {
        for (int ow = 0; ow < d.ow; ++ow) {
          int best = -1;
          double best_v = 0.0;
          for (int kh = 0; kh < d.k; ++kh) {
            const int ih = oh * d.stride + kh;
            for (int kw = 0; kw < d.k; ++kw) {
              const int iw = ow * d.stride + kw;
              const double v = xp[static_cast<long long>(ih) * d.w + iw];
              if (best < 0 || v > best_v) {  // strict >: first index wins ties
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
  const int nth = thread_count();
  // Scatter to argmax positions; (b, c) planes are disjoint, so
  // parallelising over them keeps the accumulation order fixed.
#pragma omp parallel for collapse(2) schedule(static) num_threads(nth) if (nth > 1)
  for (int b = 0; b < d.batch; ++b) {
    for (int c = 0; c < d.channels; ++c) {
      double* gxp = gx + idx4(b, c, 0, 0, d.channels, d.h, d.w);
      const long long o0 = idx4(b, c, 0, 0, d.channels, d.oh, d.ow);
      const long long n = static_cast<long long>(d.oh) * d.ow;
      for (long long i = 0; i < n; ++i) gxp[argmax[o0 + i]] += gy[o0 + i];
    }
  }
}

void upsample_bilinear_forward(const double* x, double* y, const UpsampleDims& d) {
  const int nth = thread_count();
#pragma omp parallel for collapse(2) schedule(static) num_threads(nth) if (nth > 1)
  for (int b = 0; b < d.batch; ++b) {
    for (int c = 0; c < d.channels; ++c) {
      const double* xp = x + idx4(b, c, 0, 0, d.channels, d.h, d.w);
      double* yp = y + idx4(b, c, 0, 0, d.channels, d.oh, d.ow);
      for (int oh = 0; oh < d.oh; ++oh) {
        const double sh = src_pos(oh, d.h, d.oh);
        const int h0 = static_cast<int>(sh);
        const int h1 = std::min(h0 + 1, d.h - 1);
        const double fh = sh - h0;
        for (int ow = 0; ow < d.ow; ++ow) {
          const double sw = src_pos(ow, d.w, d.ow);
          const int w0 = static_cast<int>(sw);
          const int w1 = std::min(w0 + 1, d.w - 1);
          const double fw = sw - w0;
          const double v00 = xp[static_cast<long long>(h0) * d.w + w0];
          const double v01 = xp[static_cast<long long>(h0) * d.w + w1];
          const double v10 = xp[static_cast<long long>(h1) * d.w + w0];
          const double v11 = xp[static_cast<long long>(h1) * d.w + w1];
          yp[static_cast<long long>(oh) * d.ow + ow] = (1.0 - fh) * ((1.0 - fw) * v00 + fw * v01) +
                                                       fh * ((1.0 - fw) * v10 + fw * v11);
        }
      }
    }
  }
}

void upsample_bilinear_backward(const double* gy, double* gx, const UpsampleDims& d) {
  const int nth = thread_count();
  // Transpose of the interpolation map, scattered per (b, c) plane.
#pragma omp parallel for collapse(2) schedule(static) num_threads(nth) if (nth > 1)
  for (int b = 0; b < d.batch; ++b) {
    for (int c = 0; c < d.channels; ++c) {
      const double* gp = gy + idx4(b, c, 0, 0, d.channels, d.oh, d.ow);
      double* gxp = gx + idx4(b, c, 0, 0, d.channels, d.h, d.w);
      for (int oh = 0; oh < d.oh; ++oh) {
        const double sh = src_pos(oh, d.h, d.oh);
        const int h0 = static_cast<int>(sh);
        const int h1 = std::min(h0 + 1, d.h - 1);
        const double fh = sh - h0;
        for (int ow = 0; ow < d.ow; ++ow) {
          const double sw = src_pos(ow, d.w, d.ow);
          const int w0 = static_cast<int>(sw);
          const int w1 = std::min(w0 + 1, d.w - 1);
          const double fw = sw - w0;
          const double g = gp[static_cast<long long>(oh) * d.ow + ow];
          gxp[static_cast<long long>(h0) * d.w + w0] += (1.0 - fh) * (1.0 - fw) * g;
          gxp[static_cast<long long>(h0) * d.w + w1] += (1.0 - fh) * fw * g;
          gxp[static_cast<long long>(h1) * d.w + w0] += fh * (1.0 - fw) * g;
          gxp[static_cast<long long>(h1) * d.w + w1] += fh * fw * g;
        }
      }
    }
  }
}

}  // namespace phnn::kernels
