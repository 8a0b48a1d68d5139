#include "voxmesh/nn.hpp"

#include <algorithm>
#include <cmath>

namespace voxmesh {

using detail::Node;
using detail::NodePtr;

namespace {

struct ConvDims {
    std::int64_t N, Ci, D, H, W;
    std::int64_t Co, k;
    std::int64_t Do, Ho, Wo;
    int stride, pad;
};

// Output range [lo, hi) such that 0 <= o*stride + koff - pad < extent.
inline void out_range(std::int64_t extent, std::int64_t out_extent, std::int64_t koff, int stride,
                      int pad, std::int64_t& lo, std::int64_t& hi) {
    const std::int64_t shift = koff - pad;
    // o*stride + shift >= 0
    std::int64_t l = shift >= 0 ? 0 : (-shift + stride - 1) / stride;
    // o*stride + shift <= extent-1
    std::int64_t h = (extent - 1 - shift) / stride + 1;
    if (extent - 1 - shift < 0) h = 0;
    lo = std::max<std::int64_t>(0, l);
    hi = std::min(out_extent, h);
}

template <class T>
void conv3d_forward_kernel(const ConvDims& d, const T* in, const T* w, const T* b, T* out,
                           bool accumulate = false) {
    const std::int64_t in_c = d.D * d.H * d.W;
    const std::int64_t out_c = d.Do * d.Ho * d.Wo;
    for (std::int64_t n = 0; n < d.N; ++n) {
        for (std::int64_t co = 0; co < d.Co; ++co) {
            T* o = out + (n * d.Co + co) * out_c;
            if (!accumulate) {
                const T bv = b ? b[co] : T(0);
                for (std::int64_t i = 0; i < out_c; ++i) o[i] = bv;
            }
            for (std::int64_t ci = 0; ci < d.Ci; ++ci) {
                const T* x = in + (n * d.Ci + ci) * in_c;
                const T* wk = w + (co * d.Ci + ci) * d.k * d.k * d.k;
                for (std::int64_t kz = 0; kz < d.k; ++kz) {
                    std::int64_t zlo, zhi;
                    out_range(d.D, d.Do, kz, d.stride, d.pad, zlo, zhi);
                    for (std::int64_t ky = 0; ky < d.k; ++ky) {
                        std::int64_t ylo, yhi;
                        out_range(d.H, d.Ho, ky, d.stride, d.pad, ylo, yhi);
                        for (std::int64_t kx = 0; kx < d.k; ++kx) {
                            std::int64_t xlo, xhi;
                            out_range(d.W, d.Wo, kx, d.stride, d.pad, xlo, xhi);
                            const T wv = wk[(kz * d.k + ky) * d.k + kx];
                            if (wv == T(0)) continue;
                            for (std::int64_t zo = zlo; zo < zhi; ++zo) {
                                const std::int64_t zi = zo * d.stride + kz - d.pad;
                                for (std::int64_t yo = ylo; yo < yhi; ++yo) {
                                    const std::int64_t yi = yo * d.stride + ky - d.pad;
                                    T* orow = o + (zo * d.Ho + yo) * d.Wo;
                                    const T* xrow = x + (zi * d.H + yi) * d.W + kx - d.pad;
                                    if (d.stride == 1) {
                                        for (std::int64_t xo = xlo; xo < xhi; ++xo)
                                            orow[xo] += wv * xrow[xo];
                                    } else {
                                        for (std::int64_t xo = xlo; xo < xhi; ++xo)
                                            orow[xo] += wv * xrow[xo * 2];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

template <class T>
void conv3d_backward_input_kernel(const ConvDims& d, const T* gout, const T* w, T* gin) {
    const std::int64_t in_c = d.D * d.H * d.W;
    const std::int64_t out_c = d.Do * d.Ho * d.Wo;
    for (std::int64_t n = 0; n < d.N; ++n) {
        for (std::int64_t co = 0; co < d.Co; ++co) {
            const T* g = gout + (n * d.Co + co) * out_c;
            for (std::int64_t ci = 0; ci < d.Ci; ++ci) {
                T* gx = gin + (n * d.Ci + ci) * in_c;
                const T* wk = w + (co * d.Ci + ci) * d.k * d.k * d.k;
                for (std::int64_t kz = 0; kz < d.k; ++kz) {
                    std::int64_t zlo, zhi;
                    out_range(d.D, d.Do, kz, d.stride, d.pad, zlo, zhi);
                    for (std::int64_t ky = 0; ky < d.k; ++ky) {
                        std::int64_t ylo, yhi;
                        out_range(d.H, d.Ho, ky, d.stride, d.pad, ylo, yhi);
                        for (std::int64_t kx = 0; kx < d.k; ++kx) {
                            std::int64_t xlo, xhi;
                            out_range(d.W, d.Wo, kx, d.stride, d.pad, xlo, xhi);
                            const T wv = wk[(kz * d.k + ky) * d.k + kx];
                            if (wv == T(0)) continue;
                            for (std::int64_t zo = zlo; zo < zhi; ++zo) {
                                const std::int64_t zi = zo * d.stride + kz - d.pad;
                                for (std::int64_t yo = ylo; yo < yhi; ++yo) {
                                    const std::int64_t yi = yo * d.stride + ky - d.pad;
                                    const T* grow = g + (zo * d.Ho + yo) * d.Wo;
                                    T* xrow = gx + (zi * d.H + yi) * d.W + kx - d.pad;
                                    if (d.stride == 1) {
                                        for (std::int64_t xo = xlo; xo < xhi; ++xo)
                                            xrow[xo] += wv * grow[xo];
                                    } else {
                                        for (std::int64_t xo = xlo; xo < xhi; ++xo)
                                            xrow[xo * 2] += wv * grow[xo];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

template <class T>
void conv3d_backward_weight_kernel(const ConvDims& d, const T* in, const T* gout, T* gw) {
    const std::int64_t in_c = d.D * d.H * d.W;
    const std::int64_t out_c = d.Do * d.Ho * d.Wo;
    for (std::int64_t n = 0; n < d.N; ++n) {
        for (std::int64_t co = 0; co < d.Co; ++co) {
            const T* g = gout + (n * d.Co + co) * out_c;
            for (std::int64_t ci = 0; ci < d.Ci; ++ci) {
                const T* x = in + (n * d.Ci + ci) * in_c;
                T* wk = gw + (co * d.Ci + ci) * d.k * d.k * d.k;
                for (std::int64_t kz = 0; kz < d.k; ++kz) {
                    std::int64_t zlo, zhi;
                    out_range(d.D, d.Do, kz, d.stride, d.pad, zlo, zhi);
                    for (std::int64_t ky = 0; ky < d.k; ++ky) {
                        std::int64_t ylo, yhi;
                        out_range(d.H, d.Ho, ky, d.stride, d.pad, ylo, yhi);
                        for (std::int64_t kx = 0; kx < d.k; ++kx) {
                            std::int64_t xlo, xhi;
                            out_range(d.W, d.Wo, kx, d.stride, d.pad, xlo, xhi);
                            T acc = T(0);
                            for (std::int64_t zo = zlo; zo < zhi; ++zo) {
                                const std::int64_t zi = zo * d.stride + kz - d.pad;
                                for (std::int64_t yo = ylo; yo < yhi; ++yo) {
                                    const std::int64_t yi = yo * d.stride + ky - d.pad;
                                    const T* grow = g + (zo * d.Ho + yo) * d.Wo;
                                    const T* xrow = x + (zi * d.H + yi) * d.W + kx - d.pad;
                                    if (d.stride == 1) {
                                        for (std::int64_t xo = xlo; xo < xhi; ++xo)
                                            acc += grow[xo] * xrow[xo];
                                    } else {
                                        for (std::int64_t xo = xlo; xo < xhi; ++xo)
                                            acc += grow[xo] * xrow[xo * 2];
                                    }
                                }
                            }
                            wk[(kz * d.k + ky) * d.k + kx] += acc;
                        }
                    }
                }
            }
        }
    }
}

template <class T>
void reduce_bias_grad(std::int64_t N, std::int64_t C, std::int64_t spatial, const T* gout, T* gb) {
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c) {
            const T* g = gout + (n * C + c) * spatial;
            T acc = T(0);
            for (std::int64_t i = 0; i < spatial; ++i) acc += g[i];
            gb[c] += acc;
        }
}

ConvDims make_conv_dims(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                        int padding) {
    require(input.rank() == 5, "conv3d: input must be [N,C,D,H,W], got " + shape_str(input.shape()));
    require(weight.rank() == 5, "conv3d: weight must be [Co,Ci,k,k,k], got " + shape_str(weight.shape()));
    require(weight.dim(2) == weight.dim(3) && weight.dim(3) == weight.dim(4),
            "conv3d: kernel must be cubic, got " + shape_str(weight.shape()));
    ConvDims d;
    d.N = input.dim(0);
    d.Ci = input.dim(1);
    d.D = input.dim(2);
    d.H = input.dim(3);
    d.W = input.dim(4);
    d.Co = weight.dim(0);
    d.k = weight.dim(2);
    d.stride = stride;
    d.pad = padding;
    require(weight.dim(1) == d.Ci, "conv3d: weight in-channels " + std::to_string(weight.dim(1)) +
                                       " != input channels " + std::to_string(d.Ci));
    require(bias.rank() == 1 && bias.dim(0) == d.Co,
            "conv3d: bias must be [Co]=" + std::to_string(d.Co) + ", got " + shape_str(bias.shape()));
    require(d.k % 2 == 1, "conv3d: kernel size must be odd, got " + std::to_string(d.k));
    require(stride == 1 || stride == 2, "conv3d: stride must be 1 or 2, got " + std::to_string(stride));
    require(padding >= 0, "conv3d: padding must be >= 0");
    require(d.D + 2 * padding >= d.k, "conv3d: depth " + std::to_string(d.D) + " too small for kernel");
    require(d.H + 2 * padding >= d.k, "conv3d: height " + std::to_string(d.H) + " too small for kernel");
    require(d.W + 2 * padding >= d.k, "conv3d: width " + std::to_string(d.W) + " too small for kernel");
    d.Do = (d.D + 2 * padding - d.k) / stride + 1;
    d.Ho = (d.H + 2 * padding - d.k) / stride + 1;
    d.Wo = (d.W + 2 * padding - d.k) / stride + 1;
    return d;
}

}  // namespace

Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
    require(input.dtype() == weight.dtype() && input.dtype() == bias.dtype(),
            "conv3d: dtype mismatch");
    const ConvDims d = make_conv_dims(input, weight, bias, stride, padding);
    NodePtr pin = input.node(), pw = weight.node(), pb = bias.node();
    Tensor out = detail::make_op({d.N, d.Co, d.Do, d.Ho, d.Wo}, input.dtype(), {input, weight, bias},
                                 [d, pin, pw, pb](Node& o) {
        const std::int64_t spatial = d.Do * d.Ho * d.Wo;
        if (o.dtype == Dtype::F32) {
            if (pin->requires_grad)
                conv3d_backward_input_kernel<float>(d, o.grad<float>(), pw->val<float>(), pin->grad<float>());
            if (pw->requires_grad)
                conv3d_backward_weight_kernel<float>(d, pin->val<float>(), o.grad<float>(), pw->grad<float>());
            if (pb->requires_grad) reduce_bias_grad<float>(d.N, d.Co, spatial, o.grad<float>(), pb->grad<float>());
        } else {
            if (pin->requires_grad)
                conv3d_backward_input_kernel<double>(d, o.grad<double>(), pw->val<double>(), pin->grad<double>());
            if (pw->requires_grad)
                conv3d_backward_weight_kernel<double>(d, pin->val<double>(), o.grad<double>(), pw->grad<double>());
            if (pb->requires_grad) reduce_bias_grad<double>(d.N, d.Co, spatial, o.grad<double>(), pb->grad<double>());
        }
    });
    if (input.dtype() == Dtype::F32)
        conv3d_forward_kernel<float>(d, pin->val<float>(), pw->val<float>(), pb->val<float>(),
                                     out.node()->val<float>());
    else
        conv3d_forward_kernel<double>(d, pin->val<double>(), pw->val<double>(), pb->val<double>(),
                                      out.node()->val<double>());
    return out;
}

Tensor conv3d_transpose(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                        int padding, int output_padding) {
    require(input.rank() == 5, "conv3d_transpose: input must be [N,C,D,H,W], got " +
                                   shape_str(input.shape()));
    require(weight.rank() == 5, "conv3d_transpose: weight must be [Ci,Co,k,k,k], got " +
                                    shape_str(weight.shape()));
    require(input.dtype() == weight.dtype() && input.dtype() == bias.dtype(),
            "conv3d_transpose: dtype mismatch");
    require(stride == 1 || stride == 2,
            "conv3d_transpose: stride must be 1 or 2, got " + std::to_string(stride));
    if (output_padding < 0) output_padding = stride - 1;
    require(output_padding < stride, "conv3d_transpose: output_padding must be < stride");

    const std::int64_t N = input.dim(0);
    const std::int64_t Cy = input.dim(1);  // transpose-conv input channels
    const std::int64_t Cx = weight.dim(1);
    const std::int64_t k = weight.dim(2);
    require(weight.dim(0) == Cy, "conv3d_transpose: weight rows " + std::to_string(weight.dim(0)) +
                                     " != input channels " + std::to_string(Cy));
    require(weight.dim(3) == k && weight.dim(4) == k, "conv3d_transpose: kernel must be cubic");
    require(bias.rank() == 1 && bias.dim(0) == Cx,
            "conv3d_transpose: bias must be [Co]=" + std::to_string(Cx));

    // ConvDims describes the adjoint conv3d: x [N,Cx,Do,...] -> y [N,Cy,D,...]
    ConvDims d;
    d.N = N;
    d.Ci = Cx;
    d.Co = Cy;
    d.k = k;
    d.stride = stride;
    d.pad = padding;
    d.Do = input.dim(2);
    d.Ho = input.dim(3);
    d.Wo = input.dim(4);
    d.D = (d.Do - 1) * stride - 2 * padding + k + output_padding;
    d.H = (d.Ho - 1) * stride - 2 * padding + k + output_padding;
    d.W = (d.Wo - 1) * stride - 2 * padding + k + output_padding;
    require(d.D > 0 && d.H > 0 && d.W > 0, "conv3d_transpose: non-positive output extent");

    NodePtr pin = input.node(), pw = weight.node(), pb = bias.node();
    Tensor out = detail::make_op({N, Cx, d.D, d.H, d.W}, input.dtype(), {input, weight, bias},
                                 [d, pin, pw, pb](Node& o) {
        // o.grad plays the conv3d input role; pin the conv3d output role.
        const std::int64_t spatial = d.Do * d.Ho * d.Wo;
        if (o.dtype == Dtype::F32) {
            if (pin->requires_grad)
                conv3d_forward_kernel<float>(d, o.grad<float>(), pw->val<float>(), nullptr,
                                             pin->grad<float>(), true);
            if (pw->requires_grad)
                conv3d_backward_weight_kernel<float>(d, o.grad<float>(), pin->val<float>(),
                                                     pw->grad<float>());
            if (pb->requires_grad) {
                const std::int64_t out_spatial = d.D * d.H * d.W;
                reduce_bias_grad<float>(d.N, d.Ci, out_spatial, o.grad<float>(), pb->grad<float>());
            }
            (void)spatial;
        } else {
            if (pin->requires_grad)
                conv3d_forward_kernel<double>(d, o.grad<double>(), pw->val<double>(), nullptr,
                                              pin->grad<double>(), true);
            if (pw->requires_grad)
                conv3d_backward_weight_kernel<double>(d, o.grad<double>(), pin->val<double>(),
                                                      pw->grad<double>());
            if (pb->requires_grad) {
                const std::int64_t out_spatial = d.D * d.H * d.W;
                reduce_bias_grad<double>(d.N, d.Ci, out_spatial, o.grad<double>(), pb->grad<double>());
            }
        }
    });

    // Forward fill: scatter (adjoint of conv3d forward), then add bias.
    Node& o = *out.node();
    if (input.dtype() == Dtype::F32) {
        conv3d_backward_input_kernel<float>(d, pin->val<float>(), pw->val<float>(), o.val<float>());
        const float* bv = pb->val<float>();
        float* po = o.val<float>();
        const std::int64_t out_spatial = d.D * d.H * d.W;
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < Cx; ++c) {
                float* row = po + (n * Cx + c) * out_spatial;
                for (std::int64_t i = 0; i < out_spatial; ++i) row[i] += bv[c];
            }
    } else {
        conv3d_backward_input_kernel<double>(d, pin->val<double>(), pw->val<double>(), o.val<double>());
        const double* bv = pb->val<double>();
        double* po = o.val<double>();
        const std::int64_t out_spatial = d.D * d.H * d.W;
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < Cx; ++c) {
                double* row = po + (n * Cx + c) * out_spatial;
                for (std::int64_t i = 0; i < out_spatial; ++i) row[i] += bv[c];
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// batchnorm
// ---------------------------------------------------------------------------

namespace {

struct BnDims {
    std::int64_t N, C, spatial;  // element (n, c, s) at ((n*C + c)*spatial + s)
};

BnDims bn_dims(const Tensor& x) {
    require(x.rank() >= 2, "batchnorm: input rank must be >= 2, got " + shape_str(x.shape()));
    BnDims d;
    d.N = x.dim(0);
    d.C = x.dim(1);
    d.spatial = 1;
    for (int i = 2; i < x.rank(); ++i) d.spatial *= x.dim(i);
    return d;
}

template <class T>
void bn_forward_train(const BnDims& d, const T* x, const T* gamma, const T* beta, T* y,
                      double* mean_out, double* var_out, double eps) {
    const std::int64_t cnt = d.N * d.spatial;
    for (std::int64_t c = 0; c < d.C; ++c) {
        double s = 0.0;
        for (std::int64_t n = 0; n < d.N; ++n) {
            const T* row = x + (n * d.C + c) * d.spatial;
            for (std::int64_t i = 0; i < d.spatial; ++i) s += static_cast<double>(row[i]);
        }
        const double mu = s / static_cast<double>(cnt);
        double v = 0.0;
        for (std::int64_t n = 0; n < d.N; ++n) {
            const T* row = x + (n * d.C + c) * d.spatial;
            for (std::int64_t i = 0; i < d.spatial; ++i) {
                const double dd = static_cast<double>(row[i]) - mu;
                v += dd * dd;
            }
        }
        v /= static_cast<double>(cnt);
        mean_out[c] = mu;
        var_out[c] = v;
        const double inv_sigma = 1.0 / std::sqrt(v + eps);
        const double g = static_cast<double>(gamma[c]);
        const double b = static_cast<double>(beta[c]);
        for (std::int64_t n = 0; n < d.N; ++n) {
            const T* row = x + (n * d.C + c) * d.spatial;
            T* orow = y + (n * d.C + c) * d.spatial;
            for (std::int64_t i = 0; i < d.spatial; ++i)
                orow[i] = static_cast<T>((static_cast<double>(row[i]) - mu) * inv_sigma * g + b);
        }
    }
}

template <class T>
void bn_backward_train(const BnDims& d, const T* x, const T* gamma, const double* mean,
                       const double* var, const T* gy, T* gx, T* ggamma, T* gbeta, double eps) {
    const std::int64_t cnt = d.N * d.spatial;
    for (std::int64_t c = 0; c < d.C; ++c) {
        const double mu = mean[c];
        const double inv_sigma = 1.0 / std::sqrt(var[c] + eps);
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::int64_t n = 0; n < d.N; ++n) {
            const T* grow = gy + (n * d.C + c) * d.spatial;
            const T* xrow = x + (n * d.C + c) * d.spatial;
            for (std::int64_t i = 0; i < d.spatial; ++i) {
                const double g = static_cast<double>(grow[i]);
                const double xh = (static_cast<double>(xrow[i]) - mu) * inv_sigma;
                sum_g += g;
                sum_gx += g * xh;
            }
        }
        if (gbeta) gbeta[c] += static_cast<T>(sum_g);
        if (ggamma) ggamma[c] += static_cast<T>(sum_gx);
        if (gx) {
            const double gam = static_cast<double>(gamma[c]);
            const double mg = sum_g / static_cast<double>(cnt);
            const double mgx = sum_gx / static_cast<double>(cnt);
            for (std::int64_t n = 0; n < d.N; ++n) {
                const T* grow = gy + (n * d.C + c) * d.spatial;
                const T* xrow = x + (n * d.C + c) * d.spatial;
                T* gxrow = gx + (n * d.C + c) * d.spatial;
                for (std::int64_t i = 0; i < d.spatial; ++i) {
                    const double g = static_cast<double>(grow[i]);
                    const double xh = (static_cast<double>(xrow[i]) - mu) * inv_sigma;
                    gxrow[i] += static_cast<T>(gam * inv_sigma * (g - mg - xh * mgx));
                }
            }
        }
    }
}

template <class T>
void bn_forward_eval(const BnDims& d, const T* x, const T* gamma, const T* beta, const T* rm,
                     const T* rv, T* y, double eps) {
    for (std::int64_t c = 0; c < d.C; ++c) {
        const double mu = static_cast<double>(rm[c]);
        const double inv_sigma = 1.0 / std::sqrt(static_cast<double>(rv[c]) + eps);
        const double g = static_cast<double>(gamma[c]);
        const double b = static_cast<double>(beta[c]);
        for (std::int64_t n = 0; n < d.N; ++n) {
            const T* row = x + (n * d.C + c) * d.spatial;
            T* orow = y + (n * d.C + c) * d.spatial;
            for (std::int64_t i = 0; i < d.spatial; ++i)
                orow[i] = static_cast<T>((static_cast<double>(row[i]) - mu) * inv_sigma * g + b);
        }
    }
}

template <class T>
void bn_backward_eval(const BnDims& d, const T* x, const T* gamma, const T* rm, const T* rv,
                      const T* gy, T* gx, T* ggamma, T* gbeta, double eps) {
    for (std::int64_t c = 0; c < d.C; ++c) {
        const double mu = static_cast<double>(rm[c]);
        const double inv_sigma = 1.0 / std::sqrt(static_cast<double>(rv[c]) + eps);
        const double gam = static_cast<double>(gamma[c]);
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::int64_t n = 0; n < d.N; ++n) {
            const T* grow = gy + (n * d.C + c) * d.spatial;
            const T* xrow = x + (n * d.C + c) * d.spatial;
            T* gxrow = gx ? gx + (n * d.C + c) * d.spatial : nullptr;
            for (std::int64_t i = 0; i < d.spatial; ++i) {
                const double g = static_cast<double>(grow[i]);
                sum_g += g;
                sum_gx += g * (static_cast<double>(xrow[i]) - mu) * inv_sigma;
                if (gxrow) gxrow[i] += static_cast<T>(g * gam * inv_sigma);
            }
        }
        if (gbeta) gbeta[c] += static_cast<T>(sum_g);
        if (ggamma) ggamma[c] += static_cast<T>(sum_gx);
    }
}

}  // namespace

Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                 const Tensor& running_mean, const Tensor& running_var, bool train, double momentum,
                 double eps) {
    const BnDims d = bn_dims(input);
    require(gamma.rank() == 1 && gamma.dim(0) == d.C, "batchnorm: gamma must be [C]");
    require(beta.rank() == 1 && beta.dim(0) == d.C, "batchnorm: beta must be [C]");
    require(running_mean.defined() && running_var.defined() && running_mean.dim(0) == d.C &&
                running_var.dim(0) == d.C,
            "batchnorm: running stats must be [C]");
    require(!running_mean.requires_grad() && !running_var.requires_grad(),
            "batchnorm: running stats must not require grad");
    require(input.dtype() == gamma.dtype() && input.dtype() == beta.dtype(), "batchnorm: dtype mismatch");

    NodePtr px = input.node(), pg = gamma.node(), pb = beta.node();
    NodePtr prm = running_mean.node(), prv = running_var.node();

    if (train) {
        auto batch_mean = std::make_shared<std::vector<double>>(static_cast<std::size_t>(d.C));
        auto batch_var = std::make_shared<std::vector<double>>(static_cast<std::size_t>(d.C));
        Tensor out = detail::make_op(input.shape(), input.dtype(), {input, gamma, beta},
                                     [d, px, pg, pb, batch_mean, batch_var, eps](Node& o) {
            if (o.dtype == Dtype::F32) {
                bn_backward_train<float>(d, px->val<float>(), pg->val<float>(), batch_mean->data(),
                                         batch_var->data(), o.grad<float>(),
                                         px->requires_grad ? px->grad<float>() : nullptr,
                                         pg->requires_grad ? pg->grad<float>() : nullptr,
                                         pb->requires_grad ? pb->grad<float>() : nullptr, eps);
            } else {
                bn_backward_train<double>(d, px->val<double>(), pg->val<double>(), batch_mean->data(),
                                          batch_var->data(), o.grad<double>(),
                                          px->requires_grad ? px->grad<double>() : nullptr,
                                          pg->requires_grad ? pg->grad<double>() : nullptr,
                                          pb->requires_grad ? pb->grad<double>() : nullptr, eps);
            }
        });
        if (input.dtype() == Dtype::F32) {
            bn_forward_train<float>(d, px->val<float>(), pg->val<float>(), pb->val<float>(),
                                    out.node()->val<float>(), batch_mean->data(), batch_var->data(), eps);
        } else {
            bn_forward_train<double>(d, px->val<double>(), pg->val<double>(), pb->val<double>(),
                                     out.node()->val<double>(), batch_mean->data(), batch_var->data(), eps);
        }
        // Running-stat update (unbiased variance, matching the usual convention).
        const std::int64_t cnt = d.N * d.spatial;
        const double unbias = cnt > 1 ? static_cast<double>(cnt) / static_cast<double>(cnt - 1) : 1.0;
        for (std::int64_t c = 0; c < d.C; ++c) {
            const double rm = prm->value_at(c) * (1.0 - momentum) + momentum * (*batch_mean)[static_cast<std::size_t>(c)];
            const double rv = prv->value_at(c) * (1.0 - momentum) +
                              momentum * (*batch_var)[static_cast<std::size_t>(c)] * unbias;
            Tensor(prm).set_value_at(c, rm);
            Tensor(prv).set_value_at(c, rv);
        }
        return out;
    }

    Tensor out = detail::make_op(input.shape(), input.dtype(), {input, gamma, beta},
                                 [d, px, pg, pb, prm, prv, eps](Node& o) {
        if (o.dtype == Dtype::F32) {
            bn_backward_eval<float>(d, px->val<float>(), pg->val<float>(), prm->val<float>(),
                                    prv->val<float>(), o.grad<float>(),
                                    px->requires_grad ? px->grad<float>() : nullptr,
                                    pg->requires_grad ? pg->grad<float>() : nullptr,
                                    pb->requires_grad ? pb->grad<float>() : nullptr, eps);
        } else {
            bn_backward_eval<double>(d, px->val<double>(), pg->val<double>(), prm->val<double>(),
                                     prv->val<double>(), o.grad<double>(),
                                     px->requires_grad ? px->grad<double>() : nullptr,
                                     pg->requires_grad ? pg->grad<double>() : nullptr,
                                     pb->requires_grad ? pb->grad<double>() : nullptr, eps);
        }
    });
    if (input.dtype() == Dtype::F32) {
        bn_forward_eval<float>(d, px->val<float>(), pg->val<float>(), pb->val<float>(),
                               prm->val<float>(), prv->val<float>(), out.node()->val<float>(), eps);
    } else {
        bn_forward_eval<double>(d, px->val<double>(), pg->val<double>(), pb->val<double>(),
                                prm->val<double>(), prv->val<double>(), out.node()->val<double>(), eps);
    }
    return out;
}

// ---------------------------------------------------------------------------
// linear
// ---------------------------------------------------------------------------

namespace {

template <class T>
void matmul_nn(std::int64_t n, std::int64_t kk, std::int64_t m, const T* a, const T* b, T* c) {
    // c[n,m] += a[n,k] * b[k,m]
    for (std::int64_t i = 0; i < n; ++i) {
        const T* arow = a + i * kk;
        T* crow = c + i * m;
        for (std::int64_t k = 0; k < kk; ++k) {
            const T av = arow[k];
            if (av == T(0)) continue;
            const T* brow = b + k * m;
            for (std::int64_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

template <class T>
void linear_backward(std::int64_t n, std::int64_t fin, std::int64_t fout, const T* x, const T* w,
                     const T* g, T* gx, T* gw, T* gb) {
    if (gx) {
        // gx[i,k] += dot(g[i,:], w[k,:])
        for (std::int64_t i = 0; i < n; ++i) {
            const T* grow = g + i * fout;
            T* gxrow = gx + i * fin;
            for (std::int64_t k = 0; k < fin; ++k) {
                const T* wrow = w + k * fout;
                T acc = T(0);
                for (std::int64_t j = 0; j < fout; ++j) acc += grow[j] * wrow[j];
                gxrow[k] += acc;
            }
        }
    }
    if (gw) {
        for (std::int64_t i = 0; i < n; ++i) {
            const T* xrow = x + i * fin;
            const T* grow = g + i * fout;
            for (std::int64_t k = 0; k < fin; ++k) {
                const T xv = xrow[k];
                if (xv == T(0)) continue;
                T* gwrow = gw + k * fout;
                for (std::int64_t j = 0; j < fout; ++j) gwrow[j] += xv * grow[j];
            }
        }
    }
    if (gb) {
        for (std::int64_t i = 0; i < n; ++i) {
            const T* grow = g + i * fout;
            for (std::int64_t j = 0; j < fout; ++j) gb[j] += grow[j];
        }
    }
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require(x.rank() == 2, "linear: x must be [N,Fin], got " + shape_str(x.shape()));
    require(weight.rank() == 2, "linear: weight must be [Fin,Fout], got " + shape_str(weight.shape()));
    require(x.dim(1) == weight.dim(0), "linear: x columns " + std::to_string(x.dim(1)) +
                                           " != weight rows " + std::to_string(weight.dim(0)));
    const std::int64_t n = x.dim(0), fin = x.dim(1), fout = weight.dim(1);
    require(bias.rank() == 1 && bias.dim(0) == fout, "linear: bias must be [Fout]");
    require(x.dtype() == weight.dtype() && x.dtype() == bias.dtype(), "linear: dtype mismatch");

    NodePtr px = x.node(), pw = weight.node(), pb = bias.node();
    Tensor out = detail::make_op({n, fout}, x.dtype(), {x, weight, bias},
                                 [n, fin, fout, px, pw, pb](Node& o) {
        if (o.dtype == Dtype::F32) {
            linear_backward<float>(n, fin, fout, px->val<float>(), pw->val<float>(), o.grad<float>(),
                                   px->requires_grad ? px->grad<float>() : nullptr,
                                   pw->requires_grad ? pw->grad<float>() : nullptr,
                                   pb->requires_grad ? pb->grad<float>() : nullptr);
        } else {
            linear_backward<double>(n, fin, fout, px->val<double>(), pw->val<double>(), o.grad<double>(),
                                    px->requires_grad ? px->grad<double>() : nullptr,
                                    pw->requires_grad ? pw->grad<double>() : nullptr,
                                    pb->requires_grad ? pb->grad<double>() : nullptr);
        }
    });
    Node& o = *out.node();
    if (x.dtype() == Dtype::F32) {
        float* po = o.val<float>();
        const float* bv = pb->val<float>();
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < fout; ++j) po[i * fout + j] = bv[j];
        matmul_nn<float>(n, fin, fout, px->val<float>(), pw->val<float>(), po);
    } else {
        double* po = o.val<double>();
        const double* bv = pb->val<double>();
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < fout; ++j) po[i * fout + j] = bv[j];
        matmul_nn<double>(n, fin, fout, px->val<double>(), pw->val<double>(), po);
    }
    return out;
}

// ---------------------------------------------------------------------------
// trilinear sampling
// ---------------------------------------------------------------------------

namespace {

struct AxisCoord {
    std::int64_t i0;
    double frac;      // in [0,1]
    bool interior;    // false when clamped or extent == 1 (zero spatial grad)
};

inline AxisCoord axis_coord(double u, std::int64_t extent) {
    AxisCoord a;
    if (extent == 1) {
        a.i0 = 0;
        a.frac = 0.0;
        a.interior = false;
        return a;
    }
    if (u <= 0.0) {
        a.i0 = 0;
        a.frac = 0.0;
        a.interior = false;
    } else if (u >= static_cast<double>(extent - 1)) {
        a.i0 = extent - 2;
        a.frac = 1.0;
        a.interior = false;
    } else {
        a.i0 = static_cast<std::int64_t>(u);
        if (a.i0 > extent - 2) a.i0 = extent - 2;
        a.frac = u - static_cast<double>(a.i0);
        a.interior = true;
    }
    return a;
}

template <class T>
void trilinear_forward(const Tensor& feature, const Tensor& points, const GridMap& map, T* out) {
    const std::int64_t C = feature.dim(0), Dz = feature.dim(1), Hy = feature.dim(2), Wx = feature.dim(3);
    const std::int64_t V = points.dim(0);
    const T* f = feature.data<T>();
    const T* p = points.data<T>();
    const std::int64_t plane = Hy * Wx;
    const std::int64_t volume = Dz * plane;
    for (std::int64_t v = 0; v < V; ++v) {
        const double x = static_cast<double>(p[v * 3 + 0]);
        const double y = static_cast<double>(p[v * 3 + 1]);
        const double z = static_cast<double>(p[v * 3 + 2]);
        const double u = map.A[0] * x + map.A[1] * y + map.A[2] * z + map.t[0];
        const double vv = map.A[3] * x + map.A[4] * y + map.A[5] * z + map.t[1];
        const double ww = map.A[6] * x + map.A[7] * y + map.A[8] * z + map.t[2];
        const AxisCoord ax = axis_coord(u, Wx), ay = axis_coord(vv, Hy), az = axis_coord(ww, Dz);
        const double fx1 = ax.frac, fx0 = 1.0 - fx1;
        const double fy1 = ay.frac, fy0 = 1.0 - fy1;
        const double fz1 = az.frac, fz0 = 1.0 - fz1;
        const std::int64_t x1 = Wx == 1 ? 0 : ax.i0 + 1;
        const std::int64_t y1 = Hy == 1 ? 0 : ay.i0 + 1;
        const std::int64_t z1 = Dz == 1 ? 0 : az.i0 + 1;
        for (std::int64_t c = 0; c < C; ++c) {
            const T* fc = f + c * volume;
            const double v000 = fc[az.i0 * plane + ay.i0 * Wx + ax.i0];
            const double v001 = fc[az.i0 * plane + ay.i0 * Wx + x1];
            const double v010 = fc[az.i0 * plane + y1 * Wx + ax.i0];
            const double v011 = fc[az.i0 * plane + y1 * Wx + x1];
            const double v100 = fc[z1 * plane + ay.i0 * Wx + ax.i0];
            const double v101 = fc[z1 * plane + ay.i0 * Wx + x1];
            const double v110 = fc[z1 * plane + y1 * Wx + ax.i0];
            const double v111 = fc[z1 * plane + y1 * Wx + x1];
            const double val = fz0 * (fy0 * (fx0 * v000 + fx1 * v001) + fy1 * (fx0 * v010 + fx1 * v011)) +
                               fz1 * (fy0 * (fx0 * v100 + fx1 * v101) + fy1 * (fx0 * v110 + fx1 * v111));
            out[v * C + c] = static_cast<T>(val);
        }
    }
}

template <class T>
void trilinear_backward(const Tensor& feature, const Tensor& points, const GridMap& map, const T* g,
                        T* gfeat, T* gpts) {
    const std::int64_t C = feature.dim(0), Dz = feature.dim(1), Hy = feature.dim(2), Wx = feature.dim(3);
    const std::int64_t V = points.dim(0);
    const T* f = feature.data<T>();
    const T* p = points.data<T>();
    const std::int64_t plane = Hy * Wx;
    const std::int64_t volume = Dz * plane;
    for (std::int64_t v = 0; v < V; ++v) {
        const double x = static_cast<double>(p[v * 3 + 0]);
        const double y = static_cast<double>(p[v * 3 + 1]);
        const double z = static_cast<double>(p[v * 3 + 2]);
        const double u = map.A[0] * x + map.A[1] * y + map.A[2] * z + map.t[0];
        const double vv = map.A[3] * x + map.A[4] * y + map.A[5] * z + map.t[1];
        const double ww = map.A[6] * x + map.A[7] * y + map.A[8] * z + map.t[2];
        const AxisCoord ax = axis_coord(u, Wx), ay = axis_coord(vv, Hy), az = axis_coord(ww, Dz);
        const double fx1 = ax.frac, fx0 = 1.0 - fx1;
        const double fy1 = ay.frac, fy0 = 1.0 - fy1;
        const double fz1 = az.frac, fz0 = 1.0 - fz1;
        const std::int64_t x1 = Wx == 1 ? 0 : ax.i0 + 1;
        const std::int64_t y1 = Hy == 1 ? 0 : ay.i0 + 1;
        const std::int64_t z1 = Dz == 1 ? 0 : az.i0 + 1;
        double du = 0.0, dv = 0.0, dw = 0.0;
        for (std::int64_t c = 0; c < C; ++c) {
            const double gv = static_cast<double>(g[v * C + c]);
            const T* fc = f + c * volume;
            const std::int64_t o000 = az.i0 * plane + ay.i0 * Wx + ax.i0;
            const std::int64_t o001 = az.i0 * plane + ay.i0 * Wx + x1;
            const std::int64_t o010 = az.i0 * plane + y1 * Wx + ax.i0;
            const std::int64_t o011 = az.i0 * plane + y1 * Wx + x1;
            const std::int64_t o100 = z1 * plane + ay.i0 * Wx + ax.i0;
            const std::int64_t o101 = z1 * plane + ay.i0 * Wx + x1;
            const std::int64_t o110 = z1 * plane + y1 * Wx + ax.i0;
            const std::int64_t o111 = z1 * plane + y1 * Wx + x1;
            if (gfeat) {
                T* gc = gfeat + c * volume;
                gc[o000] += static_cast<T>(gv * fz0 * fy0 * fx0);
                gc[o001] += static_cast<T>(gv * fz0 * fy0 * fx1);
                gc[o010] += static_cast<T>(gv * fz0 * fy1 * fx0);
                gc[o011] += static_cast<T>(gv * fz0 * fy1 * fx1);
                gc[o100] += static_cast<T>(gv * fz1 * fy0 * fx0);
                gc[o101] += static_cast<T>(gv * fz1 * fy0 * fx1);
                gc[o110] += static_cast<T>(gv * fz1 * fy1 * fx0);
                gc[o111] += static_cast<T>(gv * fz1 * fy1 * fx1);
            }
            if (gpts) {
                const double v000 = fc[o000], v001 = fc[o001], v010 = fc[o010], v011 = fc[o011];
                const double v100 = fc[o100], v101 = fc[o101], v110 = fc[o110], v111 = fc[o111];
                if (ax.interior) {
                    const double dval_du = fz0 * (fy0 * (v001 - v000) + fy1 * (v011 - v010)) +
                                           fz1 * (fy0 * (v101 - v100) + fy1 * (v111 - v110));
                    du += gv * dval_du;
                }
                if (ay.interior) {
                    const double dval_dv = fz0 * (fx0 * (v010 - v000) + fx1 * (v011 - v001)) +
                                           fz1 * (fx0 * (v110 - v100) + fx1 * (v111 - v101));
                    dv += gv * dval_dv;
                }
                if (az.interior) {
                    const double dval_dw = fy0 * (fx0 * (v100 - v000) + fx1 * (v101 - v001)) +
                                           fy1 * (fx0 * (v110 - v010) + fx1 * (v111 - v011));
                    dw += gv * dval_dw;
                }
            }
        }
        if (gpts) {
            gpts[v * 3 + 0] += static_cast<T>(du * map.A[0] + dv * map.A[3] + dw * map.A[6]);
            gpts[v * 3 + 1] += static_cast<T>(du * map.A[1] + dv * map.A[4] + dw * map.A[7]);
            gpts[v * 3 + 2] += static_cast<T>(du * map.A[2] + dv * map.A[5] + dw * map.A[8]);
        }
    }
}

}  // namespace

Tensor trilinear_sample(const Tensor& feature, const Tensor& points, const GridMap& map) {
    require(feature.rank() == 4, "trilinear_sample: feature must be [C,D,H,W], got " +
                                     shape_str(feature.shape()));
    require(points.rank() == 2 && points.dim(1) == 3,
            "trilinear_sample: points must be [V,3], got " + shape_str(points.shape()));
    require(feature.dtype() == points.dtype(), "trilinear_sample: dtype mismatch");
    for (std::int64_t i = 0; i < points.numel(); ++i)
        require(std::isfinite(points.value_at(i)), "trilinear_sample: non-finite point coordinate");

    const std::int64_t V = points.dim(0), C = feature.dim(0);
    NodePtr pf = feature.node(), pp = points.node();
    Tensor feat = feature, pts = points;
    Tensor out = detail::make_op({V, C}, feature.dtype(), {feature, points},
                                 [feat, pts, pf, pp, map](Node& o) {
        if (o.dtype == Dtype::F32) {
            trilinear_backward<float>(feat, pts, map, o.grad<float>(),
                                      pf->requires_grad ? pf->grad<float>() : nullptr,
                                      pp->requires_grad ? pp->grad<float>() : nullptr);
        } else {
            trilinear_backward<double>(feat, pts, map, o.grad<double>(),
                                       pf->requires_grad ? pf->grad<double>() : nullptr,
                                       pp->requires_grad ? pp->grad<double>() : nullptr);
        }
    });
    if (feature.dtype() == Dtype::F32)
        trilinear_forward<float>(feature, points, map, out.node()->val<float>());
    else
        trilinear_forward<double>(feature, points, map, out.node()->val<double>());
    return out;
}

}  // namespace voxmesh
