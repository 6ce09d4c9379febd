#include <algorithm>
#include <cmath>

#include "hyolo/tensor.hpp"

namespace hyolo {

namespace {

void validate(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const ConvSpec& spec) {
    const auto& is = input.shape();
    const auto& ws = weight.shape();
    const auto& bs = bias.shape();
    if (is.size() != 4) throw ShapeMismatch("conv2d: input must be NCHW");
    if (ws.size() != 4) throw ShapeMismatch("conv2d: weight must be {co,ci,k,k}");
    if (bs.size() != 1) throw ShapeMismatch("conv2d: bias must be rank 1");
    if (spec.kernel < 1 || spec.stride < 1 || spec.padding < 0)
        throw ShapeMismatch("conv2d: invalid spec");
    if (ws[0] != spec.out_channels || ws[1] != spec.in_channels ||
        ws[2] != spec.kernel || ws[3] != spec.kernel)
        throw ShapeMismatch("conv2d: weight shape does not match spec");
    if (bs[0] != spec.out_channels) throw ShapeMismatch("conv2d: bias length != out channels");
    if (is[1] != spec.in_channels) throw ShapeMismatch("conv2d: input channels != spec");
    const int oh = (is[2] + 2 * spec.padding - spec.kernel) / spec.stride + 1;
    const int ow = (is[3] + 2 * spec.padding - spec.kernel) / spec.stride + 1;
    if (oh < 1 || ow < 1) throw ShapeMismatch("conv2d: empty output");
}

// Output-x range for which ix = ox*s - p + kx stays inside [0, iw).
inline void valid_ox_range(int ow, int iw, int s, int p, int kx, int& lo, int& hi) {
    const int shift = p - kx;
    lo = shift > 0 ? (shift + s - 1) / s : 0;
    // largest ox with ox*s <= iw - 1 + shift
    const int top = iw - 1 + shift;
    hi = top < 0 ? 0 : std::min(ow, top / s + 1);
    lo = std::min(lo, hi);
}

} // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const ConvSpec& spec) {
    validate(input, weight, bias, spec);
    const auto& is = input.shape();
    const int n = is[0], ci = is[1], ih = is[2], iw = is[3];
    const int co = spec.out_channels, k = spec.kernel, s = spec.stride, p = spec.padding;
    const int oh = (ih + 2 * p - k) / s + 1;
    const int ow = (iw + 2 * p - k) / s + 1;

    const double* in = input.data().data();
    const double* w = weight.data().data();
    const double* b = bias.data().data();
    std::vector<double> out(static_cast<std::size_t>(n) * co * oh * ow);

    for (int ni = 0; ni < n; ++ni) {
        for (int oc = 0; oc < co; ++oc) {
            double* op = out.data() + (static_cast<std::int64_t>(ni) * co + oc) *
                                          static_cast<std::int64_t>(oh) * ow;
            for (int i = 0; i < oh * ow; ++i) op[i] = b[oc];
            for (int ic = 0; ic < ci; ++ic) {
                const double* ip = in + (static_cast<std::int64_t>(ni) * ci + ic) *
                                            static_cast<std::int64_t>(ih) * iw;
                const double* wp = w + ((static_cast<std::int64_t>(oc) * ci + ic) * k) * k;
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const double wv = wp[ky * k + kx];
                        if (wv == 0.0) continue;
                        int lo, hi;
                        valid_ox_range(ow, iw, s, p, kx, lo, hi);
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * s - p + ky;
                            if (iy < 0 || iy >= ih) continue;
                            const double* irow = ip + static_cast<std::int64_t>(iy) * iw;
                            double* orow = op + static_cast<std::int64_t>(oy) * ow;
                            const int off = kx - p;
                            if (s == 1) {
                                for (int ox = lo; ox < hi; ++ox)
                                    orow[ox] += wv * irow[ox + off];
                            } else {
                                for (int ox = lo; ox < hi; ++ox)
                                    orow[ox] += wv * irow[static_cast<std::int64_t>(ox) * s + off];
                            }
                        }
                    }
                }
            }
        }
    }

    return make_op({n, co, oh, ow}, std::move(out), {input, weight, bias},
                   [spec](detail::TensorNode& self) {
        detail::TensorNode* pin = self.parent_node(0);
        detail::TensorNode* pw = self.parent_node(1);
        detail::TensorNode* pb = self.parent_node(2);
        pin->ensure_grad();
        pw->ensure_grad();
        pb->ensure_grad();

        const int n = pin->shape[0], ci = pin->shape[1], ih = pin->shape[2], iw = pin->shape[3];
        const int co = spec.out_channels, k = spec.kernel, s = spec.stride, p = spec.padding;
        const int oh = self.shape[2], ow = self.shape[3];
        const double* in = pin->data.data();
        const double* w = pw->data.data();
        const double* go = self.grad.data();

        for (int ni = 0; ni < n; ++ni) {
            for (int oc = 0; oc < co; ++oc) {
                const double* gp = go + (static_cast<std::int64_t>(ni) * co + oc) *
                                            static_cast<std::int64_t>(oh) * ow;
                double gb = 0;
                for (int i = 0; i < oh * ow; ++i) gb += gp[i];
                pb->grad[oc] += gb;
                for (int ic = 0; ic < ci; ++ic) {
                    const double* ip = in + (static_cast<std::int64_t>(ni) * ci + ic) *
                                                static_cast<std::int64_t>(ih) * iw;
                    double* gip = pin->grad.data() + (static_cast<std::int64_t>(ni) * ci + ic) *
                                                         static_cast<std::int64_t>(ih) * iw;
                    const std::int64_t wbase = (static_cast<std::int64_t>(oc) * ci + ic) *
                                               static_cast<std::int64_t>(k) * k;
                    for (int ky = 0; ky < k; ++ky) {
                        for (int kx = 0; kx < k; ++kx) {
                            const double wv = w[wbase + ky * k + kx];
                            double gw = 0;
                            int lo, hi;
                            valid_ox_range(ow, iw, s, p, kx, lo, hi);
                            for (int oy = 0; oy < oh; ++oy) {
                                const int iy = oy * s - p + ky;
                                if (iy < 0 || iy >= ih) continue;
                                const double* irow = ip + static_cast<std::int64_t>(iy) * iw;
                                double* girow = gip + static_cast<std::int64_t>(iy) * iw;
                                const double* grow = gp + static_cast<std::int64_t>(oy) * ow;
                                const int off = kx - p;
                                if (s == 1) {
                                    for (int ox = lo; ox < hi; ++ox) {
                                        gw += grow[ox] * irow[ox + off];
                                        girow[ox + off] += grow[ox] * wv;
                                    }
                                } else {
                                    for (int ox = lo; ox < hi; ++ox) {
                                        const std::int64_t ix = static_cast<std::int64_t>(ox) * s + off;
                                        gw += grow[ox] * irow[ix];
                                        girow[ix] += grow[ox] * wv;
                                    }
                                }
                            }
                            pw->grad[wbase + ky * k + kx] += gw;
                        }
                    }
                }
            }
        }
    });
}

} // namespace hyolo
