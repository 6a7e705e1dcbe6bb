#include "sflsim/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "sflsim/errors.hpp"

namespace sflsim {

void Batch::check_against(const ModelSpec& spec) const {
    if (!(shape == spec.input))
        throw shape_error("batch shape " + shape.str() + " does not match model input " +
                          spec.input.str());
    if (n < 1) throw shape_error("batch must contain at least one sample");
    if (x.size() != static_cast<std::size_t>(n) * shape.count())
        throw shape_error("batch buffer size disagrees with n and shape");
    if (!y.empty() && y.size() != static_cast<std::size_t>(n))
        throw shape_error("label count disagrees with batch size");
}

namespace {

// Geometry of a plain convolution mapping (ci,hi,wi) -> (f,ho,wo).
struct ConvGeom {
    int ci, hi, wi;
    int f, ho, wo;
    int k, s, p;
};

ConvGeom geom_of(const LayerSpec& l) {
    // For TConv the underlying convolution runs from the layer output back
    // to the layer input; forward is that convolution's input-gradient.
    if (l.kind == LayerKind::TConv)
        return {l.out.c, l.out.h, l.out.w, l.in.c, l.in.h, l.in.w, l.kernel, l.stride, l.pad};
    return {l.in.c, l.in.h, l.in.w, l.out.c, l.out.h, l.out.w, l.kernel, l.stride, l.pad};
}

// Valid output range along one axis for a fixed kernel offset: all o with
// 0 <= o*s - p + k0 < extent. Bounds hoisted so inner loops run guard-free.
struct AxisRange {
    int lo, hi; // [lo, hi)
};

AxisRange axis_range(int out_extent, int in_extent, int s, int p, int k0) {
    int lo = 0;
    while (lo < out_extent && lo * s - p + k0 < 0) ++lo;
    int hi = out_extent;
    while (hi > lo && (hi - 1) * s - p + k0 >= in_extent) --hi;
    return {lo, hi};
}

void conv_forward_one(const double* t, const double* W, const double* b, double* u,
                      const ConvGeom& g) {
    const int ocount = g.f * g.ho * g.wo;
    for (int i = 0; i < ocount; ++i) u[i] = 0.0;
    for (int f = 0; f < g.f; ++f) {
        double* uf = u + static_cast<std::size_t>(f) * g.ho * g.wo;
        for (int c = 0; c < g.ci; ++c) {
            const double* tc = t + static_cast<std::size_t>(c) * g.hi * g.wi;
            const double* wfc = W + (static_cast<std::size_t>(f) * g.ci + c) * g.k * g.k;
            for (int ky = 0; ky < g.k; ++ky) {
                const auto ry = axis_range(g.ho, g.hi, g.s, g.p, ky);
                for (int kx = 0; kx < g.k; ++kx) {
                    const double wv = wfc[ky * g.k + kx];
                    const auto rx = axis_range(g.wo, g.wi, g.s, g.p, kx);
                    for (int oy = ry.lo; oy < ry.hi; ++oy) {
                        const double* trow =
                            tc + static_cast<std::size_t>(oy * g.s - g.p + ky) * g.wi - g.p + kx;
                        double* urow = uf + static_cast<std::size_t>(oy) * g.wo;
                        if (g.s == 1) {
                            for (int ox = rx.lo; ox < rx.hi; ++ox) urow[ox] += wv * trow[ox];
                        } else {
                            for (int ox = rx.lo; ox < rx.hi; ++ox)
                                urow[ox] += wv * trow[ox * g.s];
                        }
                    }
                }
            }
        }
        if (b) {
            const double bv = b[f];
            for (int i = 0; i < g.ho * g.wo; ++i) uf[i] += bv;
        }
    }
}

void conv_input_grad_one(const double* du, const double* W, double* dt, const ConvGeom& g) {
    const int icount = g.ci * g.hi * g.wi;
    for (int i = 0; i < icount; ++i) dt[i] = 0.0;
    for (int f = 0; f < g.f; ++f) {
        const double* duf = du + static_cast<std::size_t>(f) * g.ho * g.wo;
        for (int c = 0; c < g.ci; ++c) {
            double* dtc = dt + static_cast<std::size_t>(c) * g.hi * g.wi;
            const double* wfc = W + (static_cast<std::size_t>(f) * g.ci + c) * g.k * g.k;
            for (int ky = 0; ky < g.k; ++ky) {
                const auto ry = axis_range(g.ho, g.hi, g.s, g.p, ky);
                for (int kx = 0; kx < g.k; ++kx) {
                    const double wv = wfc[ky * g.k + kx];
                    const auto rx = axis_range(g.wo, g.wi, g.s, g.p, kx);
                    for (int oy = ry.lo; oy < ry.hi; ++oy) {
                        double* drow =
                            dtc + static_cast<std::size_t>(oy * g.s - g.p + ky) * g.wi - g.p + kx;
                        const double* durow = duf + static_cast<std::size_t>(oy) * g.wo;
                        if (g.s == 1) {
                            for (int ox = rx.lo; ox < rx.hi; ++ox) drow[ox] += wv * durow[ox];
                        } else {
                            for (int ox = rx.lo; ox < rx.hi; ++ox)
                                drow[ox * g.s] += wv * durow[ox];
                        }
                    }
                }
            }
        }
    }
}

void conv_weight_grad_one(const double* t, const double* du, double* dW, const ConvGeom& g) {
    for (int f = 0; f < g.f; ++f) {
        const double* duf = du + static_cast<std::size_t>(f) * g.ho * g.wo;
        for (int c = 0; c < g.ci; ++c) {
            const double* tc = t + static_cast<std::size_t>(c) * g.hi * g.wi;
            double* dwfc = dW + (static_cast<std::size_t>(f) * g.ci + c) * g.k * g.k;
            for (int ky = 0; ky < g.k; ++ky) {
                const auto ry = axis_range(g.ho, g.hi, g.s, g.p, ky);
                for (int kx = 0; kx < g.k; ++kx) {
                    const auto rx = axis_range(g.wo, g.wi, g.s, g.p, kx);
                    double acc = 0.0;
                    for (int oy = ry.lo; oy < ry.hi; ++oy) {
                        const double* trow =
                            tc + static_cast<std::size_t>(oy * g.s - g.p + ky) * g.wi - g.p + kx;
                        const double* durow = duf + static_cast<std::size_t>(oy) * g.wo;
                        if (g.s == 1) {
                            for (int ox = rx.lo; ox < rx.hi; ++ox) acc += trow[ox] * durow[ox];
                        } else {
                            for (int ox = rx.lo; ox < rx.hi; ++ox)
                                acc += trow[ox * g.s] * durow[ox];
                        }
                    }
                    dwfc[ky * g.k + kx] += acc;
                }
            }
        }
    }
}

void dense_forward_one(const double* x, const double* W, const double* b, double* y, int in,
                       int out) {
    for (int o = 0; o < out; ++o) {
        const double* wrow = W + static_cast<std::size_t>(o) * in;
        double acc = b[o];
        for (int i = 0; i < in; ++i) acc += wrow[i] * x[i];
        y[o] = acc;
    }
}

} // namespace

const std::vector<double>& forward_pass(const ModelSpec& spec, const ParamVector& params,
                                        const Batch& batch, Workspace& ws) {
    batch.check_against(spec);
    if (params.size() != static_cast<std::size_t>(spec.param_count()))
        throw shape_error("parameter vector does not match spec");

    const std::size_t L = spec.layers.size();
    ws.outs.resize(L);
    ws.pool_idx.resize(L);
    ws.n = batch.n;

    const std::vector<double>* in = &batch.x;
    std::size_t off = 0;
    for (std::size_t li = 0; li < L; ++li) {
        const LayerSpec& l = spec.layers[li];
        const int ic = l.in.count(), oc = l.out.count();
        auto& out = ws.outs[li];
        out.resize(static_cast<std::size_t>(batch.n) * oc);
        const double* W = params.data() + off;
        const double* b = W + l.weight_count();

        switch (l.kind) {
        case LayerKind::Dense:
            for (int s = 0; s < batch.n; ++s)
                dense_forward_one(in->data() + static_cast<std::size_t>(s) * ic, W, b,
                                  out.data() + static_cast<std::size_t>(s) * oc, ic, oc);
            break;
        case LayerKind::Conv: {
            const ConvGeom g = geom_of(l);
            for (int s = 0; s < batch.n; ++s)
                conv_forward_one(in->data() + static_cast<std::size_t>(s) * ic, W, b,
                                 out.data() + static_cast<std::size_t>(s) * oc, g);
            break;
        }
        case LayerKind::TConv: {
            const ConvGeom g = geom_of(l);
            for (int s = 0; s < batch.n; ++s) {
                double* o = out.data() + static_cast<std::size_t>(s) * oc;
                conv_input_grad_one(in->data() + static_cast<std::size_t>(s) * ic, W, o, g);
                for (int ch = 0; ch < l.out.c; ++ch) {
                    const double bv = b[ch];
                    double* orow = o + static_cast<std::size_t>(ch) * l.out.h * l.out.w;
                    for (int i = 0; i < l.out.h * l.out.w; ++i) orow[i] += bv;
                }
            }
            break;
        }
        case LayerKind::ReLU:
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = (*in)[i] > 0.0 ? (*in)[i] : 0.0;
            break;
        case LayerKind::LeakyReLU:
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = (*in)[i] > 0.0 ? (*in)[i] : l.slope * (*in)[i];
            break;
        case LayerKind::Sigmoid:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-(*in)[i]));
            break;
        case LayerKind::MaxPool: {
            auto& idx = ws.pool_idx[li];
            idx.resize(out.size());
            const int k = l.kernel;
            for (int s = 0; s < batch.n; ++s) {
                const double* xin = in->data() + static_cast<std::size_t>(s) * ic;
                double* o = out.data() + static_cast<std::size_t>(s) * oc;
                int* pid = idx.data() + static_cast<std::size_t>(s) * oc;
                for (int c = 0; c < l.out.c; ++c) {
                    const double* xc = xin + static_cast<std::size_t>(c) * l.in.h * l.in.w;
                    for (int oy = 0; oy < l.out.h; ++oy) {
                        for (int ox = 0; ox < l.out.w; ++ox) {
                            int best = (oy * k) * l.in.w + ox * k;
                            double bv = xc[best];
                            for (int dy = 0; dy < k; ++dy)
                                for (int dx = 0; dx < k; ++dx) {
                                    const int i = (oy * k + dy) * l.in.w + ox * k + dx;
                                    if (xc[i] > bv) {
                                        bv = xc[i];
                                        best = i;
                                    }
                                }
                            const int oi = (c * l.out.h + oy) * l.out.w + ox;
                            o[oi] = bv;
                            pid[oi] = c * l.in.h * l.in.w + best;
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::Reshape:
            out = *in;
            break;
        }
        in = &out;
        off += static_cast<std::size_t>(l.param_count());
    }
    return ws.outs.back();
}

std::vector<double> forward(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
    Workspace ws;
    return forward_pass(spec, params, batch, ws);
}

void backward_pass(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
                   const Workspace& ws, const std::vector<double>& dout, ParamVector& grad,
                   std::vector<double>* dinput) {
    if (grad.size() != params.size()) throw shape_error("gradient buffer has wrong length");
    const std::size_t L = spec.layers.size();
    if (ws.outs.size() != L || ws.n != batch.n)
        throw shape_error("workspace does not match this spec/batch; run forward_pass first");
    if (dout.size() != ws.outs.back().size())
        throw shape_error("upstream gradient has wrong length");

    std::vector<double> dcur = dout, dprev;
    for (std::size_t li = L; li-- > 0;) {
        const LayerSpec& l = spec.layers[li];
        const int ic = l.in.count(), oc = l.out.count();
        const std::vector<double>& lin = (li == 0) ? batch.x : ws.outs[li - 1];
        const std::vector<double>& lout = ws.outs[li];
        const bool want_dprev = (li > 0) || (dinput != nullptr);
        if (want_dprev) dprev.assign(static_cast<std::size_t>(batch.n) * ic, 0.0);

        const std::size_t off = static_cast<std::size_t>(spec.param_offset(li));
        double* dW = grad.data() + off;
        double* db = dW + l.weight_count();
        const double* W = params.data() + off;

        switch (l.kind) {
        case LayerKind::Dense:
            for (int s = 0; s < batch.n; ++s) {
                const double* xi = lin.data() + static_cast<std::size_t>(s) * ic;
                const double* dy = dcur.data() + static_cast<std::size_t>(s) * oc;
                double* dx = want_dprev ? dprev.data() + static_cast<std::size_t>(s) * ic : nullptr;
                for (int o = 0; o < oc; ++o) {
                    const double d = dy[o];
                    db[o] += d;
                    double* dwrow = dW + static_cast<std::size_t>(o) * ic;
                    const double* wrow = W + static_cast<std::size_t>(o) * ic;
                    if (d != 0.0) {
                        for (int i = 0; i < ic; ++i) dwrow[i] += d * xi[i];
                        if (dx)
                            for (int i = 0; i < ic; ++i) dx[i] += d * wrow[i];
                    }
                }
            }
            break;
        case LayerKind::Conv: {
            const ConvGeom g = geom_of(l);
            for (int s = 0; s < batch.n; ++s) {
                const double* xi = lin.data() + static_cast<std::size_t>(s) * ic;
                const double* dy = dcur.data() + static_cast<std::size_t>(s) * oc;
                conv_weight_grad_one(xi, dy, dW, g);
                for (int f = 0; f < l.out.c; ++f) {
                    const double* dyf = dy + static_cast<std::size_t>(f) * l.out.h * l.out.w;
                    double acc = 0.0;
                    for (int i = 0; i < l.out.h * l.out.w; ++i) acc += dyf[i];
                    db[f] += acc;
                }
                if (want_dprev)
                    conv_input_grad_one(dy, W, dprev.data() + static_cast<std::size_t>(s) * ic, g);
            }
            break;
        }
        case LayerKind::TConv: {
            const ConvGeom g = geom_of(l);
            for (int s = 0; s < batch.n; ++s) {
                const double* xi = lin.data() + static_cast<std::size_t>(s) * ic;
                const double* dy = dcur.data() + static_cast<std::size_t>(s) * oc;
                // Bias and weight: dy plays the underlying convolution's
                // input role, the layer input plays its output role.
                for (int ch = 0; ch < l.out.c; ++ch) {
                    const double* dyc = dy + static_cast<std::size_t>(ch) * l.out.h * l.out.w;
                    double acc = 0.0;
                    for (int i = 0; i < l.out.h * l.out.w; ++i) acc += dyc[i];
                    db[ch] += acc;
                }
                conv_weight_grad_one(dy, xi, dW, g);
                if (want_dprev)
                    conv_forward_one(dy, W, nullptr, dprev.data() + static_cast<std::size_t>(s) * ic,
                                     g);
            }
            break;
        }
        case LayerKind::ReLU:
            if (want_dprev)
                for (std::size_t i = 0; i < dcur.size(); ++i)
                    dprev[i] = lout[i] > 0.0 ? dcur[i] : 0.0;
            break;
        case LayerKind::LeakyReLU:
            if (want_dprev)
                for (std::size_t i = 0; i < dcur.size(); ++i)
                    dprev[i] = lout[i] > 0.0 ? dcur[i] : l.slope * dcur[i];
            break;
        case LayerKind::Sigmoid:
            if (want_dprev)
                for (std::size_t i = 0; i < dcur.size(); ++i)
                    dprev[i] = dcur[i] * lout[i] * (1.0 - lout[i]);
            break;
        case LayerKind::MaxPool: {
            const auto& idx = ws.pool_idx[li];
            if (want_dprev)
                for (int s = 0; s < batch.n; ++s) {
                    const double* dy = dcur.data() + static_cast<std::size_t>(s) * oc;
                    double* dx = dprev.data() + static_cast<std::size_t>(s) * ic;
                    const int* pid = idx.data() + static_cast<std::size_t>(s) * oc;
                    for (int i = 0; i < oc; ++i) dx[pid[i]] += dy[i];
                }
            break;
        }
        case LayerKind::Reshape:
            if (want_dprev) dprev = dcur;
            break;
        }

        if (li == 0) {
            if (dinput) *dinput = std::move(dprev);
        } else {
            dcur = std::move(dprev);
        }
    }
}

double cross_entropy(const std::vector<double>& logits, int n, int num_classes,
                     const std::vector<int>& labels, std::vector<double>* dlogits) {
    if (logits.size() != static_cast<std::size_t>(n) * num_classes)
        throw shape_error("logits buffer size mismatch");
    if (labels.size() != static_cast<std::size_t>(n)) throw shape_error("label count mismatch");
    if (dlogits) dlogits->assign(logits.size(), 0.0);

    double total = 0.0;
    for (int s = 0; s < n; ++s) {
        const int y = labels[static_cast<std::size_t>(s)];
        if (y < 0 || y >= num_classes)
            throw shape_error("label " + std::to_string(y) + " out of range");
        const double* row = logits.data() + static_cast<std::size_t>(s) * num_classes;
        double m = row[0];
        for (int k = 1; k < num_classes; ++k) m = std::max(m, row[k]);
        double sum = 0.0;
        for (int k = 0; k < num_classes; ++k) sum += std::exp(row[k] - m);
        const double lse = m + std::log(sum);
        total += lse - row[y];
        if (dlogits) {
            double* drow = dlogits->data() + static_cast<std::size_t>(s) * num_classes;
            for (int k = 0; k < num_classes; ++k) drow[k] = std::exp(row[k] - lse) / n;
            drow[y] -= 1.0 / n;
        }
    }
    const double loss = total / n;
    if (!std::isfinite(loss)) throw numeric_error("non-finite cross-entropy loss");
    return loss;
}

double bce_with_logits(const std::vector<double>& scores, const std::vector<double>& targets,
                       std::vector<double>* dscores) {
    if (scores.size() != targets.size()) throw shape_error("score/target count mismatch");
    const std::size_t n = scores.size();
    if (n == 0) throw shape_error("empty score vector");
    if (dscores) dscores->assign(n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = scores[i], t = targets[i];
        total += std::max(s, 0.0) - s * t + std::log1p(std::exp(-std::abs(s)));
        if (dscores) (*dscores)[i] = (1.0 / (1.0 + std::exp(-s)) - t) / static_cast<double>(n);
    }
    return total / static_cast<double>(n);
}

namespace {

// Locates the first non-finite activation for diagnostics.
[[noreturn]] void report_non_finite(const Workspace& ws) {
    for (std::size_t li = 0; li < ws.outs.size(); ++li)
        for (double v : ws.outs[li])
            if (!std::isfinite(v))
                throw numeric_error("non-finite activation in layer " + std::to_string(li));
    throw numeric_error("non-finite value of unknown origin");
}

} // namespace

ParamVector backward(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
    ParamVector grad = pv::zeros_like(params);
    Trainer t(spec);
    t.gradient(params, batch, grad);
    return grad;
}

double Trainer::gradient(const ParamVector& params, const Batch& batch, ParamVector& grad) {
    const auto& logits = forward_pass(spec_, params, batch, ws_);
    for (double v : logits)
        if (!std::isfinite(v)) report_non_finite(ws_);
    const double loss = cross_entropy(logits, batch.n, spec_.output().count(), batch.y, &dlogits_);
    grad.assign(params.size(), 0.0);
    backward_pass(spec_, params, batch, ws_, dlogits_, grad);
    return loss;
}

void sgd_step(ModelState& state, const ParamVector& grad, double lr, double momentum,
              double weight_decay) {
    if (lr < 0.0) throw error("sgd_step: negative learning rate");
    pv::check_same_length(state.params, grad);
    if (state.opt_kind != OptKind::Sgd) state.reset_optimizer(OptKind::Sgd);
    double* w = state.params.data();
    double* v = state.opt_m.data();
    const double* g = grad.data();
    for (std::size_t i = 0; i < state.params.size(); ++i) {
        v[i] = momentum * v[i] + g[i] + weight_decay * w[i];
        w[i] -= lr * v[i];
    }
    ++state.opt_step;
}

void adam_step(ModelState& state, const ParamVector& grad, double lr, double beta1, double beta2,
               double eps) {
    if (lr < 0.0) throw error("adam_step: negative learning rate");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw error("adam_step: betas must lie in [0,1)");
    pv::check_same_length(state.params, grad);
    if (state.opt_kind != OptKind::Adam) state.reset_optimizer(OptKind::Adam);
    ++state.opt_step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.opt_step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.opt_step));
    double* w = state.params.data();
    double* m = state.opt_m.data();
    double* v = state.opt_v.data();
    const double* g = grad.data();
    for (std::size_t i = 0; i < state.params.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

} // namespace sflsim
