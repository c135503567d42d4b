#include "lczlab/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "kernels.hpp"
#include "lczlab/error.hpp"

namespace lcz {

void trace_bit(bool bit) noexcept;
void trace_index(std::size_t index) noexcept;

namespace {

thread_local BranchTrace* g_trace = nullptr;

bool recording(std::initializer_list<const Tensor*> inputs) {
    if (Tape::active() == nullptr) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

void attach(Tensor& out, Tape::BackwardFn fn) {
    out.set_requires_grad(true);
    Tape::active()->record(std::move(fn));
}

[[noreturn]] void shape_error(const std::string& op, const std::string& what, const Shape& a, const Shape& b) {
    throw DimensionError(op + ": " + what + " (" + shape_str(a) + " vs " + shape_str(b) + ")");
}

void require_rank(const std::string& op, const Tensor& t, std::size_t rank) {
    if (t.rank() != rank) {
        throw DimensionError(op + ": expected rank " + std::to_string(rank) + ", got shape " + shape_str(t.shape()));
    }
}

void im2col(const Real* x, std::size_t C, std::size_t H, std::size_t W, std::size_t k, std::size_t pad,
            std::size_t OH, std::size_t OW, Real* cols) {
    const std::size_t plane = OH * OW;
    for (std::size_t c = 0; c < C; ++c) {
        const Real* xc = x + c * H * W;
        for (std::size_t ki = 0; ki < k; ++ki) {
            for (std::size_t kj = 0; kj < k; ++kj) {
                Real* dst = cols + ((c * k + ki) * k + kj) * plane;
                for (std::size_t oh = 0; oh < OH; ++oh) {
                    const auto ih = static_cast<std::ptrdiff_t>(oh + ki) - static_cast<std::ptrdiff_t>(pad);
                    Real* row = dst + oh * OW;
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) {
                        std::fill(row, row + OW, Real(0));
                        continue;
                    }
                    const Real* src = xc + static_cast<std::size_t>(ih) * W;
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        const auto iw = static_cast<std::ptrdiff_t>(ow + kj) - static_cast<std::ptrdiff_t>(pad);
                        row[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) ? Real(0)
                                                                                      : src[static_cast<std::size_t>(iw)];
                    }
                }
            }
        }
    }
}

void col2im_add(const Real* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t k, std::size_t pad,
                std::size_t OH, std::size_t OW, Real* x) {
    const std::size_t plane = OH * OW;
    for (std::size_t c = 0; c < C; ++c) {
        Real* xc = x + c * H * W;
        for (std::size_t ki = 0; ki < k; ++ki) {
            for (std::size_t kj = 0; kj < k; ++kj) {
                const Real* src = cols + ((c * k + ki) * k + kj) * plane;
                for (std::size_t oh = 0; oh < OH; ++oh) {
                    const auto ih = static_cast<std::ptrdiff_t>(oh + ki) - static_cast<std::ptrdiff_t>(pad);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                    Real* dst = xc + static_cast<std::size_t>(ih) * W;
                    const Real* row = src + oh * OW;
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        const auto iw = static_cast<std::ptrdiff_t>(ow + kj) - static_cast<std::ptrdiff_t>(pad);
                        if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                        dst[static_cast<std::size_t>(iw)] += row[ow];
                    }
                }
            }
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// branch tracing

BranchTrace::BranchTrace() noexcept : previous_(g_trace) { g_trace = this; }
BranchTrace::~BranchTrace() { g_trace = previous_; }

void trace_bit(bool bit) noexcept {
    if (g_trace == nullptr) return;
    g_trace->digest_ = (g_trace->digest_ ^ (bit ? 0x9eu : 0x35u)) * 1099511628211ull;
}

void trace_index(std::size_t index) noexcept {
    if (g_trace == nullptr) return;
    g_trace->digest_ = (g_trace->digest_ ^ (index + 0x51u)) * 1099511628211ull;
}

// ---------------------------------------------------------------------------
// convolution

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Padding padding) {
    require_rank("conv2d", input, 4);
    require_rank("conv2d", kernel, 4);
    const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::size_t F = kernel.dim(0), k = kernel.dim(2);
    if (kernel.dim(1) != C) shape_error("conv2d", "input channels differ from kernel input channels", input.shape(), kernel.shape());
    if (kernel.dim(3) != k) shape_error("conv2d", "kernel must be square", input.shape(), kernel.shape());
    if (bias.numel() != F) shape_error("conv2d", "bias length differs from filter count", kernel.shape(), bias.shape());
    std::size_t pad = 0;
    if (padding == Padding::same) {
        if (k % 2 == 0) shape_error("conv2d", "same padding needs an odd kernel", input.shape(), kernel.shape());
        pad = (k - 1) / 2;
    } else if (k > H || k > W) {
        shape_error("conv2d", "kernel larger than input under valid padding", input.shape(), kernel.shape());
    }
    const std::size_t OH = H + 2 * pad - k + 1, OW = W + 2 * pad - k + 1;
    const std::size_t plane = OH * OW, patch = C * k * k;
    const bool direct = (k == 1 && pad == 0);

    Tensor out(Shape{N, F, OH, OW});
    {
        std::vector<Real> cols(direct ? 0 : patch * plane);
        const Real* w = kernel.data().data();
        const Real* b = bias.data().data();
        for (std::size_t n = 0; n < N; ++n) {
            const Real* xn = input.data().data() + n * C * H * W;
            Real* on = out.data().data() + n * F * plane;
            for (std::size_t f = 0; f < F; ++f) std::fill(on + f * plane, on + (f + 1) * plane, b[f]);
            const Real* src = xn;
            if (!direct) {
                im2col(xn, C, H, W, k, pad, OH, OW, cols.data());
                src = cols.data();
            }
            kernels::gemm_nn(F, plane, patch, w, src, on);
        }
    }

    if (recording({&input, &kernel, &bias})) {
        attach(out, [input, kernel, bias, out, N, C, H, W, F, k, pad, OH, OW, plane, patch, direct]() mutable {
            if (!out.has_grad()) return;
            const Real* gout = out.grad().data();
            std::vector<Real> cols(direct ? 0 : patch * plane);
            std::vector<Real> dcols(input.requires_grad() && !direct ? patch * plane : 0);
            Real* gw = kernel.requires_grad() ? kernel.ensure_grad().data() : nullptr;
            Real* gb = bias.requires_grad() ? bias.ensure_grad().data() : nullptr;
            Real* gx = input.requires_grad() ? input.ensure_grad().data() : nullptr;
            const Real* w = kernel.data().data();
            for (std::size_t n = 0; n < N; ++n) {
                const Real* gn = gout + n * F * plane;
                const Real* xn = input.data().data() + n * C * H * W;
                if (gb) {
                    for (std::size_t f = 0; f < F; ++f) {
                        Real s = 0;
                        for (std::size_t j = 0; j < plane; ++j) s += gn[f * plane + j];
                        gb[f] += s;
                    }
                }
                if (gw) {
                    const Real* src = xn;
                    if (!direct) {
                        im2col(xn, C, H, W, k, pad, OH, OW, cols.data());
                        src = cols.data();
                    }
                    kernels::gemm_nt(F, patch, plane, gn, src, gw);
                }
                if (gx) {
                    Real* gxn = gx + n * C * H * W;
                    if (direct) {
                        kernels::gemm_tn(patch, plane, F, w, gn, gxn);
                    } else {
                        std::fill(dcols.begin(), dcols.end(), Real(0));
                        kernels::gemm_tn(patch, plane, F, w, gn, dcols.data());
                        col2im_add(dcols.data(), C, H, W, k, pad, OH, OW, gxn);
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// batch normalization

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormState& state, Mode mode,
                   BatchNormOptions options) {
    require_rank("batchnorm2d", input, 4);
    const std::size_t N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
    if (gamma.numel() != C || beta.numel() != C) {
        shape_error("batchnorm2d", "affine parameters must have one entry per channel", input.shape(), gamma.shape());
    }
    if (state.running_mean.numel() != C || state.running_var.numel() != C) {
        shape_error("batchnorm2d", "running statistics must have one entry per channel", input.shape(),
                    state.running_mean.shape());
    }
    const std::size_t count = N * HW;
    if (mode == Mode::train && count < 2) {
        throw DataError("batchnorm2d: degenerate variance, train mode needs at least two values per channel, got input " +
                        shape_str(input.shape()));
    }

    Tensor out(input.shape());
    auto xhat = std::make_shared<std::vector<Real>>(input.numel());
    std::vector<Real> inv_std(C);
    const Real* x = input.data().data();
    Real* y = out.data().data();
    const Real* g = gamma.data().data();
    const Real* b = beta.data().data();

    for (std::size_t c = 0; c < C; ++c) {
        Real mean = 0, var = 0;
        if (mode == Mode::train) {
            double s = 0;
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t j = 0; j < HW; ++j) s += x[(n * C + c) * HW + j];
            const double m = s / static_cast<double>(count);
            double ss = 0;
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t j = 0; j < HW; ++j) {
                    const double d = x[(n * C + c) * HW + j] - m;
                    ss += d * d;
                }
            const double v = ss / static_cast<double>(count);
            mean = static_cast<Real>(m);
            var = static_cast<Real>(v);
            auto rm = state.running_mean.data();
            auto rv = state.running_var.data();
            const double unbiased = ss / static_cast<double>(count - 1);
            rm[c] = static_cast<Real>((1.0 - options.momentum) * rm[c] + options.momentum * m);
            rv[c] = static_cast<Real>((1.0 - options.momentum) * rv[c] + options.momentum * unbiased);
        } else {
            mean = state.running_mean[c];
            var = state.running_var[c];
        }
        const Real is = Real(1) / std::sqrt(var + options.eps);
        inv_std[c] = is;
        for (std::size_t n = 0; n < N; ++n) {
            const std::size_t base = (n * C + c) * HW;
            for (std::size_t j = 0; j < HW; ++j) {
                const Real h = (x[base + j] - mean) * is;
                (*xhat)[base + j] = h;
                y[base + j] = g[c] * h + b[c];
            }
        }
    }

    if (recording({&input, &gamma, &beta})) {
        attach(out, [input, gamma, beta, out, xhat, inv_std, mode, N, C, HW, count]() mutable {
            if (!out.has_grad()) return;
            const Real* gy = out.grad().data();
            const Real* gm = gamma.data().data();
            Real* gg = gamma.requires_grad() ? gamma.ensure_grad().data() : nullptr;
            Real* gbeta = beta.requires_grad() ? beta.ensure_grad().data() : nullptr;
            Real* gx = input.requires_grad() ? input.ensure_grad().data() : nullptr;
            const auto& h = *xhat;
            for (std::size_t c = 0; c < C; ++c) {
                double sum_dy = 0, sum_dy_h = 0;
                for (std::size_t n = 0; n < N; ++n) {
                    const std::size_t base = (n * C + c) * HW;
                    for (std::size_t j = 0; j < HW; ++j) {
                        sum_dy += gy[base + j];
                        sum_dy_h += gy[base + j] * h[base + j];
                    }
                }
                if (gg) gg[c] += static_cast<Real>(sum_dy_h);
                if (gbeta) gbeta[c] += static_cast<Real>(sum_dy);
                if (!gx) continue;
                const Real k = gm[c] * inv_std[c];
                if (mode == Mode::train) {
                    const Real mean_dy = static_cast<Real>(sum_dy / static_cast<double>(count));
                    const Real mean_dy_h = static_cast<Real>(sum_dy_h / static_cast<double>(count));
                    for (std::size_t n = 0; n < N; ++n) {
                        const std::size_t base = (n * C + c) * HW;
                        for (std::size_t j = 0; j < HW; ++j)
                            gx[base + j] += k * (gy[base + j] - mean_dy - h[base + j] * mean_dy_h);
                    }
                } else {
                    for (std::size_t n = 0; n < N; ++n) {
                        const std::size_t base = (n * C + c) * HW;
                        for (std::size_t j = 0; j < HW; ++j) gx[base + j] += k * gy[base + j];
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// dropout

Tensor spatial_dropout(const Tensor& input, double rate, Mode mode, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ParameterError("spatial_dropout: rate must lie in [0,1), got " + std::to_string(rate));
    }
    require_rank("spatial_dropout", input, 4);
    if (mode == Mode::infer || rate == 0.0) return input;

    const std::size_t maps = input.dim(0) * input.dim(1);
    const std::size_t HW = input.dim(2) * input.dim(3);
    const Real keep_scale = static_cast<Real>(1.0 / (1.0 - rate));
    auto mask = std::make_shared<std::vector<Real>>(maps);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto& m : *mask) m = unit(rng) < rate ? Real(0) : keep_scale;

    Tensor out(input.shape());
    const Real* x = input.data().data();
    Real* y = out.data().data();
    for (std::size_t m = 0; m < maps; ++m) {
        const Real s = (*mask)[m];
        for (std::size_t j = 0; j < HW; ++j) y[m * HW + j] = x[m * HW + j] * s;
    }
    if (recording({&input})) {
        attach(out, [input, out, mask, maps, HW]() mutable {
            if (!out.has_grad()) return;
            const Real* gy = out.grad().data();
            Real* gx = input.ensure_grad().data();
            for (std::size_t m = 0; m < maps; ++m) {
                const Real s = (*mask)[m];
                for (std::size_t j = 0; j < HW; ++j) gx[m * HW + j] += gy[m * HW + j] * s;
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// pointwise and pooling

Tensor relu(const Tensor& input) {
    Tensor out(input.shape());
    const Real* x = input.data().data();
    Real* y = out.data().data();
    const std::size_t n = input.numel();
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > Real(0) ? x[i] : Real(0);
    if (g_trace != nullptr)
        for (std::size_t i = 0; i < n; ++i) trace_bit(x[i] > Real(0));
    if (recording({&input})) {
        attach(out, [input, out, n]() mutable {
            if (!out.has_grad()) return;
            const Real* gy = out.grad().data();
            const Real* x = input.data().data();
            Real* gx = input.ensure_grad().data();
            for (std::size_t i = 0; i < n; ++i)
                if (x[i] > Real(0)) gx[i] += gy[i];
        });
    }
    return out;
}

Tensor maxpool2d(const Tensor& input, std::size_t window) {
    require_rank("maxpool2d", input, 4);
    if (window == 0) throw ParameterError("maxpool2d: window must be positive");
    const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    if (H < window || W < window) {
        shape_error("maxpool2d", "input smaller than pooling window", input.shape(), Shape{window, window});
    }
    const std::size_t OH = H / window, OW = W / window;
    Tensor out(Shape{N, C, OH, OW});
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
    const Real* x = input.data().data();
    Real* y = out.data().data();
    std::size_t o = 0;
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const Real* plane = x + nc * H * W;
        for (std::size_t oh = 0; oh < OH; ++oh) {
            for (std::size_t ow = 0; ow < OW; ++ow, ++o) {
                std::size_t best = (oh * window) * W + ow * window;
                for (std::size_t di = 0; di < window; ++di)
                    for (std::size_t dj = 0; dj < window; ++dj) {
                        const std::size_t idx = (oh * window + di) * W + ow * window + dj;
                        if (plane[idx] > plane[best]) best = idx;
                    }
                (*argmax)[o] = nc * H * W + best;
                y[o] = plane[best];
                trace_index(best);
            }
        }
    }
    if (recording({&input})) {
        attach(out, [input, out, argmax]() mutable {
            if (!out.has_grad()) return;
            const Real* gy = out.grad().data();
            Real* gx = input.ensure_grad().data();
            for (std::size_t i = 0; i < argmax->size(); ++i) gx[(*argmax)[i]] += gy[i];
        });
    }
    return out;
}

Tensor global_avg_pool(const Tensor& input) {
    require_rank("global_avg_pool", input, 4);
    const std::size_t N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
    Tensor out(Shape{N, C});
    const Real* x = input.data().data();
    const Real inv = Real(1) / static_cast<Real>(HW);
    for (std::size_t m = 0; m < N * C; ++m) {
        Real s = 0;
        for (std::size_t j = 0; j < HW; ++j) s += x[m * HW + j];
        out[m] = s * inv;
    }
    if (recording({&input})) {
        attach(out, [input, out, N, C, HW, inv]() mutable {
            if (!out.has_grad()) return;
            const Real* gy = out.grad().data();
            Real* gx = input.ensure_grad().data();
            for (std::size_t m = 0; m < N * C; ++m) {
                const Real g = gy[m] * inv;
                for (std::size_t j = 0; j < HW; ++j) gx[m * HW + j] += g;
            }
        });
    }
    return out;
}

Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    if (input.rank() < 2) throw DimensionError("dense: input needs rank >= 2, got " + shape_str(input.shape()));
    require_rank("dense", weight, 2);
    const std::size_t I = input.shape().back();
    const std::size_t O = weight.dim(0);
    if (weight.dim(1) != I) shape_error("dense", "input features differ from weight columns", input.shape(), weight.shape());
    if (bias.numel() != O) shape_error("dense", "bias length differs from output features", weight.shape(), bias.shape());
    const std::size_t rows = input.numel() / I;
    Shape out_shape = input.shape();
    out_shape.back() = O;
    Tensor out(out_shape);
    Real* y = out.data().data();
    for (std::size_t r = 0; r < rows; ++r) std::copy(bias.data().begin(), bias.data().end(), y + r * O);
    kernels::gemm_nt(rows, O, I, input.data().data(), weight.data().data(), y);
    if (recording({&input, &weight, &bias})) {
        attach(out, [input, weight, bias, out, rows, I, O]() mutable {
            if (!out.has_grad()) return;
            const Real* gy = out.grad().data();
            if (input.requires_grad())
                kernels::gemm_nn(rows, I, O, gy, weight.data().data(), input.ensure_grad().data());
            if (weight.requires_grad())
                kernels::gemm_tn(O, I, rows, gy, input.data().data(), weight.ensure_grad().data());
            if (bias.requires_grad()) {
                Real* gb = bias.ensure_grad().data();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t o = 0; o < O; ++o) gb[o] += gy[r * O + o];
            }
        });
    }
    return out;
}

Tensor softmax(const Tensor& input) {
    const std::size_t K = input.shape().back();
    const std::size_t rows = input.numel() / K;
    Tensor out(input.shape());
    const Real* x = input.data().data();
    Real* y = out.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* xr = x + r * K;
        Real* yr = y + r * K;
        const Real mx = *std::max_element(xr, xr + K);
        Real s = 0;
        for (std::size_t j = 0; j < K; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            s += yr[j];
        }
        const Real inv = Real(1) / s;
        for (std::size_t j = 0; j < K; ++j) yr[j] *= inv;
    }
    if (recording({&input})) {
        attach(out, [input, out, rows, K]() mutable {
            if (!out.has_grad()) return;
            const Real* gy = out.grad().data();
            const Real* y = out.data().data();
            Real* gx = input.ensure_grad().data();
            for (std::size_t r = 0; r < rows; ++r) {
                Real dot = 0;
                for (std::size_t j = 0; j < K; ++j) dot += gy[r * K + j] * y[r * K + j];
                for (std::size_t j = 0; j < K; ++j) gx[r * K + j] += y[r * K + j] * (gy[r * K + j] - dot);
            }
        });
    }
    return out;
}

Tensor concat_channels(std::span<const Tensor> inputs) {
    if (inputs.empty()) throw DimensionError("concat_channels: no inputs");
    const Shape& ref = inputs.front().shape();
    if (ref.size() < 2) throw DimensionError("concat_channels: inputs need rank >= 2, got " + shape_str(ref));
    std::size_t total_c = 0;
    for (const auto& t : inputs) {
        const Shape& s = t.shape();
        bool ok = s.size() == ref.size() && s[0] == ref[0];
        for (std::size_t a = 2; ok && a < s.size(); ++a) ok = s[a] == ref[a];
        if (!ok) shape_error("concat_channels", "non-channel extents differ", ref, s);
        total_c += s[1];
    }
    const std::size_t N = ref[0];
    std::size_t inner = 1;
    for (std::size_t a = 2; a < ref.size(); ++a) inner *= ref[a];
    Shape out_shape = ref;
    out_shape[1] = total_c;
    Tensor out(out_shape);
    std::vector<Tensor> parts(inputs.begin(), inputs.end());
    std::size_t offset = 0;
    for (const auto& t : parts) {
        const std::size_t block = t.dim(1) * inner;
        for (std::size_t n = 0; n < N; ++n) {
            std::copy_n(t.data().data() + n * block, block, out.data().data() + n * total_c * inner + offset);
        }
        offset += block;
    }
    bool any = false;
    if (Tape::active() != nullptr)
        for (const auto& t : parts) any = any || t.requires_grad();
    if (any) {
        attach(out, [parts, out, N, inner, total_c]() mutable {
            if (!out.has_grad()) return;
            const Real* gy = out.grad().data();
            std::size_t offset = 0;
            for (auto& t : parts) {
                const std::size_t block = t.dim(1) * inner;
                if (t.requires_grad()) {
                    Real* gx = t.ensure_grad().data();
                    for (std::size_t n = 0; n < N; ++n) {
                        const Real* src = gy + n * total_c * inner + offset;
                        for (std::size_t j = 0; j < block; ++j) gx[n * block + j] += src[j];
                    }
                }
                offset += block;
            }
        });
    }
    return out;
}

Tensor elementwise_mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_error("elementwise_mul", "shapes differ", a.shape(), b.shape());
    Tensor out(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
    if (recording({&a, &b})) {
        attach(out, [a, b, out, n]() mutable {
            if (!out.has_grad()) return;
            const Real* gy = out.grad().data();
            if (a.requires_grad()) {
                Real* ga = a.ensure_grad().data();
                for (std::size_t i = 0; i < n; ++i) ga[i] += gy[i] * b[i];
            }
            if (b.requires_grad()) {
                Real* gb = b.ensure_grad().data();
                for (std::size_t i = 0; i < n; ++i) gb[i] += gy[i] * a[i];
            }
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_error("add", "shapes differ", a.shape(), b.shape());
    Tensor out(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
    if (recording({&a, &b})) {
        attach(out, [a, b, out, n]() mutable {
            if (!out.has_grad()) return;
            const Real* gy = out.grad().data();
            if (a.requires_grad()) {
                Real* ga = a.ensure_grad().data();
                for (std::size_t i = 0; i < n; ++i) ga[i] += gy[i];
            }
            if (b.requires_grad()) {
                Real* gb = b.ensure_grad().data();
                for (std::size_t i = 0; i < n; ++i) gb[i] += gy[i];
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& input, Real factor) {
    Tensor out(input.shape());
    const std::size_t n = input.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = input[i] * factor;
    if (recording({&input})) {
        attach(out, [input, out, n, factor]() mutable {
            if (!out.has_grad()) return;
            const Real* gy = out.grad().data();
            Real* gx = input.ensure_grad().data();
            for (std::size_t i = 0; i < n; ++i) gx[i] += gy[i] * factor;
        });
    }
    return out;
}

Tensor convex_combination(const Tensor& a, const Tensor& b, Real alpha) {
    if (a.shape() != b.shape()) shape_error("convex_combination", "shapes differ", a.shape(), b.shape());
    if (!(alpha >= Real(0) && alpha <= Real(1))) {
        throw ParameterError("convex_combination: alpha must lie in [0,1], got " + std::to_string(alpha));
    }
    const Real beta = Real(1) - alpha;
    Tensor out(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = alpha * a[i] + beta * b[i];
    if (recording({&a, &b})) {
        attach(out, [a, b, out, n, alpha, beta]() mutable {
            if (!out.has_grad()) return;
            const Real* gy = out.grad().data();
            if (a.requires_grad()) {
                Real* ga = a.ensure_grad().data();
                for (std::size_t i = 0; i < n; ++i) ga[i] += gy[i] * alpha;
            }
            if (b.requires_grad()) {
                Real* gb = b.ensure_grad().data();
                for (std::size_t i = 0; i < n; ++i) gb[i] += gy[i] * beta;
            }
        });
    }
    return out;
}

Tensor sum(const Tensor& input) {
    Real s = 0;
    for (Real v : input.data()) s += v;
    Tensor out = Tensor::scalar(s);
    if (recording({&input})) {
        attach(out, [input, out]() mutable {
            if (!out.has_grad()) return;
            const Real g = out.grad()[0];
            for (Real& v : input.ensure_grad()) v += g;
        });
    }
    return out;
}

Tensor reshape(const Tensor& input, Shape shape) {
    if (shape_numel(shape) != input.numel()) shape_error("reshape", "element counts differ", input.shape(), shape);
    Tensor out(std::move(shape), std::vector<Real>(input.data().begin(), input.data().end()));
    if (recording({&input})) {
        attach(out, [input, out]() mutable {
            if (!out.has_grad()) return;
            auto gy = out.grad();
            auto gx = input.ensure_grad();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
        });
    }
    return out;
}

Tensor gather_channels(const Tensor& input, std::span<const std::size_t> channels) {
    if (input.rank() < 2) throw DimensionError("gather_channels: input needs rank >= 2, got " + shape_str(input.shape()));
    if (channels.empty()) throw DimensionError("gather_channels: empty channel list");
    const std::size_t N = input.dim(0), C = input.dim(1);
    const std::size_t inner = input.numel() / (N * C);
    for (auto c : channels) {
        if (c >= C) throw DimensionError("gather_channels: channel " + std::to_string(c) + " out of range for " +
                                         shape_str(input.shape()));
    }
    Shape out_shape = input.shape();
    out_shape[1] = channels.size();
    Tensor out(out_shape);
    std::vector<std::size_t> idx(channels.begin(), channels.end());
    const std::size_t G = idx.size();
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t g = 0; g < G; ++g)
            std::copy_n(input.data().data() + (n * C + idx[g]) * inner, inner, out.data().data() + (n * G + g) * inner);
    if (recording({&input})) {
        attach(out, [input, out, idx, N, C, G, inner]() mutable {
            if (!out.has_grad()) return;
            const Real* gy = out.grad().data();
            Real* gx = input.ensure_grad().data();
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t g = 0; g < G; ++g) {
                    const Real* src = gy + (n * G + g) * inner;
                    Real* dst = gx + (n * C + idx[g]) * inner;
                    for (std::size_t j = 0; j < inner; ++j) dst[j] += src[j];
                }
        });
    }
    return out;
}

Tensor to_sequence(const Tensor& input) {
    require_rank("to_sequence", input, 4);
    const std::size_t N = input.dim(0), C = input.dim(1), L = input.dim(2) * input.dim(3);
    Tensor out(Shape{N, L, C});
    const Real* x = input.data().data();
    Real* y = out.data().data();
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t l = 0; l < L; ++l) y[(n * L + l) * C + c] = x[(n * C + c) * L + l];
    if (recording({&input})) {
        attach(out, [input, out, N, C, L]() mutable {
            if (!out.has_grad()) return;
            const Real* gy = out.grad().data();
            Real* gx = input.ensure_grad().data();
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t l = 0; l < L; ++l) gx[(n * C + c) * L + l] += gy[(n * L + l) * C + c];
        });
    }
    return out;
}

Tensor from_sequence(const Tensor& input, std::size_t height, std::size_t width) {
    require_rank("from_sequence", input, 3);
    const std::size_t N = input.dim(0), L = input.dim(1), C = input.dim(2);
    if (L != height * width) {
        shape_error("from_sequence", "sequence length differs from height*width", input.shape(), Shape{height, width});
    }
    Tensor out(Shape{N, C, height, width});
    const Real* x = input.data().data();
    Real* y = out.data().data();
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t l = 0; l < L; ++l) y[(n * C + c) * L + l] = x[(n * L + l) * C + c];
    if (recording({&input})) {
        attach(out, [input, out, N, C, L]() mutable {
            if (!out.has_grad()) return;
            const Real* gy = out.grad().data();
            Real* gx = input.ensure_grad().data();
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t l = 0; l < L; ++l) gx[(n * L + l) * C + c] += gy[(n * C + c) * L + l];
        });
    }
    return out;
}

Tensor upsample_nearest2x(const Tensor& input) {
    require_rank("upsample_nearest2x", input, 4);
    const std::size_t NC = input.dim(0) * input.dim(1), H = input.dim(2), W = input.dim(3);
    Tensor out(Shape{input.dim(0), input.dim(1), 2 * H, 2 * W});
    const Real* x = input.data().data();
    Real* y = out.data().data();
    for (std::size_t m = 0; m < NC; ++m)
        for (std::size_t i = 0; i < 2 * H; ++i)
            for (std::size_t j = 0; j < 2 * W; ++j) y[(m * 2 * H + i) * 2 * W + j] = x[(m * H + i / 2) * W + j / 2];
    if (recording({&input})) {
        attach(out, [input, out, NC, H, W]() mutable {
            if (!out.has_grad()) return;
            const Real* gy = out.grad().data();
            Real* gx = input.ensure_grad().data();
            for (std::size_t m = 0; m < NC; ++m)
                for (std::size_t i = 0; i < 2 * H; ++i)
                    for (std::size_t j = 0; j < 2 * W; ++j)
                        gx[(m * H + i / 2) * W + j / 2] += gy[(m * 2 * H + i) * 2 * W + j];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// attention

Tensor scaled_dot_product_attention(const Tensor& query, const Tensor& key, const Tensor& value, std::size_t heads) {
    require_rank("attention", query, 3);
    require_rank("attention", key, 3);
    require_rank("attention", value, 3);
    if (key.shape() != value.shape()) shape_error("attention", "key and value shapes differ", key.shape(), value.shape());
    const std::size_t N = query.dim(0), Lq = query.dim(1), D = query.dim(2), Lk = key.dim(1);
    if (key.dim(0) != N || key.dim(2) != D) shape_error("attention", "query and key batch/width differ", query.shape(), key.shape());
    if (heads == 0 || D % heads != 0) {
        throw ConfigError("attention: width " + std::to_string(D) + " is not divisible by " + std::to_string(heads) +
                          " heads");
    }
    const std::size_t dh = D / heads;
    const Real sc = Real(1) / std::sqrt(static_cast<Real>(dh));
    auto probs = std::make_shared<std::vector<Real>>(N * heads * Lq * Lk);
    Tensor out(Shape{N, Lq, D});
    // Keys and values of one head are packed transposed, [dh, Lk], so the
    // inner loops run over key positions with unit stride.
    std::vector<Real> kt(dh * Lk), vt(dh * Lk);
    auto pack = [&](const Tensor& src, std::vector<Real>& dst, std::size_t n, std::size_t h) {
        const Real* p = src.data().data();
        for (std::size_t j = 0; j < Lk; ++j)
            for (std::size_t d = 0; d < dh; ++d) dst[d * Lk + j] = p[(n * Lk + j) * D + h * dh + d];
    };
    const Real* q = query.data().data();
    Real* o = out.data().data();
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t h = 0; h < heads; ++h) {
            pack(key, kt, n, h);
            pack(value, vt, n, h);
            Real* P = probs->data() + ((n * heads + h) * Lq) * Lk;
            for (std::size_t i = 0; i < Lq; ++i) {
                const Real* qi = q + (n * Lq + i) * D + h * dh;
                Real* Pi = P + i * Lk;
                std::fill(Pi, Pi + Lk, Real(0));
                for (std::size_t d = 0; d < dh; ++d) {
                    const Real qd = qi[d] * sc;
                    const Real* kd = kt.data() + d * Lk;
#pragma omp simd
                    for (std::size_t j = 0; j < Lk; ++j) Pi[j] += qd * kd[j];
                }
                Real mx = Pi[0];
                for (std::size_t j = 1; j < Lk; ++j) mx = std::max(mx, Pi[j]);
                Real z = 0;
                for (std::size_t j = 0; j < Lk; ++j) {
                    Pi[j] = std::exp(Pi[j] - mx);
                    z += Pi[j];
                }
                const Real inv = Real(1) / z;
#pragma omp simd
                for (std::size_t j = 0; j < Lk; ++j) Pi[j] *= inv;
                Real* oi = o + (n * Lq + i) * D + h * dh;
                for (std::size_t d = 0; d < dh; ++d) {
                    const Real* vd = vt.data() + d * Lk;
                    Real acc = 0;
#pragma omp simd reduction(+ : acc)
                    for (std::size_t j = 0; j < Lk; ++j) acc += Pi[j] * vd[j];
                    oi[d] = acc;
                }
            }
        }
    }
    if (recording({&query, &key, &value})) {
        attach(out, [query, key, value, out, probs, N, Lq, Lk, D, heads, dh, sc]() mutable {
            if (!out.has_grad()) return;
            const Real* go = out.grad().data();
            const Real* q = query.data().data();
            Real* gq = query.requires_grad() ? query.ensure_grad().data() : nullptr;
            Real* gk = key.requires_grad() ? key.ensure_grad().data() : nullptr;
            Real* gv = value.requires_grad() ? value.ensure_grad().data() : nullptr;
            std::vector<Real> kt(dh * Lk), vt(dh * Lk), gkt(dh * Lk), gvt(dh * Lk), dS(Lk);
            auto pack = [&](const Tensor& src, std::vector<Real>& dst, std::size_t n, std::size_t h) {
                const Real* p = src.data().data();
                for (std::size_t j = 0; j < Lk; ++j)
                    for (std::size_t d = 0; d < dh; ++d) dst[d * Lk + j] = p[(n * Lk + j) * D + h * dh + d];
            };
            auto unpack_add = [&](const std::vector<Real>& src, Real* dst, std::size_t n, std::size_t h) {
                for (std::size_t j = 0; j < Lk; ++j)
                    for (std::size_t d = 0; d < dh; ++d) dst[(n * Lk + j) * D + h * dh + d] += src[d * Lk + j];
            };
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t h = 0; h < heads; ++h) {
                    pack(key, kt, n, h);
                    pack(value, vt, n, h);
                    std::fill(gkt.begin(), gkt.end(), Real(0));
                    std::fill(gvt.begin(), gvt.end(), Real(0));
                    const Real* P = probs->data() + ((n * heads + h) * Lq) * Lk;
                    for (std::size_t i = 0; i < Lq; ++i) {
                        const Real* Pi = P + i * Lk;
                        const Real* goi = go + (n * Lq + i) * D + h * dh;
                        std::fill(dS.begin(), dS.end(), Real(0));
                        for (std::size_t d = 0; d < dh; ++d) {
                            const Real g = goi[d];
                            const Real* vd = vt.data() + d * Lk;
                            Real* gvd = gvt.data() + d * Lk;
#pragma omp simd
                            for (std::size_t j = 0; j < Lk; ++j) {
                                dS[j] += g * vd[j];
                                gvd[j] += Pi[j] * g;
                            }
                        }
                        Real row_dot = 0;
#pragma omp simd reduction(+ : row_dot)
                        for (std::size_t j = 0; j < Lk; ++j) row_dot += dS[j] * Pi[j];
#pragma omp simd
                        for (std::size_t j = 0; j < Lk; ++j) dS[j] = Pi[j] * (dS[j] - row_dot) * sc;
                        const Real* qi = q + (n * Lq + i) * D + h * dh;
                        for (std::size_t d = 0; d < dh; ++d) {
                            if (gq) {
                                const Real* kd = kt.data() + d * Lk;
                                Real acc = 0;
#pragma omp simd reduction(+ : acc)
                                for (std::size_t j = 0; j < Lk; ++j) acc += dS[j] * kd[j];
                                gq[(n * Lq + i) * D + h * dh + d] += acc;
                            }
                            const Real qd = qi[d];
                            Real* gkd = gkt.data() + d * Lk;
#pragma omp simd
                            for (std::size_t j = 0; j < Lk; ++j) gkd[j] += dS[j] * qd;
                        }
                    }
                    if (gk) unpack_add(gkt, gk, n, h);
                    if (gv) unpack_add(gvt, gv, n, h);
                }
            }
        });
    }
    return out;
}

Tensor multi_head_attention(const Tensor& query_src, const Tensor& kv_src, std::size_t heads,
                            const AttentionWeights& weights) {
    require_rank("multi_head_attention", query_src, 3);
    require_rank("multi_head_attention", kv_src, 3);
    if (query_src.dim(0) != kv_src.dim(0) || query_src.dim(2) != kv_src.dim(2)) {
        shape_error("multi_head_attention", "query and key/value sources differ in batch or width", query_src.shape(),
                    kv_src.shape());
    }
    const std::size_t D = query_src.dim(2);
    if (heads == 0 || D % heads != 0) {
        throw ConfigError("multi_head_attention: width " + std::to_string(D) + " is not divisible by " +
                          std::to_string(heads) + " heads");
    }
    Tensor q = dense(query_src, weights.wq, weights.bq);
    Tensor k = dense(kv_src, weights.wk, weights.bk);
    Tensor v = dense(kv_src, weights.wv, weights.bv);
    Tensor attended = scaled_dot_product_attention(q, k, v, heads);
    return dense(attended, weights.wo, weights.bo);
}

// ---------------------------------------------------------------------------
// loss and helpers

Tensor cross_entropy_loss(const Tensor& probs, const Tensor& targets) {
    require_rank("cross_entropy_loss", probs, 2);
    if (probs.shape() != targets.shape()) shape_error("cross_entropy_loss", "shapes differ", probs.shape(), targets.shape());
    constexpr Real kFloor = Real(1e-12);
    const std::size_t N = probs.dim(0), K = probs.dim(1);
    std::vector<std::size_t> truth(N);
    for (std::size_t n = 0; n < N; ++n) {
        std::size_t ones = 0;
        Real row_sum = 0;
        for (std::size_t j = 0; j < K; ++j) {
            const Real t = targets[n * K + j];
            row_sum += probs[n * K + j];
            if (t == Real(1)) {
                ++ones;
                truth[n] = j;
            } else if (t != Real(0)) {
                ones = 2;
            }
        }
        if (ones != 1) throw DataError("cross_entropy_loss: target row " + std::to_string(n) + " is not one-hot");
        if (!(std::abs(row_sum - Real(1)) <= Real(1e-4))) {
            throw DataError("cross_entropy_loss: probability row " + std::to_string(n) + " sums to " +
                            std::to_string(row_sum));
        }
    }
    double total = 0;
    for (std::size_t n = 0; n < N; ++n) total -= std::log(std::max(probs[n * K + truth[n]], kFloor));
    Tensor out = Tensor::scalar(static_cast<Real>(total / static_cast<double>(N)));
    if (recording({&probs})) {
        attach(out, [probs, out, truth, N, K]() mutable {
            if (!out.has_grad()) return;
            const Real g = out.grad()[0] / static_cast<Real>(N);
            Real* gp = probs.ensure_grad().data();
            for (std::size_t n = 0; n < N; ++n) {
                const Real p = probs[n * K + truth[n]];
                if (p > kFloor) gp[n * K + truth[n]] -= g / p;
            }
        });
    }
    return out;
}

Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes) {
    Tensor out(Shape{labels.size(), classes});
    for (std::size_t n = 0; n < labels.size(); ++n) {
        if (labels[n] >= classes) {
            throw DataError("one_hot: label " + std::to_string(labels[n]) + " outside " + std::to_string(classes) +
                            " classes");
        }
        out[n * classes + labels[n]] = Real(1);
    }
    return out;
}

std::vector<std::size_t> argmax_rows(const Tensor& scores) {
    require_rank("argmax_rows", scores, 2);
    const std::size_t N = scores.dim(0), K = scores.dim(1);
    std::vector<std::size_t> out(N);
    for (std::size_t n = 0; n < N; ++n) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < K; ++j)
            if (scores[n * K + j] > scores[n * K + best]) best = j;
        out[n] = best;
    }
    return out;
}

}  // namespace lcz
