#include "lczlab/scale_space.hpp"

#include <cmath>

#include "lczlab/error.hpp"

namespace lcz {

void ScaleSpec::validate() const {
    if (kernel_sizes.empty()) throw ParameterError("scale spec needs at least one kernel size");
    for (std::size_t i = 0; i < kernel_sizes.size(); ++i) {
        if (kernel_sizes[i] < 1) throw ParameterError("kernel sizes must be at least 1");
        if (i > 0 && kernel_sizes[i] <= kernel_sizes[i - 1]) {
            throw ParameterError("kernel sizes must be strictly increasing");
        }
    }
}

GaussianKernel gaussian_kernel(std::size_t size, double sigma) {
    if (size < 1) throw ParameterError("kernel size must be at least 1");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ParameterError("sigma must be positive, got " + std::to_string(sigma));
    GaussianKernel k;
    k.size = size;
    k.weights.resize(size * size);
    const double centre = (static_cast<double>(size) - 1.0) / 2.0;
    std::vector<double> g(size);
    for (std::size_t i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - centre;
        g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    }
    double total = 0;
    for (std::size_t r = 0; r < size; ++r)
        for (std::size_t c = 0; c < size; ++c) total += k.weights[r * size + c] = g[r] * g[c];
    for (double& w : k.weights) w /= total;
    return k;
}

namespace {

// Half-sample symmetric reflection: -1 -> 0, n -> n-1.
std::size_t reflect(std::ptrdiff_t i, std::ptrdiff_t n) {
    const std::ptrdiff_t period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return static_cast<std::size_t>(i < n ? i : period - 1 - i);
}

}  // namespace

Tensor gaussian_smooth(const Tensor& image, const GaussianKernel& kernel) {
    if (image.rank() != 3) throw DimensionError("gaussian_smooth expects [C,H,W], got " + shape_str(image.shape()));
    const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2), S = kernel.size;
    const std::ptrdiff_t o = kernel.origin();
    // Precompute reflected source indices per output coordinate and tap.
    std::vector<std::size_t> rows(H * S), cols(W * S);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t t = 0; t < S; ++t) rows[y * S + t] = reflect(static_cast<std::ptrdiff_t>(y + t) + o, H);
    for (std::size_t x = 0; x < W; ++x)
        for (std::size_t t = 0; t < S; ++t) cols[x * S + t] = reflect(static_cast<std::ptrdiff_t>(x + t) + o, W);
    Tensor out(image.shape());
    for (std::size_t c = 0; c < C; ++c) {
        const Real* src = image.data().data() + c * H * W;
        Real* dst = out.data().data() + c * H * W;
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
                double acc = 0;
                for (std::size_t r = 0; r < S; ++r) {
                    const Real* row = src + rows[y * S + r] * W;
                    for (std::size_t q = 0; q < S; ++q) acc += kernel.weights[r * S + q] * row[cols[x * S + q]];
                }
                dst[y * W + x] = static_cast<Real>(acc);
            }
        }
    }
    return out;
}

Tensor scale_stack(const Tensor& image, const ScaleSpec& spec) {
    spec.validate();
    if (image.rank() != 3) throw DimensionError("scale_stack expects [C,H,W], got " + shape_str(image.shape()));
    const std::size_t C = image.dim(0), plane = image.dim(1) * image.dim(2);
    Tensor out(Shape{C * spec.kernel_sizes.size(), image.dim(1), image.dim(2)});
    for (std::size_t s = 0; s < spec.kernel_sizes.size(); ++s) {
        const auto size = spec.kernel_sizes[s];
        Tensor smoothed = gaussian_smooth(image, gaussian_kernel(size, ScaleSpec::sigma_for(size)));
        std::copy(smoothed.data().begin(), smoothed.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(s * C * plane));
    }
    return out;
}

std::pair<Tensor, Tensor> multi_scale_stack(const PatchPair& patch, const ScaleSpec& spec) {
    return {scale_stack(patch.sar, spec), scale_stack(patch.msi, spec)};
}

}  // namespace lcz
