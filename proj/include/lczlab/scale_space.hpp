#pragma once

#include <utility>
#include <vector>

#include "lczlab/data.hpp"

namespace lcz {

/// Window side lengths of the smoothing scales; sigma = size / 2.
struct ScaleSpec {
    std::vector<std::size_t> kernel_sizes{2, 4, 6, 8};

    static double sigma_for(std::size_t size) { return static_cast<double>(size) / 2.0; }
    /// Throws ParameterError unless sizes are >= 1 and strictly increasing.
    void validate() const;
};

/// Row-major size x size kernel.
struct GaussianKernel {
    std::size_t size = 1;
    std::vector<double> weights;

    double at(std::size_t row, std::size_t col) const { return weights[row * size + col]; }
    /// Offset of the first tap relative to the output pixel. Odd windows are
    /// centred; even windows put the output pixel at the top-left of the
    /// central 2x2 block.
    std::ptrdiff_t origin() const { return -static_cast<std::ptrdiff_t>((size - 1) / 2); }
};

/// Sampled 2-D Gaussian over the window, normalized to sum 1.
GaussianKernel gaussian_kernel(std::size_t size, double sigma);

/// Per-channel correlation of [C,H,W] with reflect padding (edge pixel repeated).
Tensor gaussian_smooth(const Tensor& image, const GaussianKernel& kernel);

/// Smooths every band at every scale and concatenates scale-major:
/// channel s*C + b holds band b at scale s.
std::pair<Tensor, Tensor> multi_scale_stack(const PatchPair& patch, const ScaleSpec& spec);

/// Same as multi_scale_stack for a single [C,H,W] image.
Tensor scale_stack(const Tensor& image, const ScaleSpec& spec);

}  // namespace lcz
