#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "lczlab/tensor.hpp"

namespace lcz {

using Rng = std::mt19937_64;

enum class Padding { same, valid };

/// Running statistics owned by a batch-norm layer.
struct BatchNormState {
    Tensor running_mean;
    Tensor running_var;
};

struct BatchNormOptions {
    Real eps = Real(1e-5);
    Real momentum = Real(0.1);
};

/// Projection weights of one multi-head attention module. Weights are
/// stored [out, in] like dense layers.
struct AttentionWeights {
    Tensor wq, bq;
    Tensor wk, bk;
    Tensor wv, bv;
    Tensor wo, bo;
};

// Layer primitives. Every function records its backward rule on the active
// tape when at least one input requires grad.

/// 2-D cross-correlation. input [N,C,H,W], kernel [F,C,k,k], bias [F].
/// Same padding requires an odd kernel extent.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Padding padding);

/// Per-channel normalization over (N,H,W). Train mode uses batch statistics
/// and updates `state`; infer mode uses `state`.
Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormState& state, Mode mode,
                   BatchNormOptions options = {});

/// Zeroes whole (sample, channel) maps with probability `rate` and rescales
/// the survivors by 1/(1-rate). Identity in infer mode.
Tensor spatial_dropout(const Tensor& input, double rate, Mode mode, Rng& rng);

Tensor relu(const Tensor& input);
/// Non-overlapping max pooling (stride == window). Ties go to the first element.
Tensor maxpool2d(const Tensor& input, std::size_t window = 2);
/// [N,C,H,W] -> [N,C]
Tensor global_avg_pool(const Tensor& input);
/// Affine map over the last axis: x[..., I] * weight[O,I]^T + bias[O].
Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias);
/// Softmax over the last axis with max subtraction.
Tensor softmax(const Tensor& input);
/// Concatenation along axis 1; every other extent must agree.
Tensor concat_channels(std::span<const Tensor> inputs);
Tensor elementwise_mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& input, Real factor);
/// alpha * a + (1 - alpha) * b
Tensor convex_combination(const Tensor& a, const Tensor& b, Real alpha);
Tensor sum(const Tensor& input);
Tensor reshape(const Tensor& input, Shape shape);
/// Selects channels (axis 1) in the given order.
Tensor gather_channels(const Tensor& input, std::span<const std::size_t> channels);
/// [N,C,H,W] -> [N,H*W,C]
Tensor to_sequence(const Tensor& input);
/// [N,H*W,C] -> [N,C,H,W]
Tensor from_sequence(const Tensor& input, std::size_t height, std::size_t width);
/// Nearest-neighbour 2x upsampling of [N,C,H,W].
Tensor upsample_nearest2x(const Tensor& input);

/// Scaled dot-product attention on [N,L,D] tensors split into `heads`
/// contiguous slices of D; scale 1/sqrt(D/heads).
Tensor scaled_dot_product_attention(const Tensor& query, const Tensor& key, const Tensor& value, std::size_t heads);

/// Projects queries from `query_src` and keys/values from `kv_src`, attends
/// per head, concatenates heads and applies the output projection.
/// Self-attention is the call with query_src == kv_src.
Tensor multi_head_attention(const Tensor& query_src, const Tensor& kv_src, std::size_t heads,
                            const AttentionWeights& weights);

/// Mean over rows of -log(max(p_true, 1e-12)). probs and targets are [N,K].
Tensor cross_entropy_loss(const Tensor& probs, const Tensor& targets);

Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes);

/// Row-wise argmax of a [N,K] tensor, lowest index on ties.
std::vector<std::size_t> argmax_rows(const Tensor& scores);

/// While alive, folds every discrete branch decision taken on this thread
/// (ReLU sign, max-pool winner) into a digest. Two forward passes with equal
/// digests followed the same piecewise-smooth region.
class BranchTrace {
public:
    BranchTrace() noexcept;
    ~BranchTrace();
    BranchTrace(const BranchTrace&) = delete;
    BranchTrace& operator=(const BranchTrace&) = delete;

    std::uint64_t digest() const noexcept { return digest_; }
    void reset() noexcept { digest_ = kSeed; }

private:
    static constexpr std::uint64_t kSeed = 1469598103934665603ull;
    std::uint64_t digest_ = kSeed;
    BranchTrace* previous_;
    friend void trace_bit(bool) noexcept;
    friend void trace_index(std::size_t) noexcept;
};

}  // namespace lcz
