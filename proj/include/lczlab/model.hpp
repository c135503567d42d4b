#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lczlab/data.hpp"
#include "lczlab/ops.hpp"
#include "lczlab/scale_space.hpp"

namespace lcz {

enum class Variant { FM1, FM1a, FM1b, FM2, FM2b, FM3, FM3a, FM3b, FM4 };

const std::vector<Variant>& all_variants();
/// "FM1", "FM2b", ...
std::string variant_name(Variant v);
/// Case-insensitive. Throws ConfigError on an unknown name.
Variant variant_from_name(const std::string& name);

bool is_attention_variant(Variant v);
bool is_scale_space_variant(Variant v);
bool has_pixel_branch(Variant v);
bool has_feature_branch(Variant v);

/// Declarative description of one fusion network. Variant-specific fields
/// stay empty unless set; `resolved()` fills in their defaults.
struct ModelSpec {
    Variant variant = Variant::FM1;
    bool band_grouping = false;
    LabelMode label_mode = LabelMode::original17;
    std::size_t num_classes = kOriginalClasses;
    std::optional<std::size_t> attention_heads;  // FM2, FM2b; default 8
    std::optional<ScaleSpec> scale_spec;         // FM3*; default {2,4,6,8}
    std::optional<double> alpha;                 // FM4; default 0.5
    double dropout_rate = 0.2;

    static ModelSpec for_variant(Variant v, LabelMode mode = LabelMode::original17);

    LabelSpace label_space() const { return mode_space(label_mode); }
    static LabelSpace mode_space(LabelMode mode);

    /// Throws ConfigError on inconsistent fields.
    void validate() const;
    ModelSpec resolved() const;
    /// Short tag such as "FM1_BL" (band grouping + merged labels).
    std::string tag() const;
};

/// Network inputs, both [N,C,H,W]. For scale-space variants these are the
/// smoothed stacks.
struct ModelInputs {
    Tensor sar;
    Tensor msi;
};

struct ForwardResult {
    Tensor probs;                      // [N,K]
    std::vector<Tensor> branch_probs;  // FM4: {unet, cnn}; otherwise empty
};

class FusionNetwork {
public:
    /// Throws ConfigError if the spec is inconsistent.
    static std::unique_ptr<FusionNetwork> build(const ModelSpec& spec, std::uint64_t seed);
    virtual ~FusionNetwork() = default;

    const ModelSpec& spec() const noexcept { return spec_; }
    std::uint64_t seed() const noexcept { return seed_; }
    ParameterSet& parameters() noexcept { return params_; }
    const ParameterSet& parameters() const noexcept { return params_; }
    Mode mode() const noexcept { return mode_; }
    void set_mode(Mode mode) noexcept { mode_ = mode; }
    /// Restarts the dropout mask stream.
    void reseed_dropout(std::uint64_t seed) { dropout_rng_.seed(seed); }
    /// FM4 only.
    void set_alpha(double alpha);
    void set_dropout_rate(double rate);
    /// Number of smoothing scales feeding the network (1 unless FM3*).
    std::size_t scales() const;
    std::size_t sar_channels() const { return kSarBands * scales(); }
    std::size_t msi_channels() const { return kMsiBands * scales(); }

    /// Stacks already-normalized patches into network inputs (computing the
    /// scale-space stacks for FM3 variants). Throws DataError on non-finite
    /// values or malformed patches.
    ModelInputs prepare(std::span<const PatchPair> batch) const;
    /// Differentiable w.r.t. parameters and inputs.
    ForwardResult forward_full(const ModelInputs& inputs);
    Tensor forward(const ModelInputs& inputs) { return forward_full(inputs).probs; }
    Tensor forward(std::span<const PatchPair> batch) { return forward(prepare(batch)); }
    /// Argmax of the probabilities, lowest index on ties.
    std::vector<std::size_t> predict(std::span<const PatchPair> batch);

    /// Training objective. FM4 sums the branch losses so each branch learns
    /// on its own; the other variants use the fused output.
    Tensor loss(const ForwardResult& out, const Tensor& targets) const;

protected:
    FusionNetwork(ModelSpec spec, std::uint64_t seed);
    virtual ForwardResult run(const ModelInputs& inputs) = 0;

    ModelSpec spec_;
    std::uint64_t seed_;
    ParameterSet params_;
    Mode mode_ = Mode::train;
    Rng init_rng_;
    Rng dropout_rng_;
};

std::vector<std::size_t> predict_classes(const Tensor& probs);

/// manifest.json (spec, seed, parameter names and shapes) + params.bin
/// (little-endian float32, parameters then buffers in registration order).
void save_checkpoint(const FusionNetwork& net, const std::filesystem::path& dir);
std::unique_ptr<FusionNetwork> load_checkpoint(const std::filesystem::path& dir);
/// Reads only the spec from a checkpoint directory.
ModelSpec read_checkpoint_spec(const std::filesystem::path& dir);

std::string spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const std::string& text);

}  // namespace lcz
