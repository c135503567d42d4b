#include "lczlab/model.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "lczlab/error.hpp"
#include "lczlab/optim.hpp"

namespace lcz {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// variants and specs

const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> v{Variant::FM1,  Variant::FM1a, Variant::FM1b, Variant::FM2, Variant::FM2b,
                                        Variant::FM3,  Variant::FM3a, Variant::FM3b, Variant::FM4};
    return v;
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::FM1: return "FM1";
        case Variant::FM1a: return "FM1a";
        case Variant::FM1b: return "FM1b";
        case Variant::FM2: return "FM2";
        case Variant::FM2b: return "FM2b";
        case Variant::FM3: return "FM3";
        case Variant::FM3a: return "FM3a";
        case Variant::FM3b: return "FM3b";
        case Variant::FM4: return "FM4";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    std::string lower;
    for (char c : name) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    for (Variant v : all_variants()) {
        std::string n;
        for (char c : variant_name(v)) n += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (n == lower) return v;
    }
    throw ConfigError("unknown variant '" + name + "' (expected one of fm1 fm1a fm1b fm2 fm2b fm3 fm3a fm3b fm4)");
}

bool is_attention_variant(Variant v) { return v == Variant::FM2 || v == Variant::FM2b; }
bool is_scale_space_variant(Variant v) { return v == Variant::FM3 || v == Variant::FM3a || v == Variant::FM3b; }
bool has_pixel_branch(Variant v) {
    return v == Variant::FM1 || v == Variant::FM1a || v == Variant::FM2 || v == Variant::FM3 || v == Variant::FM3a;
}
bool has_feature_branch(Variant v) {
    return v == Variant::FM1 || v == Variant::FM1b || v == Variant::FM2 || v == Variant::FM2b || v == Variant::FM3 ||
           v == Variant::FM3b;
}

LabelSpace ModelSpec::mode_space(LabelMode mode) {
    return mode == LabelMode::merged8 ? LabelSpace::merged() : LabelSpace::original();
}

ModelSpec ModelSpec::for_variant(Variant v, LabelMode mode) {
    ModelSpec s;
    s.variant = v;
    s.label_mode = mode;
    s.num_classes = mode_space(mode).num_classes();
    return s.resolved();
}

void ModelSpec::validate() const {
    const auto name = variant_name(variant);
    if (num_classes != label_space().num_classes()) {
        throw ConfigError(name + ": num_classes " + std::to_string(num_classes) + " does not match label mode " +
                          label_space().mode_name());
    }
    if (attention_heads && !is_attention_variant(variant)) throw ConfigError(name + " takes no attention heads");
    if (scale_spec && !is_scale_space_variant(variant)) throw ConfigError(name + " takes no scale spec");
    if (alpha && variant != Variant::FM4) throw ConfigError(name + " takes no fusion weight alpha");
    if (attention_heads) {
        if (*attention_heads == 0 || 32 % *attention_heads != 0) {
            throw ConfigError("attention width 32 is not divisible by " + std::to_string(*attention_heads) + " heads");
        }
    }
    if (scale_spec) {
        try {
            scale_spec->validate();
        } catch (const ParameterError& e) {
            throw ConfigError(e.what());
        }
    }
    if (alpha && !(*alpha >= 0.0 && *alpha <= 1.0)) throw ConfigError("alpha must lie in [0,1]");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout rate must lie in [0,1)");
}

ModelSpec ModelSpec::resolved() const {
    ModelSpec s = *this;
    if (is_attention_variant(variant) && !s.attention_heads) s.attention_heads = 8;
    if (is_scale_space_variant(variant) && !s.scale_spec) s.scale_spec = ScaleSpec{};
    if (variant == Variant::FM4 && !s.alpha) s.alpha = 0.5;
    return s;
}

std::string ModelSpec::tag() const {
    std::string t = variant_name(variant);
    if (band_grouping || label_mode == LabelMode::merged8) {
        t += "_";
        if (band_grouping) t += "B";
        if (label_mode == LabelMode::merged8) t += "L";
    }
    return t;
}

std::string spec_to_json(const ModelSpec& spec_in) {
    const ModelSpec spec = spec_in.resolved();
    ojson j;
    j["variant"] = variant_name(spec.variant);
    j["band_grouping"] = spec.band_grouping;
    j["label_mode"] = spec.label_space().mode_name();
    j["num_classes"] = spec.num_classes;
    if (spec.attention_heads) j["attention_heads"] = *spec.attention_heads;
    if (spec.scale_spec) j["kernel_sizes"] = spec.scale_spec->kernel_sizes;
    if (spec.alpha) j["alpha"] = *spec.alpha;
    j["dropout_rate"] = spec.dropout_rate;
    return j.dump();
}

namespace {

ModelSpec spec_from(const ojson& j) {
    ModelSpec s;
    s.variant = variant_from_name(j.at("variant").get<std::string>());
    s.band_grouping = j.at("band_grouping").get<bool>();
    s.label_mode = LabelSpace::from_name(j.at("label_mode").get<std::string>()).mode();
    s.num_classes = j.at("num_classes").get<std::size_t>();
    if (j.contains("attention_heads")) s.attention_heads = j["attention_heads"].get<std::size_t>();
    if (j.contains("kernel_sizes")) s.scale_spec = ScaleSpec{j["kernel_sizes"].get<std::vector<std::size_t>>()};
    if (j.contains("alpha")) s.alpha = j["alpha"].get<double>();
    s.dropout_rate = j.at("dropout_rate").get<double>();
    s.validate();
    return s;
}

}  // namespace

ModelSpec spec_from_json(const std::string& text) {
    try {
        return spec_from(ojson::parse(text));
    } catch (const ojson::exception& e) {
        throw FormatError(std::string("model spec: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// layers

namespace {

constexpr std::size_t kWidth = 32;     // feature channels after every stem
constexpr std::size_t kFusionWidth = 64;
constexpr std::size_t kHidden = 64;

struct Conv {
    Tensor w, b;
    Tensor operator()(const Tensor& x) const { return conv2d(x, w, b, Padding::same); }
};

// Without `bias` the bias is a constant zero that is not trained.
Conv make_conv(ParameterSet& ps, Rng& rng, const std::string& name, std::size_t in, std::size_t out, std::size_t k,
               bool bias = true) {
    Conv c;
    c.w = ps.add_parameter(name + ".weight", kaiming_uniform(Shape{out, in, k, k}, in * k * k, rng));
    c.b = bias ? ps.add_parameter(name + ".bias", Tensor(Shape{out}, Real(0))) : Tensor(Shape{out}, Real(0));
    return c;
}

struct Norm {
    Tensor gamma, beta;
    BatchNormState state;
    Tensor operator()(const Tensor& x, Mode mode) { return batchnorm2d(x, gamma, beta, state, mode); }
};

Norm make_norm(ParameterSet& ps, const std::string& name, std::size_t channels) {
    Norm n;
    n.gamma = ps.add_parameter(name + ".gamma", Tensor(Shape{channels}, Real(1)));
    n.beta = ps.add_parameter(name + ".beta", Tensor(Shape{channels}, Real(0)));
    n.state.running_mean = ps.add_buffer(name + ".running_mean", Tensor(Shape{channels}, Real(0)));
    n.state.running_var = ps.add_buffer(name + ".running_var", Tensor(Shape{channels}, Real(1)));
    return n;
}

struct Linear {
    Tensor w, b;
    Tensor operator()(const Tensor& x) const { return dense(x, w, b); }
};

Linear make_linear(ParameterSet& ps, Rng& rng, const std::string& name, std::size_t in, std::size_t out,
                   bool bias = true) {
    Linear l;
    l.w = ps.add_parameter(name + ".weight", kaiming_uniform(Shape{out, in}, in, rng));
    l.b = bias ? ps.add_parameter(name + ".bias", Tensor(Shape{out}, Real(0))) : Tensor(Shape{out}, Real(0));
    return l;
}

// conv -> ReLU -> batch norm
struct ConvBlock {
    Conv conv;
    Norm norm;
    Tensor operator()(const Tensor& x, Mode mode) { return norm(relu(conv(x)), mode); }
};

ConvBlock make_block(ParameterSet& ps, Rng& rng, const std::string& name, std::size_t in, std::size_t out,
                     std::size_t k = 3) {
    ConvBlock b;
    b.conv = make_conv(ps, rng, name + ".conv", in, out, k);
    b.norm = make_norm(ps, name + ".bn", out);
    return b;
}

// First conv block of a branch. With band grouping every group has its own
// block; the group features are concatenated and mixed back to kWidth
// channels by a 1x1 block.
struct Stem {
    std::vector<std::vector<std::size_t>> groups;
    std::vector<ConvBlock> group_blocks;
    ConvBlock block;

    Tensor operator()(const Tensor& x, Mode mode) {
        if (groups.empty()) return block(x, mode);
        std::vector<Tensor> parts;
        parts.reserve(groups.size());
        for (std::size_t g = 0; g < groups.size(); ++g) parts.push_back(group_blocks[g](gather_channels(x, groups[g]), mode));
        return block(concat_channels(parts), mode);
    }
};

Stem make_stem(ParameterSet& ps, Rng& rng, const std::string& name, std::size_t in,
               const std::vector<std::pair<std::string, std::vector<std::size_t>>>& groups) {
    Stem s;
    if (groups.empty()) {
        s.block = make_block(ps, rng, name, in, kWidth);
        return s;
    }
    for (const auto& [gname, channels] : groups) {
        s.groups.push_back(channels);
        s.group_blocks.push_back(make_block(ps, rng, name + "." + gname, channels.size(), kWidth));
    }
    s.block = make_block(ps, rng, name + ".mix", kWidth * groups.size(), kWidth, 1);
    return s;
}

// dense(64) -> ReLU -> dense(K) -> softmax
struct Head {
    Linear hidden, out;
    Tensor operator()(const Tensor& v) const { return softmax(out(relu(hidden(v)))); }
};

Head make_head(ParameterSet& ps, Rng& rng, const std::string& name, std::size_t in, std::size_t classes) {
    return {make_linear(ps, rng, name + ".hidden", in, kHidden), make_linear(ps, rng, name + ".out", kHidden, classes)};
}

AttentionWeights make_attention(ParameterSet& ps, Rng& rng, const std::string& name, std::size_t d) {
    AttentionWeights a;
    // The key bias adds one constant to every score of a query row, which
    // the softmax cancels, so it is left out.
    auto proj = [&](const char* p, Tensor& w, Tensor& b) {
        auto l = make_linear(ps, rng, name + "." + p, d, d, p[0] != 'k');
        w = l.w;
        b = l.b;
    };
    proj("q", a.wq, a.bq);
    proj("k", a.wk, a.bk);

    proj("v", a.wv, a.bv);
    proj("o", a.wo, a.bo);
    return a;
}

using GroupList = std::vector<std::pair<std::string, std::vector<std::size_t>>>;

// Band groups expressed as channel lists of a (possibly scale-stacked) input
// with `bands` bands per scale, shifted by `offset`.
GroupList channel_groups(const std::vector<BandGroup>& groups, std::size_t bands, std::size_t scales,
                         std::size_t offset) {
    GroupList out;
    for (const auto& g : groups) {
        std::vector<std::size_t> ch;
        for (std::size_t s = 0; s < scales; ++s)
            for (auto b : g.bands) ch.push_back(offset + s * bands + b);
        out.emplace_back(g.name, std::move(ch));
    }
    return out;
}

void require_finite(const Tensor& t, const char* what) {
    if (!t.all_finite()) throw DataError(std::string(what) + " input holds NaN or infinite values");
}

}  // namespace

// ---------------------------------------------------------------------------
// network base

FusionNetwork::FusionNetwork(ModelSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), seed_(seed), init_rng_(seed), dropout_rng_(seed ^ 0xd1b54a32d192ed03ull) {}

void FusionNetwork::set_alpha(double alpha) {
    if (spec_.variant != Variant::FM4) throw ConfigError(variant_name(spec_.variant) + " takes no fusion weight alpha");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterError("alpha must lie in [0,1], got " + std::to_string(alpha));
    spec_.alpha = alpha;
}

void FusionNetwork::set_dropout_rate(double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("dropout rate must lie in [0,1), got " + std::to_string(rate));
    spec_.dropout_rate = rate;
}

std::size_t FusionNetwork::scales() const { return spec_.scale_spec ? spec_.scale_spec->kernel_sizes.size() : 1; }

ModelInputs FusionNetwork::prepare(std::span<const PatchPair> batch) const {
    if (batch.empty()) throw DataError("empty batch");
    const std::size_t S = is_scale_space_variant(spec_.variant) ? scales() : 1;
    const std::size_t plane = kPatchSize * kPatchSize, N = batch.size();
    ModelInputs in;
    in.sar = Tensor(Shape{N, kSarBands * S, kPatchSize, kPatchSize});
    in.msi = Tensor(Shape{N, kMsiBands * S, kPatchSize, kPatchSize});
    for (std::size_t n = 0; n < N; ++n) {
        validate_patch(batch[n]);
        require_finite(batch[n].sar, "SAR");
        require_finite(batch[n].msi, "MSI");
        Tensor sar = batch[n].sar, msi = batch[n].msi;
        if (is_scale_space_variant(spec_.variant)) {
            sar = scale_stack(sar, *spec_.scale_spec);
            msi = scale_stack(msi, *spec_.scale_spec);
        }
        std::copy(sar.data().begin(), sar.data().end(), in.sar.data().begin() + static_cast<std::ptrdiff_t>(n * kSarBands * S * plane));
        std::copy(msi.data().begin(), msi.data().end(), in.msi.data().begin() + static_cast<std::ptrdiff_t>(n * kMsiBands * S * plane));
    }
    return in;
}

ForwardResult FusionNetwork::forward_full(const ModelInputs& inputs) {
    const std::size_t S = scales();
    if (inputs.sar.rank() != 4 || inputs.msi.rank() != 4 || inputs.sar.dim(1) != kSarBands * S ||
        inputs.msi.dim(1) != kMsiBands * S || inputs.sar.dim(0) != inputs.msi.dim(0) ||
        inputs.sar.dim(2) != inputs.msi.dim(2) || inputs.sar.dim(3) != inputs.msi.dim(3)) {
        throw DimensionError(variant_name(spec_.variant) + " expects SAR [N," + std::to_string(kSarBands * S) +
                             ",H,W] and MSI [N," + std::to_string(kMsiBands * S) + ",H,W], got " +
                             shape_str(inputs.sar.shape()) + " and " + shape_str(inputs.msi.shape()));
    }
    require_finite(inputs.sar, "SAR");
    require_finite(inputs.msi, "MSI");
    return run(inputs);
}

std::vector<std::size_t> FusionNetwork::predict(std::span<const PatchPair> batch) {
    NoGradScope no_grad;
    return predict_classes(forward(batch));
}

Tensor FusionNetwork::loss(const ForwardResult& out, const Tensor& targets) const {
    if (out.branch_probs.empty()) return cross_entropy_loss(out.probs, targets);
    Tensor total = cross_entropy_loss(out.branch_probs[0], targets);
    for (std::size_t i = 1; i < out.branch_probs.size(); ++i) total = add(total, cross_entropy_loss(out.branch_probs[i], targets));
    return total;
}

std::vector<std::size_t> predict_classes(const Tensor& probs) { return argmax_rows(probs); }

// ---------------------------------------------------------------------------
// FM1, FM2, FM3 and their ablations

namespace {

class HybridNetwork final : public FusionNetwork {
public:
    HybridNetwork(ModelSpec spec, std::uint64_t seed) : FusionNetwork(std::move(spec), seed) {
        const Variant v = spec_.variant;
        const std::size_t S = scales(), cs = kSarBands * S, cm = kMsiBands * S;
        const BandGroupMap map = BandGroupMap::standard();
        auto groups = [&](const std::vector<BandGroup>& g, std::size_t bands, std::size_t offset) {
            return spec_.band_grouping ? channel_groups(g, bands, S, offset) : GroupList{};
        };
        std::size_t head_in = 0;
        if (has_pixel_branch(v)) {
            GroupList pg = groups(map.sar_groups, kSarBands, 0);
            for (auto& g : groups(map.msi_groups, kMsiBands, cs)) pg.push_back(std::move(g));
            pixel_ = make_stem(params_, init_rng_, "pixel.stem", cs + cm, pg);
            head_in += kWidth;
        }
        if (has_feature_branch(v)) {
            sar_ = make_stem(params_, init_rng_, "sar.stem", cs, groups(map.sar_groups, kSarBands, 0));
            msi_ = make_stem(params_, init_rng_, "msi.stem", cm, groups(map.msi_groups, kMsiBands, 0));
            if (is_attention_variant(v)) {
                attention_ = true;
                sar_self_ = make_attention(params_, init_rng_, "attn.sar_self", kWidth);
                msi_self_ = make_attention(params_, init_rng_, "attn.msi_self", kWidth);
                sar_cross_ = make_attention(params_, init_rng_, "attn.sar_cross", kWidth);
                msi_cross_ = make_attention(params_, init_rng_, "attn.msi_cross", kWidth);
            }
            // batch norm after the pool absorbs a per-channel bias
            fusion_conv_ = make_conv(params_, init_rng_, "fusion.conv", kWidth, kFusionWidth, 3, false);
            fusion_norm_ = make_norm(params_, "fusion.bn", kFusionWidth);
            head_in += kFusionWidth;
        }
        head_ = make_head(params_, init_rng_, "head", head_in, spec_.num_classes);
    }

protected:
    ForwardResult run(const ModelInputs& in) override {
        const Variant v = spec_.variant;
        const double rate = spec_.dropout_rate;
        std::vector<Tensor> vectors;
        if (has_pixel_branch(v)) {
            const Tensor both[] = {in.sar, in.msi};
            Tensor x = pixel_(concat_channels(both), mode_);
            vectors.push_back(global_avg_pool(spatial_dropout(x, rate, mode_, dropout_rng_)));
        }
        if (has_feature_branch(v)) {
            Tensor s = spatial_dropout(sar_(in.sar, mode_), rate, mode_, dropout_rng_);
            Tensor m = spatial_dropout(msi_(in.msi, mode_), rate, mode_, dropout_rng_);
            if (attention_) {
                s = maxpool2d(s);
                m = maxpool2d(m);
                const std::size_t H = s.dim(2), W = s.dim(3), heads = *spec_.attention_heads;
                Tensor ss = multi_head_attention(to_sequence(s), to_sequence(s), heads, sar_self_);
                Tensor ms = multi_head_attention(to_sequence(m), to_sequence(m), heads, msi_self_);
                s = from_sequence(multi_head_attention(ss, ms, heads, sar_cross_), H, W);
                m = from_sequence(multi_head_attention(ms, ss, heads, msi_cross_), H, W);
            }
            Tensor f = maxpool2d(fusion_conv_(elementwise_mul(s, m)));
            vectors.push_back(global_avg_pool(relu(fusion_norm_(f, mode_))));
        }
        Tensor joined = vectors.size() == 1 ? vectors[0] : concat_channels(vectors);
        return {head_(joined), {}};
    }

private:
    Stem pixel_, sar_, msi_;
    bool attention_ = false;
    AttentionWeights sar_self_, msi_self_, sar_cross_, msi_cross_;
    Conv fusion_conv_;
    Norm fusion_norm_;
    Head head_;
};

// ---------------------------------------------------------------------------
// FM4: SAR U-Net and MSI CNN, combined at the decision level

class DecisionNetwork final : public FusionNetwork {
public:
    DecisionNetwork(ModelSpec spec, std::uint64_t seed) : FusionNetwork(std::move(spec), seed) {
        const BandGroupMap map = BandGroupMap::standard();
        const bool g = spec_.band_grouping;
        const std::size_t K = spec_.num_classes;
        enc1_ = make_stem(params_, init_rng_, "unet.enc1", kSarBands, g ? channel_groups(map.sar_groups, kSarBands, 1, 0) : GroupList{});
        enc2_ = make_block(params_, init_rng_, "unet.enc2", kWidth, 64);
        bottleneck_ = make_block(params_, init_rng_, "unet.bottleneck", 64, 128);
        dec2_ = make_block(params_, init_rng_, "unet.dec2", 128 + 64, 64);
        dec1_ = make_block(params_, init_rng_, "unet.dec1", 64 + kWidth, kWidth);
        unet_head_ = make_head(params_, init_rng_, "unet.head", kWidth, K);

        cnn1_ = make_stem(params_, init_rng_, "cnn.conv1", kMsiBands, g ? channel_groups(map.msi_groups, kMsiBands, 1, 0) : GroupList{});
        cnn2_ = make_block(params_, init_rng_, "cnn.conv2", kWidth, 64);
        cnn_head_ = make_head(params_, init_rng_, "cnn.head", 64, K);
    }

protected:
    ForwardResult run(const ModelInputs& in) override {
        const double rate = spec_.dropout_rate;
        // U-Net on SAR
        Tensor e1 = spatial_dropout(enc1_(in.sar, mode_), rate, mode_, dropout_rng_);
        Tensor e2 = enc2_(maxpool2d(e1), mode_);
        Tensor b = bottleneck_(maxpool2d(e2), mode_);
        const Tensor up2[] = {upsample_nearest2x(b), e2};
        Tensor d2 = dec2_(concat_channels(up2), mode_);
        const Tensor up1[] = {upsample_nearest2x(d2), e1};
        Tensor d1 = dec1_(concat_channels(up1), mode_);
        Tensor p_unet = unet_head_(global_avg_pool(d1));
        // vanilla CNN on MSI
        Tensor c1 = spatial_dropout(cnn1_(in.msi, mode_), rate, mode_, dropout_rng_);
        Tensor c2 = cnn2_(maxpool2d(c1), mode_);
        Tensor p_cnn = cnn_head_(global_avg_pool(maxpool2d(c2)));
        Tensor fused = convex_combination(p_unet, p_cnn, static_cast<Real>(*spec_.alpha));
        return {fused, {p_unet, p_cnn}};
    }

private:
    Stem enc1_, cnn1_;
    ConvBlock enc2_, bottleneck_, dec2_, dec1_, cnn2_;
    Head unet_head_, cnn_head_;
};

}  // namespace

std::unique_ptr<FusionNetwork> FusionNetwork::build(const ModelSpec& spec_in, std::uint64_t seed) {
    spec_in.validate();
    ModelSpec spec = spec_in.resolved();
    if (spec.variant == Variant::FM4) return std::unique_ptr<FusionNetwork>(new DecisionNetwork(std::move(spec), seed));
    return std::unique_ptr<FusionNetwork>(new HybridNetwork(std::move(spec), seed));
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

constexpr const char* kCheckpointFormat = "lczlab-checkpoint";

ojson checkpoint_manifest(const FusionNetwork& net) {
    const auto& ps = net.parameters();
    ojson j;
    j["format"] = kCheckpointFormat;
    j["version"] = 1;
    j["spec"] = ojson::parse(spec_to_json(net.spec()));
    j["seed"] = net.seed();
    ojson params = ojson::array(), buffers = ojson::array();
    for (std::size_t i = 0; i < ps.parameter_count(); ++i)
        params.push_back({{"name", ps.parameter(i).name}, {"shape", ps.parameter(i).tensor.shape()}});
    for (std::size_t i = 0; i < ps.buffer_count(); ++i)
        buffers.push_back({{"name", ps.buffer(i).name}, {"shape", ps.buffer(i).tensor.shape()}});
    j["parameters"] = std::move(params);
    j["buffers"] = std::move(buffers);
    j["scalar_count"] = ps.snapshot().size();
    return j;
}

ojson read_json(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open " + file.string());
    try {
        return ojson::parse(in);
    } catch (const ojson::exception& e) {
        throw FormatError(file.string() + ": " + e.what());
    }
}

}  // namespace

void save_checkpoint(const FusionNetwork& net, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create checkpoint directory " + dir.string());
    const auto values = net.parameters().snapshot();
    std::vector<char> bytes;
    bytes.reserve(values.size() * 4);
    for (Real v : values) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
    {
        std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + (dir / "params.bin").string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
    out << checkpoint_manifest(net).dump(2) << '\n';
}

ModelSpec read_checkpoint_spec(const fs::path& dir) {
    const auto j = read_json(dir / "manifest.json");
    try {
        if (j.at("format") != kCheckpointFormat) throw FormatError((dir / "manifest.json").string() + ": not a checkpoint");
        return spec_from(j.at("spec"));
    } catch (const ojson::exception& e) {
        throw FormatError((dir / "manifest.json").string() + ": " + e.what());
    }
}

std::unique_ptr<FusionNetwork> load_checkpoint(const fs::path& dir) {
    const fs::path manifest_file = dir / "manifest.json", params_file = dir / "params.bin";
    const ModelSpec spec = read_checkpoint_spec(dir);
    const auto j = read_json(manifest_file);
    std::uint64_t seed = 0;
    try {
        seed = j.at("seed").get<std::uint64_t>();
    } catch (const ojson::exception& e) {
        throw FormatError(manifest_file.string() + ": " + e.what());
    }
    auto net = FusionNetwork::build(spec, seed);
    const ojson expected = checkpoint_manifest(*net);
    if (expected["parameters"] != j.value("parameters", ojson()) || expected["buffers"] != j.value("buffers", ojson())) {
        throw FormatError(manifest_file.string() + ": parameter layout does not match the spec");
    }
    std::ifstream in(params_file, std::ios::binary);
    if (!in) throw IoError("cannot open " + params_file.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
    const std::size_t count = expected["scalar_count"].get<std::size_t>();
    if (bytes.size() != count * 4) {
        throw FormatError(params_file.string() + ": expected " + std::to_string(count * 4) + " bytes, found " +
                          std::to_string(bytes.size()));
    }
    std::vector<Real> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
        values[i] = static_cast<Real>(std::bit_cast<float>(bits));
    }
    net->parameters().restore(values);
    return net;
}

}  // namespace lcz
