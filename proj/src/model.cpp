#include "stam/model.hpp"

#include <algorithm>
#include <cmath>

#include "stam/rng.hpp"

namespace stam {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::CnnOnly: return "cnn-only";
        case Variant::CnnSpatial: return "cnn+spatial";
        case Variant::FullStam: return "full-stam";
    }
    return "?";
}

Variant variant_from_string(const std::string& s) {
    if (s == "cnn-only") return Variant::CnnOnly;
    if (s == "cnn+spatial") return Variant::CnnSpatial;
    if (s == "full-stam") return Variant::FullStam;
    throw ConfigError("unknown variant '" + s + "' (cnn-only, cnn+spatial, full-stam)");
}

void ModelConfig::validate() const {
    if (channels.empty()) throw ConfigError("model: at least one conv block required");
    const int blocks = static_cast<int>(channels.size());
    if (frame_h % (1 << blocks) != 0 || frame_w % (1 << blocks) != 0) {
        throw ConfigError("model: frame extents must be divisible by 2^" + std::to_string(blocks));
    }
    if (feat_h() < 2 || feat_w() < 2) {
        throw ConfigError("model: feature map needs spatial extent >= 2");
    }
    if (classes < 2) throw ConfigError("model: need at least 2 classes");
    if (seq_len < 1) throw ConfigError("model: sequence length must be >= 1");
    if (variant == Variant::FullStam && heads < 1) {
        throw ConfigError("model: full-stam needs at least one head");
    }
    if (proj_dim > feat_c()) throw ConfigError("model: proj_dim must be <= feature channels");
}

std::vector<TensorPtr> StamParams::all() const {
    std::vector<TensorPtr> out;
    for (const auto& [name, t] : named()) {
        (void)name;
        out.push_back(t);
    }
    return out;
}

std::vector<std::pair<std::string, TensorPtr>> StamParams::named() const {
    std::vector<std::pair<std::string, TensorPtr>> out;
    for (std::size_t i = 0; i < backbone.size(); ++i) {
        out.emplace_back("backbone.block" + std::to_string(i) + ".kernel", backbone[i].kernel);
        out.emplace_back("backbone.block" + std::to_string(i) + ".bias", backbone[i].bias);
    }
    if (spatial) {
        out.emplace_back("spatial.kernel", spatial->kernel);
        out.emplace_back("spatial.bias", spatial->bias);
    }
    for (std::size_t i = 0; i < heads.size(); ++i) {
        const std::string p = "head" + std::to_string(i) + ".";
        out.emplace_back(p + "query_w", heads[i].query_w);
        out.emplace_back(p + "key_w", heads[i].key_w);
        out.emplace_back(p + "value_w", heads[i].value_w);
    }
    if (classifier.hidden_w) {
        out.emplace_back("classifier.hidden_w", classifier.hidden_w);
        out.emplace_back("classifier.hidden_b", classifier.hidden_b);
    }
    out.emplace_back("classifier.weight", classifier.weight);
    out.emplace_back("classifier.bias", classifier.bias);
    return out;
}

void StamParams::zero_grad() const {
    for (const auto& t : all()) t->zero_grad();
}

StamParams StamParams::clone() const {
    StamParams out;
    out.config = config;
    auto copy = [](const TensorPtr& t) -> TensorPtr {
        if (!t) return nullptr;
        return make_tensor(t->shape, t->values, t->requires_grad);
    };
    for (const auto& b : backbone) out.backbone.push_back({copy(b.kernel), copy(b.bias)});
    if (spatial) out.spatial = SpatialAttentionParams{copy(spatial->kernel), copy(spatial->bias)};
    for (const auto& h : heads) {
        out.heads.push_back({copy(h.query_w), copy(h.key_w), copy(h.value_w)});
    }
    out.classifier = {copy(classifier.hidden_w), copy(classifier.hidden_b),
                      copy(classifier.weight), copy(classifier.bias)};
    return out;
}

namespace {

TensorPtr uniform_tensor(Shape shape, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return make_tensor(std::move(shape), std::move(v), true);
}

}  // namespace

StamParams init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed, 0x1337);
    StamParams p;
    p.config = config;

    int c_in = 1;
    for (int c_out : config.channels) {
        ConvBlock b;
        b.kernel = uniform_tensor({3, 3, c_in, c_out}, 3 * 3 * c_in, rng);
        b.bias = make_tensor({c_out}, 0.0, true);
        p.backbone.push_back(std::move(b));
        c_in = c_out;
    }

    if (config.variant != Variant::CnnOnly) {
        SpatialAttentionParams s;
        s.kernel = uniform_tensor({7, 7, 2, 1}, 7 * 7 * 2, rng);
        s.bias = make_tensor({1}, 0.0, true);
        p.spatial = std::move(s);
    }

    if (config.variant == Variant::FullStam) {
        const int c = config.feat_c();
        const int d = config.head_dim();
        for (int i = 0; i < config.heads; ++i) {
            TemporalHeadParams h;
            h.query_w = uniform_tensor({c, d}, c, rng);
            h.key_w = uniform_tensor({c, d}, c, rng);
            h.value_w = uniform_tensor({c, c}, c, rng);
            p.heads.push_back(std::move(h));
        }
    }

    const int flat = config.flat_width();
    if (config.classifier_hidden > 0) {
        p.classifier.hidden_w = uniform_tensor({flat, config.classifier_hidden}, flat, rng);
        p.classifier.hidden_b = make_tensor({config.classifier_hidden}, 0.0, true);
        p.classifier.weight =
            uniform_tensor({config.classifier_hidden, config.classes}, config.classifier_hidden, rng);
    } else {
        p.classifier.weight = uniform_tensor({flat, config.classes}, flat, rng);
    }
    p.classifier.bias = make_tensor({config.classes}, 0.0, true);
    return p;
}

long long count_params(const StamParams& params) {
    long long n = 0;
    for (const auto& t : params.all()) n += static_cast<long long>(t->size());
    return n;
}

TensorPtr backbone_forward(Tape& tape, const TensorPtr& frame, const StamParams& params) {
    if (frame->ndim() != 3 || frame->shape[2] != 1) {
        throw DimensionError("backbone: frame must be [H,W,1], got " + shape_str(frame->shape));
    }
    if (frame->shape[0] != params.config.frame_h || frame->shape[1] != params.config.frame_w) {
        throw ConfigError("backbone: frame extents do not match model config");
    }
    TensorPtr x = frame;
    for (const auto& block : params.backbone) {
        x = conv2d(tape, x, block.kernel, block.bias, 1, 1);
        x = activation(tape, x, ActKind::Relu);
        x = pool2d(tape, x, 2, 2, PoolMode::Max);
    }
    return x;
}

TensorPtr spatial_attention_map(Tape& tape, const TensorPtr& feat,
                                const SpatialAttentionParams& params) {
    auto mx = channel_pool(tape, feat, PoolMode::Max);
    auto avg = channel_pool(tape, feat, PoolMode::Avg);
    auto stacked = concat(tape, {mx, avg}, 2);  // [h,w,2], max first
    auto conv = conv2d(tape, stacked, params.kernel, params.bias, 1, 3);
    return activation(tape, conv, ActKind::Sigmoid);
}

TensorPtr spatial_attention(Tape& tape, const TensorPtr& feat,
                            const SpatialAttentionParams& params) {
    return mul(tape, feat, spatial_attention_map(tape, feat, params));
}

HeadResult temporal_attention_head(Tape& tape, const TensorPtr& tokens,
                                   const TemporalHeadParams& params) {
    if (tokens->ndim() != 2 || tokens->shape[0] < 1) {
        throw ContractError("temporal head: tokens must be a nonempty [m,c] matrix");
    }
    auto q = matmul(tape, tokens, params.query_w);  // [m,d]
    auto k = matmul(tape, tokens, params.key_w);    // [m,d]
    auto scores = matmul(tape, q, transpose(tape, k));  // s[i][j] = q_i . k_j
    // normalize over i for fixed j: softmax over the rows of s^T
    auto attn = softmax_rows(tape, transpose(tape, scores));  // [m,m], row j
    auto v = matmul(tape, tokens, params.value_w);            // [m,c]
    auto mixed = matmul(tape, attn, v);
    return {add(tape, mixed, tokens), attn};
}

TensorPtr multi_head_aggregate(Tape& tape, const std::vector<TensorPtr>& head_outputs) {
    if (head_outputs.empty()) throw ContractError("multi_head_aggregate: no head outputs");
    return mean_stack(tape, head_outputs);
}

ForwardTrace forward_from_features(Tape& tape, const std::vector<TensorPtr>& features,
                                   const StamParams& params) {
    const ModelConfig& cfg = params.config;
    if (static_cast<int>(features.size()) != cfg.seq_len) {
        throw ContractError("forward: expected " + std::to_string(cfg.seq_len) + " frames, got " +
                            std::to_string(features.size()));
    }
    ForwardTrace trace;
    trace.features = features;

    std::vector<TensorPtr> active = features;
    if (cfg.variant != Variant::CnnOnly) {
        trace.gated.reserve(features.size());
        for (const auto& f : features) trace.gated.push_back(spatial_attention(tape, f, *params.spatial));
        active = trace.gated;
    }

    TensorPtr flat;
    if (cfg.variant == Variant::FullStam) {
        const int cells = cfg.feat_h() * cfg.feat_w();
        std::vector<TensorPtr> token_blocks;
        token_blocks.reserve(active.size());
        for (const auto& f : active) token_blocks.push_back(reshape(tape, f, {cells, cfg.feat_c()}));
        trace.tokens = concat(tape, token_blocks, 0);  // [m,c]
        std::vector<TensorPtr> outputs;
        outputs.reserve(params.heads.size());
        for (const auto& head : params.heads) {
            auto hr = temporal_attention_head(tape, trace.tokens, head);
            outputs.push_back(hr.output);
            trace.attention_maps.push_back(hr.attention);
        }
        auto agg = multi_head_aggregate(tape, outputs);
        flat = reshape(tape, agg, {1, cfg.flat_width()});
    } else {
        std::vector<TensorPtr> rows;
        rows.reserve(active.size());
        for (const auto& f : active) {
            rows.push_back(reshape(tape, f, {1, cfg.feat_h() * cfg.feat_w() * cfg.feat_c()}));
        }
        flat = concat(tape, rows, 1);  // [1, n*h*w*c]
    }

    TensorPtr x = flat;
    if (params.classifier.hidden_w) {
        x = matmul(tape, x, params.classifier.hidden_w);
        x = reshape(tape, x, {cfg.classifier_hidden});
        x = add(tape, x, params.classifier.hidden_b);
        x = activation(tape, x, ActKind::Relu);
        x = reshape(tape, x, {1, cfg.classifier_hidden});
    }
    x = matmul(tape, x, params.classifier.weight);
    x = reshape(tape, x, {cfg.classes});
    trace.logits = add(tape, x, params.classifier.bias);
    return trace;
}

ForwardTrace model_forward_traced(Tape& tape, const std::vector<TensorPtr>& frames,
                                  const StamParams& params) {
    if (static_cast<int>(frames.size()) != params.config.seq_len) {
        throw ContractError("forward: expected " + std::to_string(params.config.seq_len) +
                            " frames, got " + std::to_string(frames.size()));
    }
    std::vector<TensorPtr> features;
    features.reserve(frames.size());
    for (const auto& frame : frames) features.push_back(backbone_forward(tape, frame, params));
    return forward_from_features(tape, features, params);
}

TensorPtr model_forward(Tape& tape, const std::vector<TensorPtr>& frames,
                        const StamParams& params) {
    return model_forward_traced(tape, frames, params).logits;
}

int predict_label(const TensorPtr& logits) {
    int best = 0;
    for (std::size_t i = 1; i < logits->size(); ++i) {
        if (logits->values[i] > logits->values[best]) best = static_cast<int>(i);
    }
    return best;
}

}  // namespace stam
