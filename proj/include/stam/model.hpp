#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stam/tensor.hpp"

namespace stam {

enum class Variant { CnnOnly, CnnSpatial, FullStam };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct ModelConfig {
    int frame_h = 32;
    int frame_w = 32;
    std::vector<int> channels = {8, 16, 32};  // one conv block per entry
    int classes = 10;
    int seq_len = 4;   // n
    int heads = 10;
    int proj_dim = 0;  // W_q/W_k width d; 0 -> c/2 (min 1)
    int classifier_hidden = 0;  // 0 = single affine layer
    Variant variant = Variant::FullStam;

    int feat_h() const { return frame_h >> channels.size(); }
    int feat_w() const { return frame_w >> channels.size(); }
    int feat_c() const { return channels.back(); }
    int tokens() const { return seq_len * feat_h() * feat_w(); }  // m = n*h*w
    int head_dim() const { return proj_dim > 0 ? proj_dim : std::max(1, feat_c() / 2); }
    int flat_width() const { return tokens() * feat_c(); }

    void validate() const;  // throws ConfigError
};

struct ConvBlock {
    TensorPtr kernel;  // [3,3,c_in,c_out]
    TensorPtr bias;    // [c_out]
};

struct SpatialAttentionParams {
    TensorPtr kernel;  // [7,7,2,1] over the [max;avg] channel stack
    TensorPtr bias;    // [1]
};

struct TemporalHeadParams {
    TensorPtr query_w;  // [c,d]
    TensorPtr key_w;    // [c,d]
    TensorPtr value_w;  // [c,c], channel-preserving so the residual add is legal
};

struct ClassifierParams {
    TensorPtr hidden_w;  // optional [D,hidden]
    TensorPtr hidden_b;  // optional [hidden]
    TensorPtr weight;    // [D,K] or [hidden,K]
    TensorPtr bias;      // [K]
};

struct StamParams {
    ModelConfig config;
    std::vector<ConvBlock> backbone;
    std::optional<SpatialAttentionParams> spatial;  // present iff variant != cnn-only
    std::vector<TemporalHeadParams> heads;          // nonempty iff variant == full-stam
    ClassifierParams classifier;

    std::vector<TensorPtr> all() const;  // learnables in canonical order
    std::vector<std::pair<std::string, TensorPtr>> named() const;
    void zero_grad() const;
    StamParams clone() const;  // deep copy with fresh leaves
};

// Fan-in-scaled uniform kernels/matrices, zero biases, deterministic per seed.
StamParams init_params(const ModelConfig& config, std::uint64_t seed);

long long count_params(const StamParams& params);

// --- forward passes ----------------------------------------------------

// conv(3x3, pad 1) + relu + maxpool(2) per block; tap is the last pool output
TensorPtr backbone_forward(Tape& tape, const TensorPtr& frame, const StamParams& params);

// A_S = sigmoid(conv7x7([channel-max; channel-avg])), shape [h,w,1]
TensorPtr spatial_attention_map(Tape& tape, const TensorPtr& feat,
                                const SpatialAttentionParams& params);
// gated features A_S (x) F
TensorPtr spatial_attention(Tape& tape, const TensorPtr& feat,
                            const SpatialAttentionParams& params);

struct HeadResult {
    TensorPtr output;     // [m,c]
    TensorPtr attention;  // [m,m]; row j holds the weights token j attends with
};

// tokens [m,c]; attention per the column-normalized correlation map with a
// residual add of the input tokens
HeadResult temporal_attention_head(Tape& tape, const TensorPtr& tokens,
                                   const TemporalHeadParams& params);

// elementwise mean over head outputs
TensorPtr multi_head_aggregate(Tape& tape, const std::vector<TensorPtr>& head_outputs);

struct ForwardTrace {
    TensorPtr logits;                    // [K]
    std::vector<TensorPtr> features;     // backbone map per frame
    std::vector<TensorPtr> gated;        // after spatial attention (empty for cnn-only)
    std::vector<TensorPtr> attention_maps;  // per-head A_T (full-stam only)
    TensorPtr tokens;                    // [m,c] (full-stam only)
};

ForwardTrace model_forward_traced(Tape& tape, const std::vector<TensorPtr>& frames,
                                  const StamParams& params);
TensorPtr model_forward(Tape& tape, const std::vector<TensorPtr>& frames,
                        const StamParams& params);

// everything after the backbone tap; used by Grad-CAM checks
ForwardTrace forward_from_features(Tape& tape, const std::vector<TensorPtr>& features,
                                   const StamParams& params);

// lowest index wins ties
int predict_label(const TensorPtr& logits);

}  // namespace stam
