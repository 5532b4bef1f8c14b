#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sst/attention.hpp"
#include "sst/tensor.hpp"

namespace sst {

struct LoraConfig {
    Index rank = 4;
    double alpha = 8.0;
    double dropout = 0.1;
    std::uint64_t seed = 0;
};

// Linear map [in x out], row-vector convention (y = x W + b), with an
// optional low-rank adapter y += (alpha/rank) * (x A) B. Base weights stay
// frozen while A/B train.
struct Linear {
    Tensor w;  // in x out
    Tensor b;  // 1 x out, empty when bias-free
    bool use_bias = false;

    bool has_lora = false;
    Tensor lora_a;  // in x rank, seeded Gaussian
    Tensor lora_b;  // rank x out, zero-init
    double lora_alpha = 0.0;
    Index lora_rank = 0;
    double lora_dropout = 0.0;

    static Linear make(Index in, Index out, bool bias, Rng& rng);

    // Dropout (training only) applies on the adapter input path.
    Tensor apply(const Tensor& x, Tape* tape, Rng* dropout_rng = nullptr) const;

    // W + (alpha/rank) * A B, for merge-equivalence checks.
    Matrix merged_weight() const;

    void add_params(const std::string& prefix,
                    std::vector<std::pair<std::string, Tensor>>& out) const;
    void add_trainable(bool lora_only, std::vector<Tensor>& out) const;
};

void lora_wrap(Linear& linear, const LoraConfig& cfg);

// Pre-norm transformer block; feed-forward dim is 4 x d_model.
struct BlockParams {
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
    Linear wq, wk, wv, wo;  // bias-free
    Linear w1, w2;          // with bias

    static BlockParams make(Index d_model, Rng& rng);

    void add_params(const std::string& prefix,
                    std::vector<std::pair<std::string, Tensor>>& out) const;
    void add_trainable(bool lora_only, std::vector<Tensor>& out) const;
};

struct BlockStepOut {
    Tensor y;
    Matrix k_new, v_new;  // unrotated, for cache appends
};

// One pre-norm block. Queries come from x; keys/values are the optional
// cache prefix (constant w.r.t. the tape) followed by projections of x. The
// mask is [rows(x) x (cache size + rows(x))].
BlockStepOut block_forward(const Tensor& x, const BlockParams& p,
                           const std::vector<std::int64_t>& q_pos,
                           const LayerKVCache* cache, const BoolMask& mask,
                           const RopeConfig& rope, int n_heads, Tape* tape,
                           Rng* dropout_rng = nullptr);

constexpr double kLayerNormEps = 1e-5;

}  // namespace sst
