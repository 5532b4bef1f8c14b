#pragma once

#include "sst/layers.hpp"

namespace sst {

struct EncoderConfig {
    Index d_in = 8;
    Index d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    Index chunk_frames = 48;
    int frame_ms = 20;  // one chunk = chunk_frames * frame_ms = 960 ms
    Index window_chunks = 10;
    double rope_base = 10000.0;

    ChunkMaskSpec mask_spec() const {
        return {.chunk_frames = chunk_frames, .window_chunks = window_chunks};
    }
    RopeConfig rope() const { return {.head_dim = d_model / n_heads, .base = rope_base}; }
    int chunk_ms() const { return static_cast<int>(chunk_frames) * frame_ms; }
};

struct EncoderState {
    std::vector<LayerKVCache> caches;  // one per layer
    std::int64_t chunks_seen = 0;
};

// Chunkwise-causal streaming encoder over precomputed acoustic feature
// frames. Incremental and one-shot paths compute the same function.
class Encoder {
public:
    Encoder() = default;
    Encoder(const EncoderConfig& cfg, std::uint64_t seed);

    const EncoderConfig& config() const { return cfg_; }

    // [T x d_in] -> [T x d_model]; T must be a multiple of chunk_frames.
    Tensor forward_full(const Tensor& frames, Tape* tape) const;
    Matrix encode_full(const Matrix& frames) const;

    EncoderState make_state() const;
    // Exactly one chunk of frames; returns that chunk's features.
    Matrix encode_chunk(EncoderState& state, const Matrix& frames) const;

    void add_params(std::vector<std::pair<std::string, Tensor>>& out) const;
    void add_trainable(std::vector<Tensor>& out) const;

private:
    EncoderConfig cfg_;
    Linear in_proj_;  // d_in -> d_model, with bias
    std::vector<BlockParams> blocks_;
    Tensor lnf_g_, lnf_b_;
};

struct AdapterConfig {
    Index d_model = 64;
    Index d_llm = 64;
};

// Two conv stages (kernel 2, stride 2) and a linear projection into the
// decoder embedding space: 4x temporal downsampling, 48 frames -> 12 vectors.
class Adapter {
public:
    Adapter() = default;
    Adapter(const AdapterConfig& cfg, std::uint64_t seed);

    const AdapterConfig& config() const { return cfg_; }

    // [T x d_model] -> [T/4 x d_llm]; T must be divisible by 4.
    Tensor forward(const Tensor& features, Tape* tape) const;
    Matrix adapt(const Matrix& features) const;

    void add_params(std::vector<std::pair<std::string, Tensor>>& out) const;
    void add_trainable(std::vector<Tensor>& out) const;

private:
    AdapterConfig cfg_;
    Tensor conv1_, conv2_;  // [2*d_model x d_model] each
    Linear proj_;           // d_model -> d_llm, with bias
};

}  // namespace sst
