#pragma once

#include <cstdint>
#include <vector>

#include "sst/tensor.hpp"

namespace sst {

using BoolMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct RopeConfig {
    Index head_dim = 0;  // must be even
    double base = 10000.0;
};

struct ChunkMaskSpec {
    Index chunk_frames = 48;
    Index window_chunks = 10;  // sliding window, current chunk included
};

// Bounded per-layer store of *unrotated* key vectors and value vectors with
// logical positions. Rotation happens at attention time from the positions,
// so eviction and re-indexing never invalidate stored keys.
struct LayerKVCache {
    Matrix keys;    // n x d
    Matrix values;  // n x d
    std::vector<std::int64_t> positions;
    Index capacity = 0;  // 0 = unbounded

    Index size() const { return keys.rows(); }
    std::int64_t first_logical_position() const {
        return positions.empty() ? 0 : positions.front();
    }
    std::int64_t next_position() const {
        return positions.empty() ? 0 : positions.back() + 1;
    }

    // Entries must continue the cache contiguously.
    void append(const Matrix& k, const Matrix& v, const std::vector<std::int64_t>& pos);
    void evict_front(Index n);
    // Keep only the newest `keep` entries.
    void evict_to(Index keep);
};

// mask[q][k] = true iff chunk(k) in [chunk(q) - window + 1, chunk(q)],
// chunk(t) = floor(t / chunk_frames). Within-chunk attention is bidirectional;
// causality is at chunk granularity.
BoolMask build_chunkwise_mask(Index n_frames, const ChunkMaskSpec& spec);

// Rectangular chunk-window mask for explicit query/key position lists.
BoolMask build_chunkwise_rect_mask(const std::vector<std::int64_t>& q_pos,
                                   const std::vector<std::int64_t>& k_pos,
                                   const ChunkMaskSpec& spec);

// Token-level causal mask for queries at global offset `q_offset` over
// `n_keys` keys: query i sees keys 0 .. q_offset + i.
BoolMask build_causal_mask(Index n_queries, Index n_keys, Index q_offset);

// 0 where allowed, -inf where masked.
Matrix to_additive(const BoolMask& mask);

// Scaled dot-product attention over already-projected q/k/v with an additive
// mask; autograd-aware. Every query row must have at least one allowed key.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const BoolMask& mask,
                 Tape* tape);

// Multi-head attention with RoPE applied to q and k from logical positions.
// q/k/v are [T x d_model]; heads are contiguous column blocks.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const std::vector<std::int64_t>& q_pos,
                            const std::vector<std::int64_t>& k_pos, const BoolMask& mask,
                            const RopeConfig& rope, int n_heads, Tape* tape);

// Incremental counterpart used at inference: attends the new block against
// cache + new under the chunkwise mask, appends the unrotated k/v to the
// cache, and evicts entries that fell out of the sliding window.
Matrix incremental_attend(LayerKVCache& cache, const Matrix& q, const Matrix& k,
                          const Matrix& v, const std::vector<std::int64_t>& positions,
                          const ChunkMaskSpec& spec, const RopeConfig& rope, int n_heads);

}  // namespace sst
