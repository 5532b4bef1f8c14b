#include "sst/attention.hpp"

#include <cmath>
#include <limits>

namespace sst {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Index chunk_of(std::int64_t pos, Index chunk_frames) {
    return static_cast<Index>(pos / chunk_frames);
}
}  // namespace

void LayerKVCache::append(const Matrix& k, const Matrix& v,
                          const std::vector<std::int64_t>& pos) {
    if (k.rows() != v.rows() || k.rows() != static_cast<Index>(pos.size()))
        throw std::invalid_argument("LayerKVCache::append: row/position mismatch");
    if (!pos.empty() && !positions.empty() && pos.front() != next_position())
        throw std::logic_error("LayerKVCache::append: position discontinuity");
    for (std::size_t i = 1; i < pos.size(); ++i)
        if (pos[i] != pos[i - 1] + 1)
            throw std::logic_error("LayerKVCache::append: position discontinuity");
    if (keys.rows() == 0) {
        keys = k;
        values = v;
    } else {
        Matrix nk(keys.rows() + k.rows(), k.cols());
        nk << keys, k;
        keys = std::move(nk);
        Matrix nv(values.rows() + v.rows(), v.cols());
        nv << values, v;
        values = std::move(nv);
    }
    positions.insert(positions.end(), pos.begin(), pos.end());
    if (capacity > 0 && size() > capacity) evict_to(capacity);
}

void LayerKVCache::evict_front(Index n) {
    if (n <= 0) return;
    if (n >= size()) {
        keys.resize(0, keys.cols());
        values.resize(0, values.cols());
        positions.clear();
        return;
    }
    keys = Matrix(keys.bottomRows(keys.rows() - n));
    values = Matrix(values.bottomRows(values.rows() - n));
    positions.erase(positions.begin(), positions.begin() + n);
}

void LayerKVCache::evict_to(Index keep) {
    if (size() > keep) evict_front(size() - keep);
}

BoolMask build_chunkwise_mask(Index n_frames, const ChunkMaskSpec& spec) {
    if (n_frames < 1) throw std::invalid_argument("build_chunkwise_mask: empty");
    if (spec.chunk_frames < 1 || spec.window_chunks < 1)
        throw std::invalid_argument("build_chunkwise_mask: bad spec");
    BoolMask mask(n_frames, n_frames);
    for (Index q = 0; q < n_frames; ++q) {
        const Index cq = q / spec.chunk_frames;
        for (Index k = 0; k < n_frames; ++k) {
            const Index ck = k / spec.chunk_frames;
            mask(q, k) = ck >= cq - spec.window_chunks + 1 && ck <= cq;
        }
    }
    return mask;
}

BoolMask build_chunkwise_rect_mask(const std::vector<std::int64_t>& q_pos,
                                   const std::vector<std::int64_t>& k_pos,
                                   const ChunkMaskSpec& spec) {
    BoolMask mask(static_cast<Index>(q_pos.size()), static_cast<Index>(k_pos.size()));
    for (Index i = 0; i < mask.rows(); ++i) {
        const Index cq = chunk_of(q_pos[static_cast<std::size_t>(i)], spec.chunk_frames);
        for (Index j = 0; j < mask.cols(); ++j) {
            const Index ck = chunk_of(k_pos[static_cast<std::size_t>(j)], spec.chunk_frames);
            mask(i, j) = ck >= cq - spec.window_chunks + 1 && ck <= cq;
        }
    }
    return mask;
}

BoolMask build_causal_mask(Index n_queries, Index n_keys, Index q_offset) {
    BoolMask mask(n_queries, n_keys);
    for (Index q = 0; q < n_queries; ++q)
        for (Index k = 0; k < n_keys; ++k) mask(q, k) = k <= q_offset + q;
    return mask;
}

Matrix to_additive(const BoolMask& mask) {
    Matrix add(mask.rows(), mask.cols());
    for (Index i = 0; i < mask.rows(); ++i)
        for (Index j = 0; j < mask.cols(); ++j) add(i, j) = mask(i, j) ? 0.0 : kNegInf;
    return add;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const BoolMask& mask,
                 Tape* tape) {
    if (q.cols() != k.cols() || k.rows() != v.rows())
        throw std::invalid_argument("attention: shape mismatch");
    if (mask.rows() != q.rows() || mask.cols() != k.rows())
        throw std::invalid_argument("attention: mask shape mismatch");
    for (Index i = 0; i < mask.rows(); ++i)
        if (!mask.row(i).any())
            throw std::logic_error("attention: fully masked query row");
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    Tensor logits = scale(matmul_nt(q, k, tape), inv_scale, tape);
    Tensor masked = add(logits, Tensor(to_additive(mask)), tape);
    Tensor weights = softmax_rows(masked, tape);
    return matmul(weights, v, tape);
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const std::vector<std::int64_t>& q_pos,
                            const std::vector<std::int64_t>& k_pos, const BoolMask& mask,
                            const RopeConfig& rope, int n_heads, Tape* tape) {
    const Index d = q.cols();
    if (d % n_heads != 0)
        throw std::invalid_argument("multi_head_attention: width not divisible by heads");
    const Index hd = d / n_heads;
    if (rope.head_dim != hd)
        throw std::invalid_argument("multi_head_attention: rope head_dim mismatch");
    std::vector<Tensor> head_outputs;
    head_outputs.reserve(static_cast<std::size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
        Tensor qh = rope_rows(slice_cols(q, h * hd, hd, tape), q_pos, rope.base, tape);
        Tensor kh = rope_rows(slice_cols(k, h * hd, hd, tape), k_pos, rope.base, tape);
        Tensor vh = slice_cols(v, h * hd, hd, tape);
        head_outputs.push_back(attention(qh, kh, vh, mask, tape));
    }
    return concat_cols(head_outputs, tape);
}

Matrix incremental_attend(LayerKVCache& cache, const Matrix& q, const Matrix& k,
                          const Matrix& v, const std::vector<std::int64_t>& positions,
                          const ChunkMaskSpec& spec, const RopeConfig& rope, int n_heads) {
    const Index n_new = q.rows();
    if (k.rows() != n_new || v.rows() != n_new ||
        static_cast<Index>(positions.size()) != n_new)
        throw std::invalid_argument("incremental_attend: row/position mismatch");
    const std::int64_t expect = cache.next_position();
    for (Index i = 0; i < n_new; ++i)
        if (positions[static_cast<std::size_t>(i)] != expect + i)
            throw std::logic_error("incremental_attend: position discontinuity");

    std::vector<std::int64_t> all_pos = cache.positions;
    all_pos.insert(all_pos.end(), positions.begin(), positions.end());
    const Index n_all = static_cast<Index>(all_pos.size());
    Matrix keys_all(n_all, k.cols());
    Matrix values_all(n_all, v.cols());
    if (cache.size() > 0) {
        keys_all.topRows(cache.size()) = cache.keys;
        values_all.topRows(cache.size()) = cache.values;
    }
    keys_all.bottomRows(n_new) = k;
    values_all.bottomRows(n_new) = v;

    BoolMask mask(n_new, n_all);
    for (Index i = 0; i < n_new; ++i) {
        const Index cq = chunk_of(positions[static_cast<std::size_t>(i)], spec.chunk_frames);
        for (Index j = 0; j < n_all; ++j) {
            const Index ck = chunk_of(all_pos[static_cast<std::size_t>(j)], spec.chunk_frames);
            mask(i, j) = ck >= cq - spec.window_chunks + 1 && ck <= cq;
        }
    }
    const Matrix add_mask = to_additive(mask);

    const Index d = q.cols();
    if (d % n_heads != 0)
        throw std::invalid_argument("incremental_attend: width not divisible by heads");
    const Index hd = d / n_heads;
    if (rope.head_dim != hd)
        throw std::invalid_argument("incremental_attend: rope head_dim mismatch");
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    Matrix out(n_new, d);
    for (int h = 0; h < n_heads; ++h) {
        Matrix qh = q.middleCols(h * hd, hd);
        rope_rows_inplace(qh, positions, rope.base);
        Matrix kh = keys_all.middleCols(h * hd, hd);
        rope_rows_inplace(kh, all_pos, rope.base);
        Matrix logits = qh * kh.transpose() * inv_scale + add_mask;
        Matrix weights = softmax_rows_value(logits);
        out.middleCols(h * hd, hd) = weights * values_all.middleCols(h * hd, hd);
    }

    cache.append(k, v, positions);
    // retain only chunks inside [last_chunk - w + 1, last_chunk]
    const Index last_chunk = chunk_of(all_pos.back(), spec.chunk_frames);
    Index drop = 0;
    while (drop < cache.size() &&
           chunk_of(cache.positions[static_cast<std::size_t>(drop)], spec.chunk_frames) <
               last_chunk - spec.window_chunks + 1)
        ++drop;
    cache.evict_front(drop);
    return out;
}

}  // namespace sst
