#include "sst/encoder.hpp"

namespace sst {

Encoder::Encoder(const EncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.d_model % cfg.n_heads != 0)
        throw std::invalid_argument("Encoder: d_model not divisible by n_heads");
    if ((cfg.d_model / cfg.n_heads) % 2 != 0)
        throw std::invalid_argument("Encoder: head_dim must be even for RoPE");
    Rng rng(seed);
    in_proj_ = Linear::make(cfg.d_in, cfg.d_model, true, rng);
    for (int l = 0; l < cfg.n_layers; ++l) blocks_.push_back(BlockParams::make(cfg.d_model, rng));
    lnf_g_ = Tensor::constant(1, cfg.d_model, 1.0);
    lnf_b_ = Tensor::zeros(1, cfg.d_model);
}

Tensor Encoder::forward_full(const Tensor& frames, Tape* tape) const {
    const Index t = frames.rows();
    if (frames.cols() != cfg_.d_in)
        throw std::invalid_argument("Encoder: wrong input feature dim");
    if (t % cfg_.chunk_frames != 0)
        throw std::invalid_argument("Encoder: frame count not a multiple of chunk_frames");
    std::vector<std::int64_t> pos(static_cast<std::size_t>(t));
    for (Index i = 0; i < t; ++i) pos[static_cast<std::size_t>(i)] = i;
    const BoolMask mask = build_chunkwise_mask(t, cfg_.mask_spec());

    Tensor x = in_proj_.apply(frames, tape);
    for (const auto& blk : blocks_)
        x = block_forward(x, blk, pos, nullptr, mask, cfg_.rope(), cfg_.n_heads, tape).y;
    return layer_norm(x, lnf_g_, lnf_b_, kLayerNormEps, tape);
}

Matrix Encoder::encode_full(const Matrix& frames) const {
    return forward_full(Tensor(frames), nullptr).value();
}

EncoderState Encoder::make_state() const {
    EncoderState st;
    st.caches.resize(static_cast<std::size_t>(cfg_.n_layers));
    for (auto& c : st.caches) c.capacity = cfg_.window_chunks * cfg_.chunk_frames;
    return st;
}

Matrix Encoder::encode_chunk(EncoderState& state, const Matrix& frames) const {
    if (frames.rows() != cfg_.chunk_frames || frames.cols() != cfg_.d_in)
        throw std::invalid_argument("encode_chunk: frames must be chunk_frames x d_in");
    const std::int64_t base = state.chunks_seen * cfg_.chunk_frames;
    std::vector<std::int64_t> pos(static_cast<std::size_t>(cfg_.chunk_frames));
    for (Index i = 0; i < cfg_.chunk_frames; ++i) pos[static_cast<std::size_t>(i)] = base + i;

    Tensor x = in_proj_.apply(Tensor(frames), nullptr);
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        LayerKVCache& cache = state.caches[l];
        std::vector<std::int64_t> k_pos = cache.positions;
        k_pos.insert(k_pos.end(), pos.begin(), pos.end());
        const BoolMask mask = build_chunkwise_rect_mask(pos, k_pos, cfg_.mask_spec());
        BlockStepOut out = block_forward(x, blocks_[l], pos, &cache, mask, cfg_.rope(),
                                         cfg_.n_heads, nullptr);
        cache.append(out.k_new, out.v_new, pos);
        // keep only the chunks inside the sliding window
        Index drop = 0;
        const std::int64_t min_chunk = state.chunks_seen - cfg_.window_chunks + 1;
        while (drop < cache.size() &&
               cache.positions[static_cast<std::size_t>(drop)] / cfg_.chunk_frames < min_chunk)
            ++drop;
        cache.evict_front(drop);
        x = out.y;
    }
    ++state.chunks_seen;
    return layer_norm(x, lnf_g_, lnf_b_, kLayerNormEps, nullptr).value();
}

void Encoder::add_params(std::vector<std::pair<std::string, Tensor>>& out) const {
    in_proj_.add_params("encoder.in_proj", out);
    for (std::size_t l = 0; l < blocks_.size(); ++l)
        blocks_[l].add_params("encoder.block" + std::to_string(l), out);
    out.emplace_back("encoder.lnf_g", lnf_g_);
    out.emplace_back("encoder.lnf_b", lnf_b_);
}

void Encoder::add_trainable(std::vector<Tensor>& out) const {
    in_proj_.add_trainable(false, out);
    for (const auto& blk : blocks_) blk.add_trainable(false, out);
    out.push_back(lnf_g_);
    out.push_back(lnf_b_);
}

Adapter::Adapter(const AdapterConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    const double std1 = 1.0 / std::sqrt(2.0 * static_cast<double>(cfg.d_model));
    conv1_ = Tensor::gaussian(2 * cfg.d_model, cfg.d_model, std1, rng);
    conv2_ = Tensor::gaussian(2 * cfg.d_model, cfg.d_model, std1, rng);
    proj_ = Linear::make(cfg.d_model, cfg.d_llm, true, rng);
}

Tensor Adapter::forward(const Tensor& features, Tape* tape) const {
    if (features.cols() != cfg_.d_model)
        throw std::invalid_argument("Adapter: wrong feature dim");
    if (features.rows() % 4 != 0)
        throw std::invalid_argument("Adapter: length not divisible by 4");
    Tensor h = gelu(conv1d(features, conv1_, 2, 2, tape), tape);
    h = gelu(conv1d(h, conv2_, 2, 2, tape), tape);
    return proj_.apply(h, tape);
}

Matrix Adapter::adapt(const Matrix& features) const {
    return forward(Tensor(features), nullptr).value();
}

void Adapter::add_params(std::vector<std::pair<std::string, Tensor>>& out) const {
    out.emplace_back("adapter.conv1", conv1_);
    out.emplace_back("adapter.conv2", conv2_);
    proj_.add_params("adapter.proj", out);
}

void Adapter::add_trainable(std::vector<Tensor>& out) const {
    out.push_back(conv1_);
    out.push_back(conv2_);
    proj_.add_trainable(false, out);
}

}  // namespace sst
