#include "sst/layers.hpp"

#include <cmath>

namespace sst {

Linear Linear::make(Index in, Index out, bool bias, Rng& rng) {
    Linear l;
    l.w = Tensor::gaussian(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng);
    l.use_bias = bias;
    if (bias) l.b = Tensor::zeros(1, out);
    return l;
}

Tensor Linear::apply(const Tensor& x, Tape* tape, Rng* dropout_rng) const {
    Tensor base = use_bias ? affine(x, w, b, tape) : matmul(x, w, tape);
    if (!has_lora) return base;
    Tensor in = x;
    if (dropout_rng && lora_dropout > 0.0) {
        Matrix m(x.rows(), x.cols());
        const double keep = 1.0 - lora_dropout;
        for (Index i = 0; i < m.rows(); ++i)
            for (Index j = 0; j < m.cols(); ++j)
                m(i, j) = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
        in = cmul(x, Tensor(std::move(m)), tape);
    }
    Tensor delta = matmul(matmul(in, lora_a, tape), lora_b, tape);
    return add(base, scale(delta, lora_alpha / static_cast<double>(lora_rank), tape),
               tape);
}

Matrix Linear::merged_weight() const {
    if (!has_lora) return w.value();
    return w.value() + (lora_alpha / static_cast<double>(lora_rank)) *
                           (lora_a.value() * lora_b.value());
}

void Linear::add_params(const std::string& prefix,
                        std::vector<std::pair<std::string, Tensor>>& out) const {
    out.emplace_back(prefix + ".w", w);
    if (use_bias) out.emplace_back(prefix + ".b", b);
    if (has_lora) {
        out.emplace_back(prefix + ".lora_a", lora_a);
        out.emplace_back(prefix + ".lora_b", lora_b);
    }
}

void Linear::add_trainable(bool lora_only, std::vector<Tensor>& out) const {
    if (lora_only) {
        if (has_lora) {
            out.push_back(lora_a);
            out.push_back(lora_b);
        }
        return;
    }
    out.push_back(w);
    if (use_bias) out.push_back(b);
}

void lora_wrap(Linear& linear, const LoraConfig& cfg) {
    if (cfg.rank < 1 || cfg.rank > std::min(linear.w.rows(), linear.w.cols()))
        throw std::invalid_argument("lora_wrap: rank out of range");
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0)
        throw std::invalid_argument("lora_wrap: bad dropout");
    Rng rng(cfg.seed);
    linear.has_lora = true;
    linear.lora_a = Tensor::gaussian(linear.w.rows(), cfg.rank,
                                     1.0 / std::sqrt(static_cast<double>(linear.w.rows())),
                                     rng);
    linear.lora_b = Tensor::zeros(cfg.rank, linear.w.cols());
    linear.lora_alpha = cfg.alpha;
    linear.lora_rank = cfg.rank;
    linear.lora_dropout = cfg.dropout;
}

BlockParams BlockParams::make(Index d_model, Rng& rng) {
    BlockParams p;
    p.ln1_g = Tensor::constant(1, d_model, 1.0);
    p.ln1_b = Tensor::zeros(1, d_model);
    p.ln2_g = Tensor::constant(1, d_model, 1.0);
    p.ln2_b = Tensor::zeros(1, d_model);
    p.wq = Linear::make(d_model, d_model, false, rng);
    p.wk = Linear::make(d_model, d_model, false, rng);
    p.wv = Linear::make(d_model, d_model, false, rng);
    p.wo = Linear::make(d_model, d_model, false, rng);
    p.w1 = Linear::make(d_model, 4 * d_model, true, rng);
    p.w2 = Linear::make(4 * d_model, d_model, true, rng);
    return p;
}

void BlockParams::add_params(const std::string& prefix,
                             std::vector<std::pair<std::string, Tensor>>& out) const {
    out.emplace_back(prefix + ".ln1_g", ln1_g);
    out.emplace_back(prefix + ".ln1_b", ln1_b);
    out.emplace_back(prefix + ".ln2_g", ln2_g);
    out.emplace_back(prefix + ".ln2_b", ln2_b);
    wq.add_params(prefix + ".wq", out);
    wk.add_params(prefix + ".wk", out);
    wv.add_params(prefix + ".wv", out);
    wo.add_params(prefix + ".wo", out);
    w1.add_params(prefix + ".w1", out);
    w2.add_params(prefix + ".w2", out);
}

void BlockParams::add_trainable(bool lora_only, std::vector<Tensor>& out) const {
    if (!lora_only) {
        out.push_back(ln1_g);
        out.push_back(ln1_b);
        out.push_back(ln2_g);
        out.push_back(ln2_b);
    }
    wq.add_trainable(lora_only, out);
    wk.add_trainable(lora_only, out);
    wv.add_trainable(lora_only, out);
    wo.add_trainable(lora_only, out);
    w1.add_trainable(lora_only, out);
    w2.add_trainable(lora_only, out);
}

BlockStepOut block_forward(const Tensor& x, const BlockParams& p,
                           const std::vector<std::int64_t>& q_pos,
                           const LayerKVCache* cache, const BoolMask& mask,
                           const RopeConfig& rope, int n_heads, Tape* tape,
                           Rng* dropout_rng) {
    Tensor h = layer_norm(x, p.ln1_g, p.ln1_b, kLayerNormEps, tape);
    Tensor q = p.wq.apply(h, tape, dropout_rng);
    Tensor k = p.wk.apply(h, tape, dropout_rng);
    Tensor v = p.wv.apply(h, tape, dropout_rng);

    Tensor k_full = k, v_full = v;
    std::vector<std::int64_t> k_pos = q_pos;
    if (cache && cache->size() > 0) {
        k_full = concat_rows({Tensor(cache->keys), k}, tape);
        v_full = concat_rows({Tensor(cache->values), v}, tape);
        k_pos = cache->positions;
        k_pos.insert(k_pos.end(), q_pos.begin(), q_pos.end());
    }
    Tensor att =
        multi_head_attention(q, k_full, v_full, q_pos, k_pos, mask, rope, n_heads, tape);
    Tensor x1 = add(x, p.wo.apply(att, tape, dropout_rng), tape);

    Tensor h2 = layer_norm(x1, p.ln2_g, p.ln2_b, kLayerNormEps, tape);
    Tensor f = p.w2.apply(gelu(p.w1.apply(h2, tape, dropout_rng), tape), tape, dropout_rng);
    BlockStepOut out;
    out.y = add(x1, f, tape);
    out.k_new = k.value();
    out.v_new = v.value();
    return out;
}

}  // namespace sst
