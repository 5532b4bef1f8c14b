#include "sst/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sst {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_softmax_at(const Eigen::RowVectorXd& logits, int idx) {
    double m = kNegInf;
    for (Eigen::Index j = 0; j < logits.size(); ++j) m = std::max(m, logits(j));
    double z = 0.0;
    for (Eigen::Index j = 0; j < logits.size(); ++j)
        if (std::isfinite(logits(j))) z += std::exp(logits(j) - m);
    return logits(idx) - m - std::log(z);
}
}  // namespace

void apply_repetition_penalty(Eigen::RowVectorXd& logits, const std::vector<int>& history,
                              double penalty) {
    if (penalty <= 0.0) throw std::invalid_argument("repetition penalty must be positive");
    for (int id : history) {
        if (id < 0 || id >= logits.size()) continue;
        if (logits(id) > 0.0)
            logits(id) /= penalty;
        else
            logits(id) *= penalty;
    }
}

void block_repeat_ngrams(Eigen::RowVectorXd& logits, const std::vector<int>& history,
                         int n) {
    if (n <= 0) return;
    const auto len = static_cast<std::ptrdiff_t>(history.size());
    if (len < n) return;  // not even one full n-gram possible
    // candidate v is blocked iff (history[-(n-1):], v) occurs in history
    for (std::ptrdiff_t start = 0; start + n <= len; ++start) {
        bool prefix_match = true;
        for (int i = 0; i < n - 1; ++i)
            if (history[static_cast<std::size_t>(start + i)] !=
                history[static_cast<std::size_t>(len - (n - 1) + i)]) {
                prefix_match = false;
                break;
            }
        if (prefix_match) {
            const int v = history[static_cast<std::size_t>(start + n - 1)];
            if (v >= 0 && v < logits.size()) logits(v) = kNegInf;
        }
    }
}

namespace {

struct Hypothesis {
    std::vector<int> tokens;
    double logprob = 0.0;
};

// higher normalized score wins; ties toward lexicographically smaller token
// sequence, then toward the shorter one
bool better_final(const Hypothesis& a, const Hypothesis& b) {
    const double na = a.logprob / static_cast<double>(a.tokens.size());
    const double nb = b.logprob / static_cast<double>(b.tokens.size());
    if (na != nb) return na > nb;
    if (a.tokens != b.tokens)
        return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(),
                                            b.tokens.begin(), b.tokens.end());
    return a.tokens.size() < b.tokens.size();
}

bool better_live(const Hypothesis& a, const Hypothesis& b) {
    if (a.logprob != b.logprob) return a.logprob > b.logprob;
    return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(),
                                        b.tokens.begin(), b.tokens.end());
}

}  // namespace

std::vector<int> beam_search(const ScoreFn& score_fn, const GenConfig& cfg,
                             const SpecialTokens& specials,
                             const std::vector<int>& history) {
    if (cfg.beam_size < 1 || cfg.max_new_tokens < 1)
        throw std::invalid_argument("beam_search: bad config");
    std::vector<Hypothesis> live{Hypothesis{}};
    std::vector<Hypothesis> completed;

    while (!live.empty()) {
        std::vector<Hypothesis> next;
        for (const auto& hyp : live) {
            Eigen::RowVectorXd logits = score_fn(hyp.tokens);
            std::vector<int> seen = history;
            seen.insert(seen.end(), hyp.tokens.begin(), hyp.tokens.end());
            apply_repetition_penalty(logits, seen, cfg.repetition_penalty);
            block_repeat_ngrams(logits, seen, cfg.no_repeat_ngram);
            for (int v = 0; v < logits.size(); ++v) {
                if (!std::isfinite(logits(v)) && logits(v) < 0) continue;
                Hypothesis ext = hyp;
                ext.tokens.push_back(v);
                ext.logprob += log_softmax_at(logits, v);
                if (v == specials.read ||
                    static_cast<int>(ext.tokens.size()) >= cfg.max_new_tokens)
                    completed.push_back(std::move(ext));
                else
                    next.push_back(std::move(ext));
            }
        }
        std::sort(next.begin(), next.end(), better_live);
        if (static_cast<int>(next.size()) > cfg.beam_size)
            next.resize(static_cast<std::size_t>(cfg.beam_size));
        live = std::move(next);
    }

    if (completed.empty()) return {specials.read};  // unreachable with max_new_tokens >= 1
    return std::min_element(completed.begin(), completed.end(),
                            [](const Hypothesis& a, const Hypothesis& b) {
                                return better_final(a, b);
                            })
        ->tokens;
}

Decoder::Decoder(const DecoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.d_llm % cfg.n_heads != 0)
        throw std::invalid_argument("Decoder: d_llm not divisible by n_heads");
    if ((cfg.d_llm / cfg.n_heads) % 2 != 0)
        throw std::invalid_argument("Decoder: head_dim must be even for RoPE");
    Rng rng(seed);
    embed_ = Tensor::gaussian(cfg.vocab, cfg.d_llm, 0.5, rng);
    for (int l = 0; l < cfg.n_layers; ++l) blocks_.push_back(BlockParams::make(cfg.d_llm, rng));
    lnf_g_ = Tensor::constant(1, cfg.d_llm, 1.0);
    lnf_b_ = Tensor::zeros(1, cfg.d_llm);
    out_ = Linear::make(cfg.d_llm, cfg.vocab, false, rng);
}

Tensor Decoder::forward_logits(const Tensor& inputs, Tape* tape, Rng* dropout_rng) const {
    const Index t = inputs.rows();
    if (inputs.cols() != cfg_.d_llm)
        throw std::invalid_argument("Decoder: wrong embedding width");
    std::vector<std::int64_t> pos(static_cast<std::size_t>(t));
    for (Index i = 0; i < t; ++i) pos[static_cast<std::size_t>(i)] = i;
    const BoolMask mask = build_causal_mask(t, t, 0);
    Tensor x = inputs;
    for (const auto& blk : blocks_)
        x = block_forward(x, blk, pos, nullptr, mask, cfg_.rope(), cfg_.n_heads, tape,
                          dropout_rng)
                .y;
    x = layer_norm(x, lnf_g_, lnf_b_, kLayerNormEps, tape);
    return out_.apply(x, tape, dropout_rng);
}

Tensor Decoder::embed_tokens(const std::vector<int>& ids, Tape* tape) const {
    return embedding_lookup(embed_, ids, tape);
}

Matrix Decoder::embed_rows(const std::vector<int>& ids) const {
    return embed_tokens(ids, nullptr).value();
}

Matrix Decoder::feed(DialogueState& state, const Matrix& inputs, bool commit) const {
    const Index n = inputs.rows();
    std::vector<std::int64_t> pos(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) pos[static_cast<std::size_t>(i)] = state.logical_position + i;

    Tensor x = Tensor(inputs);
    std::vector<Matrix> new_k, new_v;
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        const LayerKVCache& cache = state.caches[l];
        const BoolMask mask = build_causal_mask(n, cache.size() + n, cache.size());
        BlockStepOut out = block_forward(x, blocks_[l], pos, &cache, mask, cfg_.rope(),
                                         cfg_.n_heads, nullptr);
        if (commit) {
            new_k.push_back(std::move(out.k_new));
            new_v.push_back(std::move(out.v_new));
        }
        x = out.y;
    }
    Matrix hidden = layer_norm(x, lnf_g_, lnf_b_, kLayerNormEps, nullptr).value();
    if (commit) {
        for (std::size_t l = 0; l < blocks_.size(); ++l)
            state.caches[l].append(new_k[l], new_v[l], pos);
        if (state.rolling_inputs.rows() == 0 && state.logical_position > state.instruction_len)
            throw std::logic_error("DialogueState: inconsistent rolling inputs");
        if (state.logical_position >= state.instruction_len) {
            Matrix merged(state.rolling_inputs.rows() + n, cfg_.d_llm);
            if (state.rolling_inputs.rows() > 0) merged.topRows(state.rolling_inputs.rows()) = state.rolling_inputs;
            merged.bottomRows(n) = inputs;
            state.rolling_inputs = std::move(merged);
        }
        state.logical_position += n;
        state.last_logits =
            out_.apply(Tensor(Matrix(hidden.bottomRows(1))), nullptr).value().row(0);
    }
    return hidden;
}

DialogueState Decoder::init_dialogue(const std::vector<int>& instruction_tokens) const {
    if (instruction_tokens.empty())
        throw std::invalid_argument("init_dialogue: empty instruction");
    DialogueState state;
    state.caches.resize(blocks_.size());
    state.instruction_len = static_cast<Index>(instruction_tokens.size());
    state.rolling_inputs = Matrix(0, cfg_.d_llm);
    feed(state, embed_rows(instruction_tokens), true);
    return state;
}

void Decoder::append_speech_turn(DialogueState& state, const Matrix& embeddings) const {
    if (embeddings.rows() < 1) throw std::invalid_argument("append_speech_turn: empty turn");
    if (embeddings.cols() != cfg_.d_llm)
        throw std::invalid_argument("append_speech_turn: wrong embedding width");
    state.turn_starts.push_back(state.rolling_size());
    Matrix inputs(embeddings.rows() + 2, cfg_.d_llm);
    inputs.row(0) = embed_.value().row(cfg_.specials.user);
    inputs.middleRows(1, embeddings.rows()) = embeddings;
    inputs.row(embeddings.rows() + 1) = embed_.value().row(cfg_.specials.assistant);
    feed(state, inputs, true);
    state.speech_turn_open = true;
    evict_cache(state);
}

Eigen::RowVectorXd Decoder::peek_logits(const DialogueState& state,
                                        const std::vector<int>& prefix) const {
    if (prefix.empty()) return state.last_logits;
    auto& mutable_state = const_cast<DialogueState&>(state);
    Matrix hidden = feed(mutable_state, embed_rows(prefix), false);
    return out_.apply(Tensor(Matrix(hidden.bottomRows(1))), nullptr).value().row(0);
}

TurnResult Decoder::generate_turn(DialogueState& state, const GenConfig& cfg) const {
    if (!state.speech_turn_open)
        throw std::logic_error("generate_turn: last appended turn is not a speech turn");
    const SpecialTokens& sp = cfg_.specials;
    ScoreFn score = [&](const std::vector<int>& prefix) {
        Eigen::RowVectorXd logits = peek_logits(state, prefix);
        // structural tokens are never generated
        logits(sp.pad) = kNegInf;
        logits(sp.user) = kNegInf;
        logits(sp.assistant) = kNegInf;
        return logits;
    };
    std::vector<int> seq = beam_search(score, cfg, sp, state.token_history);

    TurnResult result;
    result.forced_close = seq.empty() || seq.back() != sp.read;
    for (int id : seq)
        if (id != sp.read) result.tokens.push_back(id);

    std::vector<int> commit = result.tokens;
    commit.push_back(sp.read);  // the turn always closes with the read action
    feed(state, embed_rows(commit), true);
    state.speech_turn_open = false;

    for (int id : result.tokens) state.token_history.push_back(id);
    if (state.token_history.size() > cfg.history_window)
        state.token_history.erase(state.token_history.begin(),
                                  state.token_history.end() -
                                      static_cast<std::ptrdiff_t>(cfg.history_window));
    evict_cache(state);
    return result;
}

void Decoder::evict_cache(DialogueState& state) const {
    if (state.rolling_size() <= cfg_.recent_window) return;
    // drop oldest whole rounds; a round is never split
    std::size_t drop_rounds = 0;
    Index dropped = 0;
    while (drop_rounds + 1 < state.turn_starts.size() &&
           state.rolling_size() - dropped > cfg_.recent_window) {
        dropped = state.turn_starts[drop_rounds + 1];
        ++drop_rounds;
    }
    if (dropped == 0) return;  // a single oversized round stays resident

    state.rolling_inputs =
        Matrix(state.rolling_inputs.bottomRows(state.rolling_inputs.rows() - dropped));
    state.turn_starts.erase(state.turn_starts.begin(),
                            state.turn_starts.begin() + static_cast<std::ptrdiff_t>(drop_rounds));
    for (auto& s : state.turn_starts) s -= dropped;

    // Rebuild caches over instruction + truncated context so subsequent
    // decoding equals explicit truncated-context recomputation. The
    // instruction KV prefix is reused verbatim: it precedes the rolling
    // window, and stored keys are unrotated so re-indexing the rolling rows
    // to fresh contiguous positions keeps everything consistent.
    const Matrix retained = state.rolling_inputs;
    state.rolling_inputs = Matrix(0, cfg_.d_llm);
    for (auto& cache : state.caches) {
        cache.keys = Matrix(cache.keys.topRows(state.instruction_len));
        cache.values = Matrix(cache.values.topRows(state.instruction_len));
        cache.positions.resize(static_cast<std::size_t>(state.instruction_len));
    }
    state.logical_position = state.instruction_len;
    feed(state, retained, true);
}

void Decoder::apply_lora(const LoraConfig& cfg) {
    std::uint64_t salt = 0;
    for (auto& blk : blocks_) {
        for (Linear* lin : {&blk.wq, &blk.wk, &blk.wv, &blk.wo, &blk.w1, &blk.w2}) {
            LoraConfig c = cfg;
            c.seed = cfg.seed + (++salt);
            lora_wrap(*lin, c);
        }
    }
    LoraConfig c = cfg;
    c.seed = cfg.seed + (++salt);
    lora_wrap(out_, c);
}

void Decoder::add_params(std::vector<std::pair<std::string, Tensor>>& out) const {
    out.emplace_back("decoder.embed", embed_);
    for (std::size_t l = 0; l < blocks_.size(); ++l)
        blocks_[l].add_params("decoder.block" + std::to_string(l), out);
    out.emplace_back("decoder.lnf_g", lnf_g_);
    out.emplace_back("decoder.lnf_b", lnf_b_);
    out_.add_params("decoder.out", out);
}

void Decoder::add_trainable(bool lora_only, std::vector<Tensor>& out) const {
    if (!lora_only) {
        out.push_back(embed_);
        out.push_back(lnf_g_);
        out.push_back(lnf_b_);
    }
    for (const auto& blk : blocks_) blk.add_trainable(lora_only, out);
    out_.add_trainable(lora_only, out);
}

}  // namespace sst
