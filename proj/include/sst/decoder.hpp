#pragma once

#include <functional>
#include <utility>

#include "sst/layers.hpp"

namespace sst {

// The read token is the decoder's "need more speech" action (a dedicated
// reserved id, separate from any text end-of-sequence id).
struct SpecialTokens {
    int pad = 0;
    int read = 1;
    int user = 2;
    int assistant = 3;
    int first_text = 4;  // ids below this are structural
};

struct DecoderConfig {
    Index d_llm = 64;
    int n_layers = 2;
    int n_heads = 4;
    Index vocab = 64;
    Index recent_window = 1024;
    double rope_base = 10000.0;
    SpecialTokens specials;

    RopeConfig rope() const { return {.head_dim = d_llm / n_heads, .base = rope_base}; }
};

struct GenConfig {
    int beam_size = 4;
    double repetition_penalty = 1.2;
    int no_repeat_ngram = 5;
    int max_new_tokens = 32;
    std::size_t history_window = 256;  // generated ids kept for repetition controls
};

// Multi-turn decoder-side state. Per-layer caches hold the instruction
// prefix (never evicted) followed by the rolling recent window; keys are
// unrotated and positions stay contiguous across evictions. The realized
// input rows of the rolling window are retained so that eviction can rebuild
// the caches over exactly the truncated context.
struct DialogueState {
    std::vector<LayerKVCache> caches;  // instruction + rolling, one per layer
    Index instruction_len = 0;
    Matrix rolling_inputs;             // realized embeddings of rolling items
    std::vector<Index> turn_starts;    // rolling-relative start of each dialogue round
    std::int64_t logical_position = 0; // next position to assign
    std::vector<int> token_history;    // recently generated text-token ids
    Eigen::RowVectorXd last_logits;    // next-token logits at the current frontier
    bool speech_turn_open = false;

    Index rolling_size() const {
        return caches.empty() ? 0 : caches.front().size() - instruction_len;
    }
};

struct TurnResult {
    std::vector<int> tokens;  // translation tokens, read token excluded
    bool forced_close = false;
};

// penalty semantics: logits of already-seen tokens are divided by the
// penalty when positive and multiplied when negative.
void apply_repetition_penalty(Eigen::RowVectorXd& logits, const std::vector<int>& history,
                              double penalty);

// Sets to -inf every candidate that would complete an n-gram already present
// in history (history includes the current prefix).
void block_repeat_ngrams(Eigen::RowVectorXd& logits, const std::vector<int>& history,
                         int n);

using ScoreFn = std::function<Eigen::RowVectorXd(const std::vector<int>& prefix)>;

// Length-normalized beam search; returns the best hypothesis including its
// terminating read token when one was emitted. Ties break toward the
// lexicographically smallest token sequence, then the shorter one.
std::vector<int> beam_search(const ScoreFn& score_fn, const GenConfig& cfg,
                             const SpecialTokens& specials,
                             const std::vector<int>& history);

class Decoder {
public:
    Decoder() = default;
    Decoder(const DecoderConfig& cfg, std::uint64_t seed);

    const DecoderConfig& config() const { return cfg_; }

    // Full-sequence training path over already-embedded inputs [T x d_llm];
    // token-level causal attention, returns logits [T x vocab].
    Tensor forward_logits(const Tensor& inputs, Tape* tape, Rng* dropout_rng = nullptr) const;
    Tensor embed_tokens(const std::vector<int>& ids, Tape* tape) const;
    Matrix embed_rows(const std::vector<int>& ids) const;

    DialogueState init_dialogue(const std::vector<int>& instruction_tokens) const;
    void append_speech_turn(DialogueState& state, const Matrix& embeddings) const;
    TurnResult generate_turn(DialogueState& state, const GenConfig& cfg) const;
    // Whole-round eviction down to recent_window rolling entries, then cache
    // rebuild over the truncated context.
    void evict_cache(DialogueState& state) const;

    // Next-token logits at the frontier, optionally after a hypothetical
    // token prefix (not committed).
    Eigen::RowVectorXd peek_logits(const DialogueState& state,
                                   const std::vector<int>& prefix) const;

    void apply_lora(const LoraConfig& cfg);
    void add_params(std::vector<std::pair<std::string, Tensor>>& out) const;
    void add_trainable(bool lora_only, std::vector<Tensor>& out) const;

private:
    // Runs the block stack over new rows against the current caches; commits
    // k/v, inputs and positions when `commit` is set. Returns final-layer
    // normalized hidden rows.
    Matrix feed(DialogueState& state, const Matrix& inputs, bool commit) const;

    DecoderConfig cfg_;
    Tensor embed_;  // vocab x d_llm
    std::vector<BlockParams> blocks_;
    Tensor lnf_g_, lnf_b_;
    Linear out_;  // d_llm -> vocab, bias-free
};

}  // namespace sst
