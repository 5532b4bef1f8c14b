#pragma once

#include <optional>
#include <unordered_map>

#include "sst/decoder.hpp"
#include "sst/encoder.hpp"
#include "sst/trajectory.hpp"

namespace sst {

// Token-string <-> id mapping; structural ids come first and are fixed.
struct Vocab {
    std::vector<std::string> id_to_token;
    std::unordered_map<std::string, int> token_to_id;
    SpecialTokens specials;

    static Vocab build(const std::vector<std::string>& tokens);

    int id(const std::string& token) const;  // throws on unknown token
    std::vector<int> ids(const std::vector<std::string>& tokens) const;
    int size() const { return static_cast<int>(id_to_token.size()); }
};

struct ModelConfig {
    EncoderConfig encoder;
    AdapterConfig adapter;
    DecoderConfig decoder;
};

struct Model {
    Encoder encoder;
    Adapter adapter;
    Decoder decoder;

    Model(const ModelConfig& cfg, std::uint64_t seed);

    // Embeddings per speech chunk after the 4x adapter downsampling.
    Index embeddings_per_chunk() const {
        return encoder.config().chunk_frames / 4;
    }

    std::vector<std::pair<std::string, Tensor>> named_params() const;
};

struct TrainConfig {
    int stage = 1;
    double max_lr = 2e-4;
    int warmup_steps = 50;
    int epochs = 1;
    Index batch_token_budget = 4096;  // sequence positions per optimizer step
    std::uint64_t seed = 0;
};

// Linear warmup 0 -> max_lr over warmup_steps, then cosine decay to 0 at
// total_steps. Throws on step outside [0, total_steps].
double lr_at(int step, int total_steps, const TrainConfig& cfg);

// Interleaved training layout: instruction tokens, then per merged
// trajectory step [user, speech embeddings, assistant, target span, read].
struct SpeechSpan {
    Index pos_begin = 0;     // position of the first embedding in the sequence
    Index n_embeddings = 0;
    Index chunk_begin = 0;   // first source chunk (0-based) of the group
    Index n_chunks = 0;
};

struct TrainingSequence {
    std::vector<int> token_ids;        // -1 at speech-embedding positions
    std::vector<SpeechSpan> speech;
    std::vector<std::uint8_t> loss_mask;  // 1 on target tokens and read tokens

    Index length() const { return static_cast<Index>(token_ids.size()); }
    Index supervised_count() const;
};

TrainingSequence build_training_sequence(const RobustSegment& seg, int multiplier,
                                         const Vocab& vocab,
                                         const std::vector<int>& instruction,
                                         const SynthesisConfig& scfg,
                                         Index embeddings_per_chunk);

// Full-pipeline loss of one segment: encoder -> adapter -> decoder ->
// cross-entropy on supervised positions (targets and read tokens).
Tensor segment_loss(const Model& model, const Matrix& frames, const TrainingSequence& seq,
                    Tape* tape, Rng* dropout_rng = nullptr);

// Adam with bias correction; operates on the grads accumulated in `params`.
class Adam {
public:
    explicit Adam(std::vector<Tensor> params, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);

    // Applies one update using grad * grad_scale, then clears the grads.
    void step(double lr, double grad_scale = 1.0);
    void zero_grad();
    int steps_taken() const { return t_; }

private:
    std::vector<Tensor> params_;
    std::vector<Matrix> m_, v_;
    double beta1_, beta2_, eps_;
    int t_ = 0;
};

struct TrainStepLog {
    int step = 0;
    double lr = 0.0;
    double loss = 0.0;
    Index tokens = 0;  // sequence positions consumed by this step
};

// Stage 1 trains encoder+adapter with the decoder frozen; stage 2 trains only
// decoder LoRA adapters (encoder, adapter and base decoder weights frozen).
// One multiplier is sampled uniformly from {1..max_multiplier} per segment.
std::vector<TrainStepLog> train(Model& model, const std::vector<RobustSegment>& dataset,
                                const Vocab& vocab, const std::vector<int>& instruction,
                                const SynthesisConfig& scfg, const TrainConfig& cfg,
                                const std::optional<LoraConfig>& lora);

}  // namespace sst
