#pragma once

#include "sst/trainer.hpp"

namespace sst {

// Pull-based frame source with explicit timestamps; consecutive frames must
// be exactly frame_ms apart (a gap is a stream error).
class StreamSource {
public:
    StreamSource(Matrix frames, double frame_ms);
    StreamSource(Matrix frames, std::vector<double> timestamps_ms, double frame_ms);

    // Removes and returns up to n leading frames.
    Matrix pull(Index n);
    // Timestamp just past the newest pulled frame (source time consumed).
    double consumed_ms() const { return consumed_ms_; }
    bool exhausted() const { return next_ >= frames_.rows(); }
    double frame_ms() const { return frame_ms_; }
    double duration_ms() const {
        return static_cast<double>(frames_.rows()) * frame_ms_;
    }

private:
    Matrix frames_;
    std::vector<double> timestamps_;
    double frame_ms_;
    Index next_ = 0;
    double consumed_ms_ = 0.0;
};

// Simulated per-turn computation cost; keeps latency tests machine-independent.
struct CostModel {
    double fixed_ms = 0.0;          // per turn
    double per_embedding_ms = 0.0;  // per new speech embedding
    double per_token_ms = 0.0;      // per generated token

    double turn_cost(Index n_embeddings) const;
    double token_cost() const;
};

struct EmissionRecord {
    int token = 0;
    double ideal_ms = 0.0;
    double ca_ms = 0.0;  // computation-aware: ideal + accumulated compute
    int turn = 0;
};

struct EmissionLog {
    std::vector<EmissionRecord> records;
    double source_duration_ms = 0.0;
    std::vector<int> forced_turns;  // turns closed without a read token
};

struct StreamConfig {
    int latency_multiplier = 1;  // chunks accumulated per translation turn
    GenConfig gen;
    std::vector<int> instruction;
};

// Holds the incremental encoder and dialogue state across chunk groups.
class StreamingEngine {
public:
    StreamingEngine(const Model& model, const StreamConfig& cfg);

    // One encode/adapt/generate cycle over a group of whole chunks
    // (latency_multiplier chunks mid-stream, possibly fewer at the end).
    // Frame count must be a positive multiple of chunk_frames.
    TurnResult step(const Matrix& group_frames);

    const DialogueState& dialogue() const { return dialogue_; }
    const EncoderState& encoder_state() const { return encoder_state_; }
    int turns_taken() const { return turns_; }

private:
    const Model& model_;
    StreamConfig cfg_;
    EncoderState encoder_state_;
    DialogueState dialogue_;
    int turns_ = 0;
};

// Drives a full stream: accumulate k chunks, run a turn, log emissions. A
// final partial group (padded with zero frames to a whole chunk) still
// triggers a closing turn.
EmissionLog run_stream(const Model& model, StreamSource& src, int k,
                       const CostModel& cost, const StreamConfig& cfg);

}  // namespace sst
