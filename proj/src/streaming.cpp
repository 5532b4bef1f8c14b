#include "sst/streaming.hpp"

#include <cmath>
#include <stdexcept>

namespace sst {

StreamSource::StreamSource(Matrix frames, double frame_ms)
    : frames_(std::move(frames)), frame_ms_(frame_ms) {
    if (frame_ms_ <= 0.0) throw std::invalid_argument("StreamSource: bad frame_ms");
    timestamps_.resize(static_cast<std::size_t>(frames_.rows()));
    for (Index i = 0; i < frames_.rows(); ++i)
        timestamps_[static_cast<std::size_t>(i)] = static_cast<double>(i) * frame_ms_;
}

StreamSource::StreamSource(Matrix frames, std::vector<double> timestamps_ms,
                           double frame_ms)
    : frames_(std::move(frames)), timestamps_(std::move(timestamps_ms)),
      frame_ms_(frame_ms) {
    if (frame_ms_ <= 0.0) throw std::invalid_argument("StreamSource: bad frame_ms");
    if (static_cast<Index>(timestamps_.size()) != frames_.rows())
        throw std::invalid_argument("StreamSource: timestamp count mismatch");
    for (std::size_t i = 1; i < timestamps_.size(); ++i)
        if (std::abs(timestamps_[i] - timestamps_[i - 1] - frame_ms_) > 1e-9)
            throw std::runtime_error("StreamSource: gap or discontinuity in stream");
}

Matrix StreamSource::pull(Index n) {
    const Index take = std::min(n, frames_.rows() - next_);
    Matrix out = frames_.middleRows(next_, take);
    next_ += take;
    if (take > 0)
        consumed_ms_ = timestamps_[static_cast<std::size_t>(next_ - 1)] + frame_ms_;
    return out;
}

double CostModel::turn_cost(Index n_embeddings) const {
    const double c = fixed_ms + per_embedding_ms * static_cast<double>(n_embeddings);
    if (c < 0.0 || per_token_ms < 0.0)
        throw std::invalid_argument("CostModel: negative cost");
    return c;
}

double CostModel::token_cost() const {
    if (per_token_ms < 0.0) throw std::invalid_argument("CostModel: negative cost");
    return per_token_ms;
}

StreamingEngine::StreamingEngine(const Model& model, const StreamConfig& cfg)
    : model_(model), cfg_(cfg) {
    if (cfg_.latency_multiplier < 1)
        throw std::invalid_argument("StreamingEngine: latency multiplier must be >= 1");
    if (cfg_.instruction.empty())
        throw std::invalid_argument("StreamingEngine: empty instruction");
    encoder_state_ = model_.encoder.make_state();
    dialogue_ = model_.decoder.init_dialogue(cfg_.instruction);
}

TurnResult StreamingEngine::step(const Matrix& group_frames) {
    const Index cf = model_.encoder.config().chunk_frames;
    if (group_frames.rows() < 1 || group_frames.rows() % cf != 0)
        throw std::invalid_argument("step: frame count not a whole number of chunks");
    const Index n_chunks = group_frames.rows() / cf;

    Matrix encoded(group_frames.rows(), model_.encoder.config().d_model);
    for (Index c = 0; c < n_chunks; ++c)
        encoded.middleRows(c * cf, cf) =
            model_.encoder.encode_chunk(encoder_state_, group_frames.middleRows(c * cf, cf));
    Matrix embeddings = model_.adapter.adapt(encoded);

    model_.decoder.append_speech_turn(dialogue_, embeddings);
    TurnResult result = model_.decoder.generate_turn(dialogue_, cfg_.gen);
    ++turns_;
    return result;
}

EmissionLog run_stream(const Model& model, StreamSource& src, int k,
                       const CostModel& cost, const StreamConfig& cfg) {
    if (k < 1) throw std::invalid_argument("run_stream: k must be >= 1");
    StreamConfig engine_cfg = cfg;
    engine_cfg.latency_multiplier = k;
    StreamingEngine engine(model, engine_cfg);

    const Index cf = model.encoder.config().chunk_frames;
    const Index group_frames = static_cast<Index>(k) * cf;

    EmissionLog log;
    log.source_duration_ms = src.duration_ms();
    double compute_ms = 0.0;
    while (!src.exhausted()) {
        Matrix group = src.pull(group_frames);
        const double ideal = src.consumed_ms();
        if (group.rows() % cf != 0) {
            // final partial chunk: pad with zero frames to a chunk boundary
            const Index padded = ((group.rows() + cf - 1) / cf) * cf;
            Matrix full = Matrix::Zero(padded, group.cols());
            full.topRows(group.rows()) = group;
            group = std::move(full);
        }
        const int turn = engine.turns_taken();
        TurnResult result = engine.step(group);
        compute_ms +=
            cost.turn_cost(group.rows() / 4);  // adapter emits rows/4 embeddings
        for (int token : result.tokens) {
            compute_ms += cost.token_cost();
            log.records.push_back({token, ideal, ideal + compute_ms, turn});
        }
        if (result.forced_close) log.forced_turns.push_back(turn);
    }
    return log;
}

}  // namespace sst
