#include "sst/toy.hpp"

#include <stdexcept>
#include <string>

namespace sst {

std::string toy_source_symbol(int k) { return "s" + std::to_string(k); }

std::string toy_target_token(const ToyConfig& cfg, int k) {
    if (k < 0 || k >= cfg.n_symbols)
        throw std::invalid_argument("toy_target_token: symbol out of range");
    // (1 - k) mod n: a bijection for every n that is not the identity
    const int n = cfg.n_symbols;
    const int mapped = ((1 - k) % n + n) % n;
    return "t" + std::to_string(mapped);
}

Matrix toy_symbol_pattern(const ToyConfig& cfg, int k) {
    if (k < 0 || k >= cfg.n_symbols)
        throw std::invalid_argument("toy_symbol_pattern: symbol out of range");
    Rng rng(cfg.pattern_seed * 1000003ULL + static_cast<std::uint64_t>(k));
    Matrix m(cfg.frames_per_symbol, cfg.d_in);
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) m(r, c) = rng.gaussian();
    return m;
}

ToyRecording make_toy_recording(const ToyConfig& cfg, int n_utterances,
                                std::uint64_t seed) {
    if (n_utterances < 1)
        throw std::invalid_argument("make_toy_recording: need at least one utterance");
    Rng rng(seed);
    std::vector<Matrix> pieces;
    ToyRecording out;
    Index cursor_frames = 0;

    auto add_silence = [&]() {
        const double gap_ms = rng.truncated_exponential(cfg.gap_mean_ms, cfg.gap_cap_ms);
        const auto gap_frames = static_cast<Index>(gap_ms / cfg.frame_ms);
        if (gap_frames > 0) {
            pieces.push_back(Matrix::Zero(gap_frames, cfg.d_in));
            cursor_frames += gap_frames;
        }
    };

    add_silence();
    for (int u = 0; u < n_utterances; ++u) {
        const auto n_words =
            static_cast<int>(rng.uniform_int(cfg.min_words, cfg.max_words));
        AlignedUtterance utt;
        utt.start_ms = static_cast<double>(cursor_frames) * cfg.frame_ms;
        for (int w = 0; w < n_words; ++w) {
            const auto k = static_cast<int>(rng.uniform_int(0, cfg.n_symbols - 1));
            Matrix pattern = toy_symbol_pattern(cfg, k);
            if (cfg.noise_std > 0.0)
                for (Index r = 0; r < pattern.rows(); ++r)
                    for (Index c = 0; c < pattern.cols(); ++c)
                        pattern(r, c) += rng.gaussian(0.0, cfg.noise_std);
            pieces.push_back(std::move(pattern));
            cursor_frames += cfg.frames_per_symbol;

            SourceWord word;
            word.text = toy_source_symbol(k);
            word.start_ms = static_cast<double>(w) * cfg.symbol_ms();
            word.end_ms = static_cast<double>(w + 1) * cfg.symbol_ms();
            utt.source_words.push_back(std::move(word));
            utt.target_tokens.push_back(toy_target_token(cfg, k));
            utt.word_alignment.emplace_back(w, w);
        }
        utt.end_ms = static_cast<double>(cursor_frames) * cfg.frame_ms;
        out.utterances.push_back(std::move(utt));
        add_silence();
    }

    Index total = 0;
    for (const auto& p : pieces) total += p.rows();
    out.features = Matrix(total, cfg.d_in);
    Index row = 0;
    for (const auto& p : pieces) {
        out.features.middleRows(row, p.rows()) = p;
        row += p.rows();
    }
    return out;
}

Vocab build_toy_vocab(const ToyConfig& cfg) {
    std::vector<std::string> tokens;
    for (int k = 0; k < cfg.n_symbols; ++k) tokens.push_back("t" + std::to_string(k));
    return Vocab::build(tokens);
}

std::vector<RefSegmentText> toy_references(const std::vector<AlignedUtterance>& utts) {
    std::vector<RefSegmentText> refs;
    for (const auto& u : utts) {
        RefSegmentText r;
        r.tokens = u.target_tokens;
        r.t0_ms = u.start_ms;
        r.t1_ms = u.end_ms;
        refs.push_back(std::move(r));
    }
    return refs;
}

}  // namespace sst
