#pragma once

#include "sst/io.hpp"

namespace sst {

// Synthetic "language" for offline end-to-end runs: each source word is one
// of n_symbols symbols, realized as a fixed per-symbol feature pattern of
// frames_per_symbol frames; translation is a deterministic per-symbol token
// mapping, so a trained system can be scored exactly.
struct ToyConfig {
    int n_symbols = 12;
    Index d_in = 8;
    Index frames_per_symbol = 4;
    double frame_ms = 20.0;
    double noise_std = 0.0;        // optional additive Gaussian noise per frame
    int min_words = 2;
    int max_words = 6;
    double gap_mean_ms = 300.0;    // silence between utterances
    double gap_cap_ms = 900.0;
    std::uint64_t pattern_seed = 7;  // fixes the per-symbol feature patterns

    double symbol_ms() const {
        return static_cast<double>(frames_per_symbol) * frame_ms;
    }
};

std::string toy_source_symbol(int k);

// Bijective symbol -> target-token mapping (an affine permutation of the
// symbol indices, so source and target orders differ).
std::string toy_target_token(const ToyConfig& cfg, int k);

// Fixed feature pattern of symbol k: frames_per_symbol x d_in.
Matrix toy_symbol_pattern(const ToyConfig& cfg, int k);

struct ToyRecording {
    std::vector<AlignedUtterance> utterances;
    Matrix features;
};

// Deterministic in the seed: utterances of random words separated by random
// silence gaps, with exact word-level timings and 1:1 monotone alignment.
ToyRecording make_toy_recording(const ToyConfig& cfg, int n_utterances,
                                std::uint64_t seed);

// Vocabulary over every target token the mapping can produce.
Vocab build_toy_vocab(const ToyConfig& cfg);

// One reference segment per utterance (recording-absolute times).
std::vector<RefSegmentText> toy_references(const std::vector<AlignedUtterance>& utts);

}  // namespace sst
