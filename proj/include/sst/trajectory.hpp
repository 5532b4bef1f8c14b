#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sst/tensor.hpp"

namespace sst {

struct SourceWord {
    std::string text;
    double start_ms = 0.0;
    double end_ms = 0.0;
};

// One utterance with word-level speech/translation alignment. Word times are
// utterance-relative; start_ms/end_ms place the utterance in its recording.
struct AlignedUtterance {
    std::vector<SourceWord> source_words;
    std::vector<std::string> target_tokens;
    std::vector<std::pair<int, int>> word_alignment;  // (source index, target index)
    double start_ms = 0.0;
    double end_ms = 0.0;
};

// Throws std::invalid_argument on overlapping / decreasing word intervals or
// out-of-range alignment indices.
void validate_utterance(const AlignedUtterance& u);

struct SynthesisConfig {
    double chunk_ms = 960.0;
    int seg_chunks = 30;
    int max_multiplier = 12;
    double frame_ms = 20.0;
    double silence_mean_ms = 1000.0;
    double silence_cap_ms = 5000.0;
    double leading_silence_prob = 0.5;
    int context_sentences = 3;

    double segment_ms() const { return chunk_ms * seg_chunks; }
    Index frames_per_chunk() const { return static_cast<Index>(chunk_ms / frame_ms); }
};

struct TrajectoryStep {
    int chunk_index = 0;  // 1-based; after merging, the last chunk of the group
    std::vector<std::string> tokens;
};

struct Trajectory {
    std::vector<TrajectoryStep> steps;
    bool clamped = false;  // some boundary exceeded the covered duration
};

std::vector<std::string> flatten_tokens(const Trajectory& t);

// Right boundary (ms) of the speech aligned to each target token: max end_ms
// over aligned source words, 0 for unaligned tokens. Empty target -> empty.
std::vector<double> word_boundaries(const AlignedUtterance& u);

// Running maximum; idempotent.
std::vector<double> enforce_monotonic(std::vector<double> m);

// Assign token i to chunk j = max(1, ceil(m_i / chunk_ms)) over
// n_chunks = ceil(duration / chunk_ms); boundaries beyond the duration are
// clamped to the final chunk and flagged. m must be nondecreasing.
Trajectory build_trajectory(const std::vector<std::string>& tokens,
                            const std::vector<double>& m, double duration_ms,
                            const SynthesisConfig& cfg);

struct RobustSegment {
    Matrix frames;          // seg_chunks * frames_per_chunk rows
    Trajectory trajectory;  // segment-relative chunk indices
    std::vector<int> utterance_ids;      // provenance: indices into the source list
    std::vector<double> boundaries_ms;   // segment-relative, one per flattened token
    double start_ms = 0.0;               // offset within the source recording
    bool padded = false;
    bool truncated = false;
};

// Slice a recording into seg_chunks-sized windows. A window whose natural
// start lands inside an utterance is shifted back to that utterance's start;
// each token is emitted exactly once, in the first segment whose end covers
// its boundary.
std::vector<RobustSegment> slice_robust_segments(const std::vector<AlignedUtterance>& utts,
                                                 const Matrix& features,
                                                 const SynthesisConfig& cfg);

// Build one segment by sampling pool utterances without replacement and
// interleaving silence (zero feature rows). Deterministic in the seed.
RobustSegment simulate_robust_segment(const std::vector<AlignedUtterance>& pool,
                                      const std::vector<Matrix>& features,
                                      const SynthesisConfig& cfg, std::uint64_t seed);

// Group every `multiplier` consecutive steps into one; the merged step keeps
// the last member's chunk index. Token order and count are preserved.
Trajectory merge_chunks(const Trajectory& t, int multiplier, const SynthesisConfig& cfg);

// Chat prompt for offline translation of transcripts; preceding holds up to
// context_sentences previous sentences, most recent last.
std::string render_translation_prompt(const std::string& sentence,
                                      const std::vector<std::string>& preceding,
                                      const std::string& target_language);

struct ChatEndpointConfig {
    std::string base_url;  // e.g. http://host:port
    std::string api_key;
    std::string model = "default";
    int max_retries = 3;
    int retry_backoff_ms = 200;

    // Reads SST_CHAT_URL / SST_CHAT_KEY from the environment.
    static ChatEndpointConfig from_env();
};

// POSTs a chat-completion request rendered from the prompt template and
// returns the assistant message content. Throws std::runtime_error after
// exhausting retries.
std::string translate_sentence(const ChatEndpointConfig& cfg, const std::string& sentence,
                               const std::vector<std::string>& preceding,
                               const std::string& target_language);

}  // namespace sst
