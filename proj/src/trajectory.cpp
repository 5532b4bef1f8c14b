#include "sst/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace sst {

void validate_utterance(const AlignedUtterance& u) {
    for (std::size_t i = 0; i < u.source_words.size(); ++i) {
        const auto& w = u.source_words[i];
        if (w.end_ms < w.start_ms)
            throw std::invalid_argument("utterance: word interval decreasing");
        if (i > 0 && w.start_ms < u.source_words[i - 1].end_ms)
            throw std::invalid_argument("utterance: word intervals overlap");
    }
    for (const auto& [s, t] : u.word_alignment) {
        if (s < 0 || static_cast<std::size_t>(s) >= u.source_words.size() || t < 0 ||
            static_cast<std::size_t>(t) >= u.target_tokens.size())
            throw std::invalid_argument("utterance: alignment index out of range");
    }
    if (u.end_ms < u.start_ms) throw std::invalid_argument("utterance: bad span");
}

std::vector<std::string> flatten_tokens(const Trajectory& t) {
    std::vector<std::string> out;
    for (const auto& step : t.steps)
        out.insert(out.end(), step.tokens.begin(), step.tokens.end());
    return out;
}

std::vector<double> word_boundaries(const AlignedUtterance& u) {
    std::vector<double> m(u.target_tokens.size(), 0.0);
    for (const auto& [s, t] : u.word_alignment)
        m[static_cast<std::size_t>(t)] =
            std::max(m[static_cast<std::size_t>(t)],
                     u.source_words[static_cast<std::size_t>(s)].end_ms);
    return m;
}

std::vector<double> enforce_monotonic(std::vector<double> m) {
    for (std::size_t i = 1; i < m.size(); ++i) m[i] = std::max(m[i], m[i - 1]);
    return m;
}

namespace {

int chunk_of(double boundary_ms, double chunk_ms) {
    return std::max(1, static_cast<int>(std::ceil(boundary_ms / chunk_ms)));
}

}  // namespace

Trajectory build_trajectory(const std::vector<std::string>& tokens,
                            const std::vector<double>& m, double duration_ms,
                            const SynthesisConfig& cfg) {
    if (tokens.size() != m.size())
        throw std::invalid_argument("build_trajectory: token/boundary size mismatch");
    for (std::size_t i = 1; i < m.size(); ++i)
        if (m[i] < m[i - 1])
            throw std::invalid_argument("build_trajectory: boundaries not monotonic");

    const int n_chunks =
        std::max(1, static_cast<int>(std::ceil(duration_ms / cfg.chunk_ms)));
    Trajectory out;
    out.steps.resize(static_cast<std::size_t>(n_chunks));
    for (int j = 0; j < n_chunks; ++j) out.steps[static_cast<std::size_t>(j)].chunk_index = j + 1;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        int j = chunk_of(m[i], cfg.chunk_ms);
        if (j > n_chunks) {
            j = n_chunks;
            out.clamped = true;
        }
        out.steps[static_cast<std::size_t>(j - 1)].tokens.push_back(tokens[i]);
    }
    return out;
}

namespace {

// Per-token global boundary list for a recording's utterances, with a shared
// running maximum so boundaries stay monotone across utterance joins.
struct TokenStream {
    std::vector<std::vector<double>> global_m;  // per utterance
    std::vector<std::size_t> next;              // per utterance: first unassigned token
};

TokenStream make_token_stream(const std::vector<AlignedUtterance>& utts) {
    TokenStream ts;
    double running = 0.0;
    for (const auto& u : utts) {
        std::vector<double> m = enforce_monotonic(word_boundaries(u));
        for (double& v : m) {
            v += u.start_ms;
            v = std::max(v, running);
            running = v;
        }
        ts.global_m.push_back(std::move(m));
        ts.next.push_back(0);
    }
    return ts;
}

}  // namespace

std::vector<RobustSegment> slice_robust_segments(const std::vector<AlignedUtterance>& utts,
                                                 const Matrix& features,
                                                 const SynthesisConfig& cfg) {
    for (std::size_t i = 0; i < utts.size(); ++i) {
        validate_utterance(utts[i]);
        if (i > 0 && utts[i].start_ms < utts[i - 1].start_ms)
            throw std::invalid_argument("slice_robust_segments: utterances out of order");
    }
    const Index fpc = cfg.frames_per_chunk();
    const Index seg_rows = fpc * cfg.seg_chunks;
    double recording_end = static_cast<double>(features.rows()) * cfg.frame_ms;
    for (const auto& u : utts) recording_end = std::max(recording_end, u.end_ms);

    TokenStream ts = make_token_stream(utts);
    std::vector<RobustSegment> segments;
    double seg_start = 0.0;
    for (int guard = 0; guard < 100000; ++guard) {
        const double seg_end = seg_start + cfg.segment_ms();
        RobustSegment seg;
        seg.start_ms = seg_start;
        std::vector<std::string> tokens;
        std::vector<double> bounds;
        for (std::size_t ui = 0; ui < utts.size(); ++ui) {
            const auto& u = utts[ui];
            if (u.start_ms >= seg_end) break;
            bool contributed = false;
            while (ts.next[ui] < u.target_tokens.size() &&
                   ts.global_m[ui][ts.next[ui]] <= seg_end) {
                const double g = ts.global_m[ui][ts.next[ui]];
                tokens.push_back(u.target_tokens[ts.next[ui]]);
                bounds.push_back(std::max(0.0, g - seg_start));
                ++ts.next[ui];
                contributed = true;
            }
            if (contributed) seg.utterance_ids.push_back(static_cast<int>(ui));
            if (ts.next[ui] > 0 && ts.next[ui] < u.target_tokens.size())
                seg.truncated = true;  // utterance tail pushed to the next segment
        }
        seg.boundaries_ms = bounds;
        seg.trajectory = build_trajectory(tokens, bounds, cfg.segment_ms(), cfg);

        seg.frames = Matrix::Zero(seg_rows, features.cols());
        const Index row0 = static_cast<Index>(std::llround(seg_start / cfg.frame_ms));
        const Index avail = std::max<Index>(0, std::min(seg_rows, features.rows() - row0));
        if (avail > 0) seg.frames.topRows(avail) = features.middleRows(row0, avail);
        if (avail < seg_rows) seg.padded = true;
        segments.push_back(std::move(seg));

        bool tokens_left = false;
        for (std::size_t ui = 0; ui < utts.size(); ++ui)
            if (ts.next[ui] < utts[ui].target_tokens.size()) tokens_left = true;
        if (!tokens_left && seg_end >= recording_end) break;

        // shift a mid-utterance start back to the utterance boundary
        double next_start = seg_end;
        for (const auto& u : utts)
            if (u.start_ms < next_start && next_start < u.end_ms) {
                if (u.start_ms > seg_start) next_start = u.start_ms;
                break;
            }
        seg_start = next_start;
    }
    return segments;
}

RobustSegment simulate_robust_segment(const std::vector<AlignedUtterance>& pool,
                                      const std::vector<Matrix>& features,
                                      const SynthesisConfig& cfg, std::uint64_t seed) {
    if (pool.empty() || pool.size() != features.size())
        throw std::invalid_argument("simulate_robust_segment: bad pool");
    const Index d_in = features.front().cols();
    const Index seg_rows = cfg.frames_per_chunk() * cfg.seg_chunks;
    Rng rng(seed);

    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    RobustSegment seg;
    seg.frames = Matrix::Zero(seg_rows, d_in);
    std::vector<std::string> tokens;
    std::vector<double> bounds;

    auto silence_rows = [&]() {
        const double ms = rng.truncated_exponential(cfg.silence_mean_ms, cfg.silence_cap_ms);
        return static_cast<Index>(std::llround(ms / cfg.frame_ms));
    };

    Index row = 0;
    if (rng.uniform() < cfg.leading_silence_prob) row += silence_rows();
    for (std::size_t oi = 0; oi < order.size() && row < seg_rows; ++oi) {
        const std::size_t ui = order[oi];
        const auto& u = pool[ui];
        validate_utterance(u);
        const Matrix& f = features[ui];
        const double offset_ms = static_cast<double>(row) * cfg.frame_ms;

        const Index copy = std::min<Index>(f.rows(), seg_rows - row);
        seg.frames.middleRows(row, copy) = f.topRows(copy);
        if (copy < f.rows()) seg.truncated = true;

        const std::vector<double> m = enforce_monotonic(word_boundaries(u));
        for (std::size_t i = 0; i < u.target_tokens.size(); ++i) {
            const double b = offset_ms + m[i];
            if (b > cfg.segment_ms()) {
                seg.truncated = true;
                break;
            }
            tokens.push_back(u.target_tokens[i]);
            bounds.push_back(b);
        }
        seg.utterance_ids.push_back(static_cast<int>(ui));
        row += f.rows();
        if (row < seg_rows) row += silence_rows();
    }
    if (row < seg_rows) seg.padded = true;
    seg.boundaries_ms = bounds;
    seg.trajectory = build_trajectory(tokens, bounds, cfg.segment_ms(), cfg);
    return seg;
}

Trajectory merge_chunks(const Trajectory& t, int multiplier, const SynthesisConfig& cfg) {
    if (multiplier < 1 || multiplier > cfg.max_multiplier)
        throw std::invalid_argument("merge_chunks: multiplier out of range");
    Trajectory out;
    out.clamped = t.clamped;
    for (std::size_t i = 0; i < t.steps.size(); i += static_cast<std::size_t>(multiplier)) {
        const std::size_t last =
            std::min(i + static_cast<std::size_t>(multiplier), t.steps.size()) - 1;
        TrajectoryStep step;
        step.chunk_index = t.steps[last].chunk_index;
        for (std::size_t j = i; j <= last; ++j)
            step.tokens.insert(step.tokens.end(), t.steps[j].tokens.begin(),
                               t.steps[j].tokens.end());
        out.steps.push_back(std::move(step));
    }
    return out;
}

std::string render_translation_prompt(const std::string& sentence,
                                      const std::vector<std::string>& preceding,
                                      const std::string& target_language) {
    if (sentence.empty())
        throw std::invalid_argument("render_translation_prompt: empty sentence");
    if (preceding.size() > 3)
        throw std::invalid_argument("render_translation_prompt: too many preceding sentences");
    std::string joined;
    for (std::size_t i = 0; i < preceding.size(); ++i) {
        if (i > 0) joined += '\n';
        joined += preceding[i];
    }
    std::string out;
    out += "<|im_start|>system\n";
    out += "You are a professional translator. \n";
    out += "<|im_end|>\n";
    out += "<|im_start|>user\n";
    out += "Given an English sentence along with its\n";
    out += "preceding sentences, translate the given \n";
    out += "sentence into " + target_language + ". Do not include any \n";
    out += "other text.\n";
    out += "\n";
    out += "|Preceding Sentences|\n";
    out += joined + "\n";
    out += "|End of Preceding Sentences|\n";
    out += "\n";
    out += "|Sentence to Translate|\n";
    out += sentence + "\n";
    out += "|End of Sentence to Translate|\n";
    out += "<|im_end|>\n";
    out += "<|im_start|>assistant\n";
    return out;
}

ChatEndpointConfig ChatEndpointConfig::from_env() {
    ChatEndpointConfig cfg;
    if (const char* url = std::getenv("SST_CHAT_URL")) cfg.base_url = url;
    if (const char* key = std::getenv("SST_CHAT_KEY")) cfg.api_key = key;
    return cfg;
}

std::string translate_sentence(const ChatEndpointConfig& cfg, const std::string& sentence,
                               const std::vector<std::string>& preceding,
                               const std::string& target_language) {
    if (cfg.base_url.empty())
        throw std::runtime_error("translate_sentence: no endpoint configured");
    const std::string prompt =
        render_translation_prompt(sentence, preceding, target_language);
    nlohmann::json body{{"model", cfg.model},
                        {"messages", {{{"role", "user"}, {"content", prompt}}}}};

    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(
                std::chrono::milliseconds(cfg.retry_backoff_ms * attempt));
        httplib::Client client(cfg.base_url);
        httplib::Headers headers;
        if (!cfg.api_key.empty())
            headers.emplace("Authorization", "Bearer " + cfg.api_key);
        auto res = client.Post("/v1/chat/completions", headers, body.dump(),
                               "application/json");
        if (!res) {
            last_error = "connection failed";
            continue;
        }
        if (res->status != 200) {
            last_error = "status " + std::to_string(res->status);
            continue;
        }
        try {
            auto parsed = nlohmann::json::parse(res->body);
            return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const std::exception& e) {
            last_error = std::string("bad response: ") + e.what();
        }
    }
    throw std::runtime_error("translate_sentence: " + last_error);
}

}  // namespace sst
