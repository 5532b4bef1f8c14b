#include "sst/config.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "sst/io.hpp"

namespace sst {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
    bool in_quote = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_quote = !in_quote;
        if (line[i] == '#' && !in_quote) return line.substr(0, i);
    }
    return line;
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
        return s.substr(1, s.size() - 2);
    return s;
}

}  // namespace

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream is(text);
    std::string line, prefix;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string body = trim(strip_comment(line));
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": unterminated section header");
            prefix = trim(body.substr(1, body.size() - 2));
            if (!prefix.empty()) prefix += '.';
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        const std::string key = trim(body.substr(0, eq));
        const std::string value = unquote(trim(body.substr(eq + 1)));
        if (key.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": empty key");
        out[prefix + key] = value;
    }
    return out;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_kv_text(ss.str());
}

namespace {

template <typename T>
T parse_scalar(const std::string& key, const std::string& text);

template <>
double parse_scalar<double>(const std::string& key, const std::string& text) {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size())
        throw std::invalid_argument("config key " + key + ": bad number '" + text + "'");
    return v;
}

template <>
std::int64_t parse_scalar<std::int64_t>(const std::string& key, const std::string& text) {
    std::size_t pos = 0;
    const long long v = std::stoll(text, &pos);
    if (pos != text.size())
        throw std::invalid_argument("config key " + key + ": bad integer '" + text + "'");
    return v;
}

template <>
bool parse_scalar<bool>(const std::string& key, const std::string& text) {
    if (text == "true") return true;
    if (text == "false") return false;
    throw std::invalid_argument("config key " + key + ": bad boolean '" + text + "'");
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string&)>;

std::map<std::string, Setter> build_setters() {
    std::map<std::string, Setter> s;
    auto num = [&](const std::string& key, std::function<void(RunConfig&, double)> set) {
        s[key] = [set](RunConfig& c, const std::string& k, const std::string& v) {
            set(c, parse_scalar<double>(k, v));
        };
    };
    auto integer = [&](const std::string& key,
                       std::function<void(RunConfig&, std::int64_t)> set) {
        s[key] = [set](RunConfig& c, const std::string& k, const std::string& v) {
            set(c, parse_scalar<std::int64_t>(k, v));
        };
    };
    auto str = [&](const std::string& key,
                   std::function<void(RunConfig&, const std::string&)> set) {
        s[key] = [set](RunConfig& c, const std::string&, const std::string& v) { set(c, v); };
    };

    integer("model.encoder.d_in", [](RunConfig& c, auto v) { c.model.encoder.d_in = v; });
    integer("model.encoder.d_model", [](RunConfig& c, auto v) { c.model.encoder.d_model = v; });
    integer("model.encoder.n_layers", [](RunConfig& c, auto v) { c.model.encoder.n_layers = static_cast<int>(v); });
    integer("model.encoder.n_heads", [](RunConfig& c, auto v) { c.model.encoder.n_heads = static_cast<int>(v); });
    integer("model.encoder.chunk_frames", [](RunConfig& c, auto v) { c.model.encoder.chunk_frames = v; });
    integer("model.encoder.frame_ms", [](RunConfig& c, auto v) { c.model.encoder.frame_ms = static_cast<int>(v); });
    integer("model.encoder.window_chunks", [](RunConfig& c, auto v) { c.model.encoder.window_chunks = v; });
    num("model.encoder.rope_base", [](RunConfig& c, auto v) { c.model.encoder.rope_base = v; });
    integer("model.adapter.d_model", [](RunConfig& c, auto v) { c.model.adapter.d_model = v; });
    integer("model.adapter.d_llm", [](RunConfig& c, auto v) { c.model.adapter.d_llm = v; });
    integer("model.decoder.d_llm", [](RunConfig& c, auto v) { c.model.decoder.d_llm = v; });
    integer("model.decoder.n_layers", [](RunConfig& c, auto v) { c.model.decoder.n_layers = static_cast<int>(v); });
    integer("model.decoder.n_heads", [](RunConfig& c, auto v) { c.model.decoder.n_heads = static_cast<int>(v); });
    integer("model.decoder.vocab", [](RunConfig& c, auto v) { c.model.decoder.vocab = v; });
    integer("model.decoder.recent_window", [](RunConfig& c, auto v) { c.model.decoder.recent_window = v; });
    num("model.decoder.rope_base", [](RunConfig& c, auto v) { c.model.decoder.rope_base = v; });

    num("synthesis.chunk_ms", [](RunConfig& c, auto v) { c.synthesis.chunk_ms = v; });
    integer("synthesis.seg_chunks", [](RunConfig& c, auto v) { c.synthesis.seg_chunks = static_cast<int>(v); });
    integer("synthesis.max_multiplier", [](RunConfig& c, auto v) { c.synthesis.max_multiplier = static_cast<int>(v); });
    num("synthesis.frame_ms", [](RunConfig& c, auto v) { c.synthesis.frame_ms = v; });
    num("synthesis.silence_mean_ms", [](RunConfig& c, auto v) { c.synthesis.silence_mean_ms = v; });
    num("synthesis.silence_cap_ms", [](RunConfig& c, auto v) { c.synthesis.silence_cap_ms = v; });
    num("synthesis.leading_silence_prob", [](RunConfig& c, auto v) { c.synthesis.leading_silence_prob = v; });
    integer("synthesis.context_sentences", [](RunConfig& c, auto v) { c.synthesis.context_sentences = static_cast<int>(v); });

    integer("toy.n_symbols", [](RunConfig& c, auto v) { c.toy.n_symbols = static_cast<int>(v); });
    integer("toy.d_in", [](RunConfig& c, auto v) { c.toy.d_in = v; });
    integer("toy.frames_per_symbol", [](RunConfig& c, auto v) { c.toy.frames_per_symbol = v; });
    num("toy.frame_ms", [](RunConfig& c, auto v) { c.toy.frame_ms = v; });
    num("toy.noise_std", [](RunConfig& c, auto v) { c.toy.noise_std = v; });
    integer("toy.min_words", [](RunConfig& c, auto v) { c.toy.min_words = static_cast<int>(v); });
    integer("toy.max_words", [](RunConfig& c, auto v) { c.toy.max_words = static_cast<int>(v); });
    num("toy.gap_mean_ms", [](RunConfig& c, auto v) { c.toy.gap_mean_ms = v; });
    num("toy.gap_cap_ms", [](RunConfig& c, auto v) { c.toy.gap_cap_ms = v; });
    integer("toy.pattern_seed", [](RunConfig& c, auto v) { c.toy.pattern_seed = static_cast<std::uint64_t>(v); });

    for (const auto& [section, pick] :
         {std::pair<std::string, TrainConfig RunConfig::*>{"train.stage1",
                                                           &RunConfig::train_stage1},
          {"train.stage2", &RunConfig::train_stage2}}) {
        integer(section + ".stage", [pick](RunConfig& c, auto v) { (c.*pick).stage = static_cast<int>(v); });
        num(section + ".max_lr", [pick](RunConfig& c, auto v) { (c.*pick).max_lr = v; });
        integer(section + ".warmup_steps", [pick](RunConfig& c, auto v) { (c.*pick).warmup_steps = static_cast<int>(v); });
        integer(section + ".epochs", [pick](RunConfig& c, auto v) { (c.*pick).epochs = static_cast<int>(v); });
        integer(section + ".batch_token_budget", [pick](RunConfig& c, auto v) { (c.*pick).batch_token_budget = v; });
        integer(section + ".seed", [pick](RunConfig& c, auto v) { (c.*pick).seed = static_cast<std::uint64_t>(v); });
    }

    integer("lora.rank", [](RunConfig& c, auto v) { c.lora.rank = v; });
    num("lora.alpha", [](RunConfig& c, auto v) { c.lora.alpha = v; });
    num("lora.dropout", [](RunConfig& c, auto v) { c.lora.dropout = v; });
    integer("lora.seed", [](RunConfig& c, auto v) { c.lora.seed = static_cast<std::uint64_t>(v); });

    integer("generation.beam_size", [](RunConfig& c, auto v) { c.gen.beam_size = static_cast<int>(v); });
    num("generation.repetition_penalty", [](RunConfig& c, auto v) { c.gen.repetition_penalty = v; });
    integer("generation.no_repeat_ngram", [](RunConfig& c, auto v) { c.gen.no_repeat_ngram = static_cast<int>(v); });
    integer("generation.max_new_tokens", [](RunConfig& c, auto v) { c.gen.max_new_tokens = static_cast<int>(v); });
    integer("generation.history_window", [](RunConfig& c, auto v) { c.gen.history_window = static_cast<std::size_t>(v); });

    num("cost.fixed_ms", [](RunConfig& c, auto v) { c.cost.fixed_ms = v; });
    num("cost.per_embedding_ms", [](RunConfig& c, auto v) { c.cost.per_embedding_ms = v; });
    num("cost.per_token_ms", [](RunConfig& c, auto v) { c.cost.per_token_ms = v; });

    integer("run.latency_multiplier", [](RunConfig& c, auto v) { c.latency_multiplier = static_cast<int>(v); });
    integer("run.seed", [](RunConfig& c, auto v) { c.seed = static_cast<std::uint64_t>(v); });
    integer("run.target_segments", [](RunConfig& c, auto v) { c.target_segments = static_cast<int>(v); });
    integer("run.toy_train_recordings", [](RunConfig& c, auto v) { c.toy_train_recordings = static_cast<int>(v); });
    integer("run.toy_eval_recordings", [](RunConfig& c, auto v) { c.toy_eval_recordings = static_cast<int>(v); });
    integer("run.toy_utterances_per_recording", [](RunConfig& c, auto v) { c.toy_utterances_per_recording = static_cast<int>(v); });
    str("run.target_language", [](RunConfig& c, const std::string& v) { c.target_language = v; });

    str("paths.data_dir", [](RunConfig& c, const std::string& v) { c.paths.data_dir = v; });
    str("paths.manifest", [](RunConfig& c, const std::string& v) { c.paths.manifest = v; });
    str("paths.checkpoint", [](RunConfig& c, const std::string& v) { c.paths.checkpoint = v; });
    str("paths.train_log", [](RunConfig& c, const std::string& v) { c.paths.train_log = v; });
    str("paths.emissions", [](RunConfig& c, const std::string& v) { c.paths.emissions = v; });
    str("paths.references", [](RunConfig& c, const std::string& v) { c.paths.references = v; });
    str("paths.output", [](RunConfig& c, const std::string& v) { c.paths.output = v; });
    return s;
}

}  // namespace

RunConfig run_config_from(const std::map<std::string, std::string>& kv) {
    static const std::map<std::string, Setter> setters = build_setters();
    RunConfig cfg;
    cfg.train_stage1.stage = 1;
    cfg.train_stage2.stage = 2;
    for (const auto& [key, value] : kv) {
        auto it = setters.find(key);
        if (it == setters.end())
            throw std::invalid_argument("unknown config key: " + key);
        it->second(cfg, key, value);
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    return run_config_from(parse_kv_file(path));
}

std::vector<std::string> missing_paths(const RunConfig& cfg) {
    std::vector<std::string> missing;
    for (const std::string& p :
         {cfg.paths.data_dir, cfg.paths.manifest, cfg.paths.checkpoint,
          cfg.paths.emissions, cfg.paths.references})
        if (!p.empty() && !fs::exists(p)) missing.push_back(p);
    return missing;
}

ManifestReport validate_manifest(const std::string& path) {
    ManifestReport report;
    std::vector<ManifestRecord> records;
    try {
        records = read_manifest(path);
    } catch (const std::exception& e) {
        report.file_ok = false;
        report.file_error = e.what();
        return report;
    }
    const fs::path base = fs::path(path).parent_path();
    for (const auto& rec : records) {
        RecordReport rr;
        rr.id = rec.id;
        try {
            for (const auto& u : rec.utterances) validate_utterance(u);
            for (std::size_t i = 1; i < rec.boundaries_ms.size(); ++i)
                if (rec.boundaries_ms[i] < rec.boundaries_ms[i - 1])
                    throw std::invalid_argument("token boundaries decrease");
            std::size_t n_tokens = 0;
            int prev_chunk = 0;
            for (const auto& step : rec.trajectory.steps) {
                if (step.chunk_index < 1)
                    throw std::invalid_argument("trajectory chunk index below 1");
                if (step.chunk_index < prev_chunk)
                    throw std::invalid_argument("trajectory chunk indices decrease");
                prev_chunk = step.chunk_index;
                n_tokens += step.tokens.size();
            }
            if (n_tokens != rec.boundaries_ms.size())
                throw std::invalid_argument("token count != boundary count");
            const FeatureFile f = read_features((base / rec.features_path).string());
            if (f.frames.rows() < 1)
                throw std::invalid_argument("empty feature file");
        } catch (const std::exception& e) {
            rr.ok = false;
            rr.reason = e.what();
        }
        (rr.ok ? report.passed : report.failed) += 1;
        report.records.push_back(std::move(rr));
    }
    return report;
}

}  // namespace sst
