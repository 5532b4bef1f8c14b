#include "sst/io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace sst {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_raw(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ostream& os, T v) {
    write_raw(os, &v, sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("truncated file while reading " + what);
    return v;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = {}) {
    std::ofstream os(path, mode | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    return os;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = {}) {
    std::ifstream is(path, mode);
    if (!is) throw std::runtime_error("cannot open for reading: " + path);
    return is;
}

void write_matrix_rows(std::ostream& os, const Matrix& m) {
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) write_pod<double>(os, m(r, c));
}

Matrix read_matrix_rows(std::istream& is, Index rows, Index cols, const std::string& what) {
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) m(r, c) = read_pod<double>(is, what);
    return m;
}

json utterance_to_json(const AlignedUtterance& u) {
    json words = json::array();
    for (const auto& w : u.source_words)
        words.push_back({{"text", w.text}, {"start_ms", w.start_ms}, {"end_ms", w.end_ms}});
    json align = json::array();
    for (const auto& [s, t] : u.word_alignment) align.push_back({s, t});
    return {{"start_ms", u.start_ms},
            {"end_ms", u.end_ms},
            {"source_words", std::move(words)},
            {"target_tokens", u.target_tokens},
            {"alignment", std::move(align)}};
}

AlignedUtterance utterance_from_json(const json& j) {
    AlignedUtterance u;
    u.start_ms = j.at("start_ms").get<double>();
    u.end_ms = j.at("end_ms").get<double>();
    for (const auto& w : j.at("source_words")) {
        SourceWord sw;
        sw.text = w.at("text").get<std::string>();
        sw.start_ms = w.at("start_ms").get<double>();
        sw.end_ms = w.at("end_ms").get<double>();
        u.source_words.push_back(std::move(sw));
    }
    u.target_tokens = j.at("target_tokens").get<std::vector<std::string>>();
    for (const auto& a : j.at("alignment"))
        u.word_alignment.emplace_back(a.at(0).get<int>(), a.at(1).get<int>());
    return u;
}

std::vector<json> read_jsonl(const std::string& path) {
    std::ifstream is = open_in(path);
    std::vector<json> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(json::parse(line));
    }
    return out;
}

}  // namespace

void write_features(const std::string& path, const Matrix& frames, double frame_ms) {
    if (frame_ms <= 0.0) throw std::invalid_argument("write_features: bad frame_ms");
    std::ofstream os = open_out(path, std::ios::binary);
    os.write("SSTF", 4);
    write_pod<std::uint32_t>(os, 1);
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(frames.cols()));
    write_pod<double>(os, frame_ms);
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(frames.rows()));
    write_matrix_rows(os, frames);
    if (!os) throw std::runtime_error("write failure: " + path);
}

FeatureFile read_features(const std::string& path) {
    std::ifstream is = open_in(path, std::ios::binary);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SSTF", 4) != 0)
        throw std::runtime_error("not a feature file: " + path);
    const auto version = read_pod<std::uint32_t>(is, "feature version");
    if (version != 1) throw std::runtime_error("unknown feature file version");
    const auto d_in = static_cast<Index>(read_pod<std::uint64_t>(is, "d_in"));
    FeatureFile out;
    out.frame_ms = read_pod<double>(is, "frame_ms");
    const auto n = static_cast<Index>(read_pod<std::uint64_t>(is, "frame count"));
    out.frames = read_matrix_rows(is, n, d_in, "feature frames");
    return out;
}

void write_alignments(const std::string& path, const std::vector<AlignedUtterance>& utts) {
    std::ofstream os = open_out(path);
    for (const auto& u : utts) os << utterance_to_json(u).dump() << '\n';
    if (!os) throw std::runtime_error("write failure: " + path);
}

std::vector<AlignedUtterance> read_alignments(const std::string& path) {
    std::vector<AlignedUtterance> out;
    for (const auto& j : read_jsonl(path)) out.push_back(utterance_from_json(j));
    return out;
}

void write_references(const std::string& path, const std::vector<RefSegmentText>& refs) {
    std::ofstream os = open_out(path);
    for (const auto& r : refs)
        os << json{{"tokens", r.tokens}, {"t0_ms", r.t0_ms}, {"t1_ms", r.t1_ms}}.dump()
           << '\n';
    if (!os) throw std::runtime_error("write failure: " + path);
}

std::vector<RefSegmentText> read_references(const std::string& path) {
    std::vector<RefSegmentText> out;
    for (const auto& j : read_jsonl(path)) {
        RefSegmentText r;
        r.tokens = j.at("tokens").get<std::vector<std::string>>();
        r.t0_ms = j.at("t0_ms").get<double>();
        r.t1_ms = j.at("t1_ms").get<double>();
        out.push_back(std::move(r));
    }
    return out;
}

void write_emission_log(const std::string& path, const EmissionLog& log,
                        const std::vector<std::string>& token_texts) {
    if (token_texts.size() != log.records.size())
        throw std::invalid_argument("write_emission_log: text count mismatch");
    std::ofstream os = open_out(path);
    os << json{{"schema", "sst-emissions"},
               {"version", 1},
               {"source_duration_ms", log.source_duration_ms},
               {"forced_turns", log.forced_turns}}
              .dump()
       << '\n';
    for (std::size_t i = 0; i < log.records.size(); ++i) {
        const auto& r = log.records[i];
        os << json{{"token", r.token},
                   {"text", token_texts[i]},
                   {"ideal_ms", r.ideal_ms},
                   {"ca_ms", r.ca_ms},
                   {"turn", r.turn}}
                  .dump()
           << '\n';
    }
    if (!os) throw std::runtime_error("write failure: " + path);
}

EmissionFile read_emission_log(const std::string& path) {
    const std::vector<json> lines = read_jsonl(path);
    if (lines.empty() || lines.front().value("schema", "") != "sst-emissions")
        throw std::runtime_error("not an emission log: " + path);
    if (lines.front().at("version").get<int>() != 1)
        throw std::runtime_error("unknown emission log version");
    EmissionFile out;
    out.log.source_duration_ms = lines.front().at("source_duration_ms").get<double>();
    out.log.forced_turns = lines.front().at("forced_turns").get<std::vector<int>>();
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const json& j = lines[i];
        out.log.records.push_back({j.at("token").get<int>(), j.at("ideal_ms").get<double>(),
                                   j.at("ca_ms").get<double>(), j.at("turn").get<int>()});
        out.token_texts.push_back(j.at("text").get<std::string>());
    }
    return out;
}

void write_training_log(const std::string& path, const std::vector<TrainStepLog>& log) {
    std::ofstream os = open_out(path);
    for (const auto& s : log)
        os << json{{"step", s.step}, {"lr", s.lr}, {"loss", s.loss}, {"tokens", s.tokens}}
                  .dump()
           << '\n';
    if (!os) throw std::runtime_error("write failure: " + path);
}

std::vector<TrainStepLog> read_training_log(const std::string& path) {
    std::vector<TrainStepLog> out;
    for (const auto& j : read_jsonl(path)) {
        TrainStepLog s;
        s.step = j.at("step").get<int>();
        s.lr = j.at("lr").get<double>();
        s.loss = j.at("loss").get<double>();
        s.tokens = j.at("tokens").get<Index>();
        out.push_back(s);
    }
    return out;
}

void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records) {
    std::ofstream os = open_out(path);
    os << json{{"schema", "sst-manifest"}, {"version", 1}}.dump() << '\n';
    for (const auto& r : records) {
        json steps = json::array();
        for (const auto& s : r.trajectory.steps)
            steps.push_back({{"chunk", s.chunk_index}, {"tokens", s.tokens}});
        json utts = json::array();
        for (const auto& u : r.utterances) utts.push_back(utterance_to_json(u));
        os << json{{"id", r.id},
                   {"features", r.features_path},
                   {"start_ms", r.start_ms},
                   {"padded", r.padded},
                   {"truncated", r.truncated},
                   {"utterance_ids", r.utterance_ids},
                   {"boundaries_ms", r.boundaries_ms},
                   {"trajectory", {{"clamped", r.trajectory.clamped}, {"steps", steps}}},
                   {"utterances", std::move(utts)}}
                  .dump()
           << '\n';
    }
    if (!os) throw std::runtime_error("write failure: " + path);
}

std::vector<ManifestRecord> read_manifest(const std::string& path) {
    const std::vector<json> lines = read_jsonl(path);
    if (lines.empty() || lines.front().value("schema", "") != "sst-manifest")
        throw std::runtime_error("not a manifest: " + path);
    if (lines.front().at("version").get<int>() != 1)
        throw std::runtime_error("unknown manifest version");
    std::vector<ManifestRecord> out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const json& j = lines[i];
        ManifestRecord r;
        r.id = j.at("id").get<std::string>();
        r.features_path = j.at("features").get<std::string>();
        r.start_ms = j.at("start_ms").get<double>();
        r.padded = j.at("padded").get<bool>();
        r.truncated = j.at("truncated").get<bool>();
        r.utterance_ids = j.at("utterance_ids").get<std::vector<int>>();
        r.boundaries_ms = j.at("boundaries_ms").get<std::vector<double>>();
        r.trajectory.clamped = j.at("trajectory").at("clamped").get<bool>();
        for (const auto& s : j.at("trajectory").at("steps")) {
            TrajectoryStep step;
            step.chunk_index = s.at("chunk").get<int>();
            step.tokens = s.at("tokens").get<std::vector<std::string>>();
            r.trajectory.steps.push_back(std::move(step));
        }
        for (const auto& u : j.at("utterances")) r.utterances.push_back(utterance_from_json(u));
        out.push_back(std::move(r));
    }
    return out;
}

void write_segment_dataset(const std::string& dir,
                           const std::vector<RobustSegment>& segments,
                           const std::vector<std::vector<AlignedUtterance>>& provenance,
                           double frame_ms) {
    if (!provenance.empty() && provenance.size() != segments.size())
        throw std::invalid_argument("write_segment_dataset: provenance count mismatch");
    fs::create_directories(dir);
    std::vector<ManifestRecord> records;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const RobustSegment& seg = segments[i];
        ManifestRecord r;
        std::ostringstream id;
        id << "seg_" << std::setw(5) << std::setfill('0') << i;
        r.id = id.str();
        r.features_path = r.id + ".sstf";
        r.start_ms = seg.start_ms;
        r.padded = seg.padded;
        r.truncated = seg.truncated;
        r.utterance_ids = seg.utterance_ids;
        r.boundaries_ms = seg.boundaries_ms;
        r.trajectory = seg.trajectory;
        if (!provenance.empty()) r.utterances = provenance[i];
        write_features((fs::path(dir) / r.features_path).string(), seg.frames, frame_ms);
        records.push_back(std::move(r));
    }
    write_manifest((fs::path(dir) / "manifest.jsonl").string(), records);
}

std::vector<RobustSegment> read_segment_dataset(const std::string& manifest_path) {
    const fs::path base = fs::path(manifest_path).parent_path();
    std::vector<RobustSegment> out;
    for (const auto& r : read_manifest(manifest_path)) {
        RobustSegment seg;
        seg.frames = read_features((base / r.features_path).string()).frames;
        seg.trajectory = r.trajectory;
        seg.utterance_ids = r.utterance_ids;
        seg.boundaries_ms = r.boundaries_ms;
        seg.start_ms = r.start_ms;
        seg.padded = r.padded;
        seg.truncated = r.truncated;
        out.push_back(std::move(seg));
    }
    return out;
}

namespace {

json model_config_to_json(const ModelConfig& cfg) {
    return {{"encoder",
             {{"d_in", cfg.encoder.d_in},
              {"d_model", cfg.encoder.d_model},
              {"n_layers", cfg.encoder.n_layers},
              {"n_heads", cfg.encoder.n_heads},
              {"chunk_frames", cfg.encoder.chunk_frames},
              {"frame_ms", cfg.encoder.frame_ms},
              {"window_chunks", cfg.encoder.window_chunks},
              {"rope_base", cfg.encoder.rope_base}}},
            {"adapter", {{"d_model", cfg.adapter.d_model}, {"d_llm", cfg.adapter.d_llm}}},
            {"decoder",
             {{"d_llm", cfg.decoder.d_llm},
              {"n_layers", cfg.decoder.n_layers},
              {"n_heads", cfg.decoder.n_heads},
              {"vocab", cfg.decoder.vocab},
              {"recent_window", cfg.decoder.recent_window},
              {"rope_base", cfg.decoder.rope_base}}}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    const json& e = j.at("encoder");
    cfg.encoder.d_in = e.at("d_in").get<Index>();
    cfg.encoder.d_model = e.at("d_model").get<Index>();
    cfg.encoder.n_layers = e.at("n_layers").get<int>();
    cfg.encoder.n_heads = e.at("n_heads").get<int>();
    cfg.encoder.chunk_frames = e.at("chunk_frames").get<Index>();
    cfg.encoder.frame_ms = e.at("frame_ms").get<int>();
    cfg.encoder.window_chunks = e.at("window_chunks").get<Index>();
    cfg.encoder.rope_base = e.at("rope_base").get<double>();
    cfg.adapter.d_model = j.at("adapter").at("d_model").get<Index>();
    cfg.adapter.d_llm = j.at("adapter").at("d_llm").get<Index>();
    const json& d = j.at("decoder");
    cfg.decoder.d_llm = d.at("d_llm").get<Index>();
    cfg.decoder.n_layers = d.at("n_layers").get<int>();
    cfg.decoder.n_heads = d.at("n_heads").get<int>();
    cfg.decoder.vocab = d.at("vocab").get<Index>();
    cfg.decoder.recent_window = d.at("recent_window").get<Index>();
    cfg.decoder.rope_base = d.at("rope_base").get<double>();
    return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const ModelConfig& cfg,
                     const Vocab& vocab, std::uint64_t seed,
                     const std::optional<LoraConfig>& lora) {
    json header = {{"schema", "sst-checkpoint"},
                   {"version", 1},
                   {"seed", seed},
                   {"model", model_config_to_json(cfg)},
                   {"vocab", vocab.id_to_token}};
    if (lora)
        header["lora"] = {{"rank", lora->rank},
                          {"alpha", lora->alpha},
                          {"dropout", lora->dropout},
                          {"seed", lora->seed}};
    const std::string header_bytes = header.dump();

    std::ofstream os = open_out(path, std::ios::binary);
    os.write("SSTC", 4);
    write_pod<std::uint32_t>(os, 1);
    write_pod<std::uint64_t>(os, header_bytes.size());
    os.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));

    const auto params = model.named_params();
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, tensor] : params) {
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        const Matrix& v = tensor.value();
        write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(v.rows()));
        write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(v.cols()));
        write_matrix_rows(os, v);
    }
    if (!os) throw std::runtime_error("write failure: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is = open_in(path, std::ios::binary);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SSTC", 4) != 0)
        throw std::runtime_error("not a checkpoint: " + path);
    if (read_pod<std::uint32_t>(is, "checkpoint version") != 1)
        throw std::runtime_error("unknown checkpoint version");
    const auto header_len = read_pod<std::uint64_t>(is, "header length");
    std::string header_bytes(header_len, '\0');
    is.read(header_bytes.data(), static_cast<std::streamsize>(header_len));
    if (!is) throw std::runtime_error("truncated checkpoint header");
    const json header = json::parse(header_bytes);

    LoadedCheckpoint out;
    out.config = model_config_from_json(header.at("model"));
    const auto all_tokens = header.at("vocab").get<std::vector<std::string>>();
    const SpecialTokens specials;
    out.vocab = Vocab::build(std::vector<std::string>(
        all_tokens.begin() + specials.first_text, all_tokens.end()));
    out.seed = header.at("seed").get<std::uint64_t>();
    if (header.contains("lora")) {
        LoraConfig lora;
        lora.rank = header["lora"].at("rank").get<Index>();
        lora.alpha = header["lora"].at("alpha").get<double>();
        lora.dropout = header["lora"].at("dropout").get<double>();
        lora.seed = header["lora"].at("seed").get<std::uint64_t>();
        out.lora = lora;
    }

    out.model = std::make_unique<Model>(out.config, out.seed);
    if (out.lora) out.model->decoder.apply_lora(*out.lora);

    std::map<std::string, Tensor> by_name;
    for (auto& [name, tensor] : out.model->named_params()) by_name.emplace(name, tensor);

    const auto n_params = read_pod<std::uint32_t>(is, "parameter count");
    for (std::uint32_t i = 0; i < n_params; ++i) {
        const auto name_len = read_pod<std::uint32_t>(is, "parameter name length");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw std::runtime_error("truncated parameter name");
        const auto rows = static_cast<Index>(read_pod<std::uint64_t>(is, "rows"));
        const auto cols = static_cast<Index>(read_pod<std::uint64_t>(is, "cols"));
        Matrix v = read_matrix_rows(is, rows, cols, "parameter " + name);
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::runtime_error("checkpoint parameter unknown to model: " + name);
        if (it->second.value().rows() != rows || it->second.value().cols() != cols)
            throw std::runtime_error("checkpoint parameter shape mismatch: " + name);
        it->second.value() = std::move(v);
        by_name.erase(it);
    }
    if (!by_name.empty())
        throw std::runtime_error("checkpoint missing parameter: " + by_name.begin()->first);
    return out;
}

}  // namespace sst
