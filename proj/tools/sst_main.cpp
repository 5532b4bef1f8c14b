#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "sst/config.hpp"
#include "sst/io.hpp"
#include "sst/toy.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sst;

namespace {

struct RecordingEntry {
    std::string alignments;
    std::string features;
};

std::vector<RecordingEntry> read_recording_index(const std::string& dir) {
    const std::string path = (fs::path(dir) / "recordings.jsonl").string();
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open recording index: " + path);
    std::vector<RecordingEntry> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        out.push_back({(fs::path(dir) / j.at("alignments").get<std::string>()).string(),
                       (fs::path(dir) / j.at("features").get<std::string>()).string()});
    }
    return out;
}

std::vector<int> default_instruction(const Vocab& v) {
    return {v.specials.user, v.specials.assistant};
}

std::string transcript_of(const AlignedUtterance& u) {
    std::string s;
    for (std::size_t i = 0; i < u.source_words.size(); ++i) {
        if (i) s += ' ';
        s += u.source_words[i].text;
    }
    return s;
}

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> out;
    std::string t;
    while (is >> t) out.push_back(t);
    return out;
}

Vocab vocab_from_manifest(const std::vector<ManifestRecord>& records) {
    std::set<std::string> tokens;
    for (const auto& r : records)
        for (const auto& step : r.trajectory.steps)
            for (const auto& t : step.tokens) tokens.insert(t);
    return Vocab::build(std::vector<std::string>(tokens.begin(), tokens.end()));
}

int cmd_synthesize(const RunConfig& cfg, const std::string& out_dir,
                   const std::string& endpoint_url, bool json_out) {
    const std::string train_dir = (fs::path(cfg.paths.data_dir) / "train").string();
    std::vector<RobustSegment> segments;
    std::vector<std::vector<AlignedUtterance>> provenance;
    std::vector<AlignedUtterance> pool;
    std::vector<Matrix> pool_features;

    for (const auto& entry : read_recording_index(train_dir)) {
        std::vector<AlignedUtterance> utts = read_alignments(entry.alignments);
        const FeatureFile feats = read_features(entry.features);
        for (auto& u : utts) validate_utterance(u);

        if (!endpoint_url.empty()) {
            ChatEndpointConfig ep = ChatEndpointConfig::from_env();
            ep.base_url = endpoint_url;
            std::vector<std::string> preceding;
            for (auto& u : utts) {
                const std::string transcript = transcript_of(u);
                const std::string translated = translate_sentence(
                    ep, transcript, preceding, cfg.target_language);
                u.target_tokens = split_ws(translated);
                u.word_alignment.clear();
                const int n_words = static_cast<int>(u.source_words.size());
                for (int j = 0; j < static_cast<int>(u.target_tokens.size()); ++j)
                    u.word_alignment.emplace_back(std::min(j, n_words - 1), j);
                preceding.push_back(transcript);
                if (static_cast<int>(preceding.size()) > cfg.synthesis.context_sentences)
                    preceding.erase(preceding.begin());
            }
        }

        std::vector<RobustSegment> sliced =
            slice_robust_segments(utts, feats.frames, cfg.synthesis);
        for (auto& seg : sliced) {
            std::vector<AlignedUtterance> prov;
            for (int id : seg.utterance_ids)
                prov.push_back(utts[static_cast<std::size_t>(id)]);
            provenance.push_back(std::move(prov));
            segments.push_back(std::move(seg));
        }
        for (const auto& u : utts) {
            const auto a = static_cast<Index>(u.start_ms / cfg.synthesis.frame_ms);
            const auto b = static_cast<Index>(u.end_ms / cfg.synthesis.frame_ms);
            pool.push_back(u);
            pool_features.push_back(feats.frames.middleRows(a, b - a));
        }
    }

    // top up with simulated segments drawn from the utterance pool
    int simulated = 0;
    while (static_cast<int>(segments.size()) < cfg.target_segments) {
        RobustSegment seg = simulate_robust_segment(
            pool, pool_features, cfg.synthesis,
            cfg.seed * 1000003ULL + static_cast<std::uint64_t>(simulated));
        std::vector<AlignedUtterance> prov;
        for (int id : seg.utterance_ids) prov.push_back(pool[static_cast<std::size_t>(id)]);
        provenance.push_back(std::move(prov));
        segments.push_back(std::move(seg));
        ++simulated;
    }

    write_segment_dataset(out_dir, segments, provenance, cfg.synthesis.frame_ms);
    const std::string manifest = (fs::path(out_dir) / "manifest.jsonl").string();
    if (json_out)
        std::cout << json{{"manifest", manifest},
                          {"segments", segments.size()},
                          {"simulated", simulated}}
                         .dump()
                  << '\n';
    else
        std::cout << "wrote " << segments.size() << " segments (" << simulated
                  << " simulated) to " << manifest << '\n';
    return 0;
}

int cmd_train(RunConfig cfg, int stage, const std::string& init_path, bool json_out) {
    const std::vector<ManifestRecord> records = read_manifest(cfg.paths.manifest);
    const std::vector<RobustSegment> dataset = read_segment_dataset(cfg.paths.manifest);

    std::vector<TrainStepLog> log;
    if (stage == 1) {
        const Vocab vocab = vocab_from_manifest(records);
        cfg.model.decoder.vocab = vocab.size();
        Model model(cfg.model, cfg.seed);
        log = train(model, dataset, vocab, default_instruction(vocab), cfg.synthesis,
                    cfg.train_stage1, std::nullopt);
        save_checkpoint(cfg.paths.checkpoint, model, cfg.model, vocab, cfg.seed,
                        std::nullopt);
    } else {
        const std::string in = init_path.empty() ? cfg.paths.checkpoint : init_path;
        LoadedCheckpoint ckpt = load_checkpoint(in);
        if (ckpt.lora)
            throw std::runtime_error("stage 2 expects a stage-1 checkpoint without LoRA");
        log = train(*ckpt.model, dataset, ckpt.vocab, default_instruction(ckpt.vocab),
                    cfg.synthesis, cfg.train_stage2, cfg.lora);
        save_checkpoint(cfg.paths.checkpoint, *ckpt.model, ckpt.config, ckpt.vocab,
                        ckpt.seed, cfg.lora);
    }
    if (!cfg.paths.train_log.empty()) write_training_log(cfg.paths.train_log, log);

    const double final_loss = log.empty() ? 0.0 : log.back().loss;
    if (json_out)
        std::cout << json{{"stage", stage},
                          {"steps", log.size()},
                          {"final_loss", final_loss},
                          {"checkpoint", cfg.paths.checkpoint}}
                         .dump()
                  << '\n';
    else
        std::cout << "stage " << stage << ": " << log.size()
                  << " steps, final loss " << final_loss << ", checkpoint "
                  << cfg.paths.checkpoint << '\n';
    return 0;
}

int cmd_translate(const RunConfig& cfg, const std::string& input,
                  const std::string& output, int k, bool json_out) {
    LoadedCheckpoint ckpt = load_checkpoint(cfg.paths.checkpoint);
    const FeatureFile feats = read_features(input);
    StreamSource src(feats.frames, feats.frame_ms);

    StreamConfig scfg;
    scfg.latency_multiplier = k;
    scfg.gen = cfg.gen;
    scfg.instruction = default_instruction(ckpt.vocab);
    EmissionLog log = run_stream(*ckpt.model, src, k, cfg.cost, scfg);

    std::vector<std::string> texts;
    for (const auto& r : log.records)
        texts.push_back(ckpt.vocab.id_to_token[static_cast<std::size_t>(r.token)]);
    write_emission_log(output, log, texts);
    if (json_out)
        std::cout << json{{"emissions", output},
                          {"tokens", log.records.size()},
                          {"latency_multiplier", k}}
                         .dump()
                  << '\n';
    else
        std::cout << "wrote " << log.records.size() << " emissions to " << output << '\n';
    return 0;
}

int cmd_evaluate(const std::string& emissions_path, const std::string& references_path,
                 bool json_out) {
    const EmissionFile emissions = read_emission_log(emissions_path);
    const std::vector<RefSegmentText> refs_text = read_references(references_path);

    // shared local id space over reference + hypothesis token strings
    std::map<std::string, int> ids;
    auto id_of = [&](const std::string& t) {
        auto [it, _] = ids.emplace(t, static_cast<int>(ids.size()));
        return it->second;
    };
    std::vector<RefSegment> refs;
    for (const auto& r : refs_text) {
        RefSegment seg;
        for (const auto& t : r.tokens) seg.tokens.push_back(id_of(t));
        seg.t0_ms = r.t0_ms;
        seg.t1_ms = r.t1_ms;
        refs.push_back(std::move(seg));
    }
    EmissionLog log = emissions.log;
    for (std::size_t i = 0; i < log.records.size(); ++i)
        log.records[i].token = id_of(emissions.token_texts[i]);

    const LatencyReport report = evaluate_stream(log, refs);
    if (json_out) {
        std::cout << json{{"bleu", report.bleu},
                          {"stream_laal_ms", report.stream_laal_ms},
                          {"stream_laal_ca_ms", report.stream_laal_ca_ms},
                          {"segment_laal_ms", report.segment_laal_ms},
                          {"segment_laal_ca_ms", report.segment_laal_ca_ms}}
                         .dump()
                  << '\n';
    } else {
        std::cout << "BLEU " << report.bleu << '\n'
                  << "StreamLAAL " << report.stream_laal_ms << " ms\n"
                  << "StreamLAAL_CA " << report.stream_laal_ca_ms << " ms\n";
    }
    return 0;
}

int cmd_validate(const std::string& manifest, const std::string& config_path,
                 bool json_out) {
    int status = 0;
    json j{{"manifest", manifest}};
    if (!config_path.empty()) {
        const RunConfig cfg = load_run_config(config_path);
        const std::vector<std::string> missing = missing_paths(cfg);
        j["missing_paths"] = missing;
        for (const auto& p : missing) {
            if (!json_out) std::cout << "MISSING " << p << '\n';
            status = 1;
        }
    }
    const ManifestReport report = validate_manifest(manifest);
    if (!report.file_ok) {
        if (json_out)
            std::cout << json{{"manifest", manifest}, {"error", report.file_error}}.dump()
                      << '\n';
        else
            std::cout << "FAIL " << manifest << ": " << report.file_error << '\n';
        return 1;
    }
    json recs = json::array();
    for (const auto& r : report.records) {
        if (json_out)
            recs.push_back({{"id", r.id}, {"ok", r.ok}, {"reason", r.reason}});
        else if (r.ok)
            std::cout << "ok " << r.id << '\n';
        else
            std::cout << "FAIL " << r.id << ": " << r.reason << '\n';
    }
    if (report.failed > 0) status = 1;
    if (json_out) {
        j["records"] = std::move(recs);
        j["passed"] = report.passed;
        j["failed"] = report.failed;
        std::cout << j.dump() << '\n';
    } else {
        std::cout << "records " << report.records.size() << " passed " << report.passed
                  << " failed " << report.failed << '\n';
    }
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Streaming simultaneous speech-to-text translation toolkit"};
    app.require_subcommand(1);

    std::string config_path, output, input, init_path, endpoint_url;
    std::string emissions_path, references_path, manifest_path;
    bool json_out = false;
    std::optional<std::uint64_t> seed_override;
    std::optional<int> k_override;
    int stage = 1;

    auto* synthesize = app.add_subcommand(
        "synthesize", "Build robust-segment manifests from aligned recordings");
    synthesize->add_option("--config", config_path, "run configuration file")->required();
    synthesize->add_option("--output", output, "output directory for the manifest");
    synthesize->add_option("--seed", seed_override, "override run.seed");
    synthesize->add_option("--mock-endpoint", endpoint_url,
                           "chat-completions endpoint used to translate transcripts");
    synthesize->add_flag("--json", json_out, "machine-readable output");

    auto* train_cmd =
        app.add_subcommand("train", "Run one training stage over a segment manifest");
    train_cmd->add_option("--config", config_path, "run configuration file")->required();
    train_cmd->add_option("--stage", stage, "training stage (1 or 2)")
        ->check(CLI::Range(1, 2));
    train_cmd->add_option("--seed", seed_override, "override run.seed");
    train_cmd->add_option("--manifest", manifest_path, "override paths.manifest");
    train_cmd->add_option("--init", init_path, "input checkpoint for stage 2");
    train_cmd->add_option("--output", output, "override paths.checkpoint");
    train_cmd->add_flag("--json", json_out, "machine-readable output");

    auto* translate =
        app.add_subcommand("translate", "Stream a feature file through the model");
    translate->add_option("--config", config_path, "run configuration file")->required();
    translate->add_option("--input", input, "feature file to stream")->required();
    translate->add_option("--output", output, "emission log to write")->required();
    translate->add_option("--latency-multiplier", k_override,
                          "chunks accumulated per turn");
    translate->add_flag("--json", json_out, "machine-readable output");

    auto* evaluate =
        app.add_subcommand("evaluate", "Score an emission log against references");
    evaluate->add_option("--emissions", emissions_path, "emission log")->required();
    evaluate->add_option("--references", references_path, "reference segments")->required();
    evaluate->add_flag("--json", json_out, "machine-readable output");

    auto* validate = app.add_subcommand("validate", "Validate a segment manifest");
    validate->add_option("--manifest", manifest_path, "manifest to validate");
    validate->add_option("--config", config_path,
                         "also check that configured paths exist");
    validate->add_flag("--json", json_out, "machine-readable output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg = load_run_config(config_path);
        if (seed_override) cfg.seed = *seed_override;
        if (!manifest_path.empty()) cfg.paths.manifest = manifest_path;

        if (synthesize->parsed()) {
            const std::string dir = output.empty()
                                        ? fs::path(cfg.paths.manifest).parent_path().string()
                                        : output;
            return cmd_synthesize(cfg, dir, endpoint_url, json_out);
        }
        if (train_cmd->parsed()) {
            if (!output.empty()) cfg.paths.checkpoint = output;
            return cmd_train(cfg, stage, init_path, json_out);
        }
        if (translate->parsed())
            return cmd_translate(cfg, input, output,
                                 k_override.value_or(cfg.latency_multiplier), json_out);
        if (evaluate->parsed()) return cmd_evaluate(emissions_path, references_path, json_out);
        if (validate->parsed()) {
            const std::string m =
                manifest_path.empty() ? cfg.paths.manifest : manifest_path;
            return cmd_validate(m, config_path, json_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
