#pragma once

#include <map>
#include <string>

#include "sst/streaming.hpp"
#include "sst/toy.hpp"

namespace sst {

// TOML-style key/value document: `key = value` lines, `[section]` headers
// prefixing subsequent keys with "section.", `#` comments, quoted or bare
// scalar values. Returns dotted-key -> raw value text.
std::map<std::string, std::string> parse_kv_file(const std::string& path);
std::map<std::string, std::string> parse_kv_text(const std::string& text);

struct RunPaths {
    std::string data_dir;     // recordings (train/ and eval/ subdirectories)
    std::string manifest;     // segment manifest (synthesize output, train input)
    std::string checkpoint;
    std::string train_log;
    std::string emissions;
    std::string references;
    std::string output;
};

struct RunConfig {
    ModelConfig model;
    SynthesisConfig synthesis;
    ToyConfig toy;
    TrainConfig train_stage1;
    TrainConfig train_stage2;
    LoraConfig lora;
    GenConfig gen;
    CostModel cost;
    int latency_multiplier = 1;
    std::uint64_t seed = 0;
    int target_segments = 200;  // synthesize tops up by simulation if short
    int toy_train_recordings = 20;
    int toy_eval_recordings = 4;
    int toy_utterances_per_recording = 5;
    std::string target_language = "Chinese";
    RunPaths paths;
};

// Defaults overridden by the document; unknown keys throw
// std::invalid_argument naming the key.
RunConfig run_config_from(const std::map<std::string, std::string>& kv);
RunConfig load_run_config(const std::string& path);

// Referenced input paths that do not exist on disk (empty entries skipped).
std::vector<std::string> missing_paths(const RunConfig& cfg);

// ---- Manifest validation -------------------------------------------------

struct RecordReport {
    std::string id;
    bool ok = true;
    std::string reason;
};

struct ManifestReport {
    bool file_ok = true;         // header readable and schema recognized
    std::string file_error;
    std::vector<RecordReport> records;
    int passed = 0;
    int failed = 0;

    bool all_ok() const { return file_ok && failed == 0; }
};

ManifestReport validate_manifest(const std::string& path);

}  // namespace sst
