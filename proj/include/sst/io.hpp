#pragma once

#include <optional>
#include <memory>
#include <string>

#include "sst/metrics.hpp"
#include "sst/trainer.hpp"

namespace sst {

// ---- Feature files -------------------------------------------------------
// Binary layout: magic "SSTF", u32 version (1), u64 d_in, f64 frame_ms,
// u64 n_frames, then n_frames * d_in row-major little-endian doubles.

struct FeatureFile {
    Matrix frames;
    double frame_ms = 20.0;
};

void write_features(const std::string& path, const Matrix& frames, double frame_ms);
FeatureFile read_features(const std::string& path);

// ---- Alignment files -----------------------------------------------------
// JSONL, one utterance per line:
// {"start_ms","end_ms","source_words":[{"text","start_ms","end_ms"}],
//  "target_tokens":[...],"alignment":[[src,tgt],...]}

void write_alignments(const std::string& path, const std::vector<AlignedUtterance>& utts);
std::vector<AlignedUtterance> read_alignments(const std::string& path);

// ---- Reference segments --------------------------------------------------
// JSONL: {"tokens":["...",...],"t0_ms":...,"t1_ms":...}

struct RefSegmentText {
    std::vector<std::string> tokens;
    double t0_ms = 0.0;
    double t1_ms = 0.0;
};

void write_references(const std::string& path, const std::vector<RefSegmentText>& refs);
std::vector<RefSegmentText> read_references(const std::string& path);

// ---- Emission logs -------------------------------------------------------
// Header line {"schema":"sst-emissions","version":1,"source_duration_ms",
// "forced_turns"} followed by one record per line:
// {"token","text","ideal_ms","ca_ms","turn"}.

struct EmissionFile {
    EmissionLog log;
    std::vector<std::string> token_texts;  // parallel to log.records
};

void write_emission_log(const std::string& path, const EmissionLog& log,
                        const std::vector<std::string>& token_texts);
EmissionFile read_emission_log(const std::string& path);

// ---- Training logs -------------------------------------------------------
// JSONL of {"step","lr","loss","tokens"}.

void write_training_log(const std::string& path, const std::vector<TrainStepLog>& log);
std::vector<TrainStepLog> read_training_log(const std::string& path);

// ---- Segment manifests ---------------------------------------------------
// Header line {"schema":"sst-manifest","version":1} followed by one record
// per segment. Records carry the trajectory, provenance (including inline
// utterance copies so they validate standalone) and the relative path of the
// companion feature file holding the segment frames.

struct ManifestRecord {
    std::string id;
    std::string features_path;  // relative to the manifest's directory
    double start_ms = 0.0;
    bool padded = false;
    bool truncated = false;
    std::vector<int> utterance_ids;
    std::vector<double> boundaries_ms;
    Trajectory trajectory;
    std::vector<AlignedUtterance> utterances;  // provenance copies
};

void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> read_manifest(const std::string& path);

// Writes manifest + per-segment feature files into `dir` and reads them back
// as in-memory segments (order preserved).
void write_segment_dataset(const std::string& dir,
                           const std::vector<RobustSegment>& segments,
                           const std::vector<std::vector<AlignedUtterance>>& provenance,
                           double frame_ms);
std::vector<RobustSegment> read_segment_dataset(const std::string& manifest_path);

// ---- Checkpoints ---------------------------------------------------------
// Binary layout: magic "SSTC", u32 version (1), u64 json header length +
// bytes (model config, vocab, optional LoRA config), u32 parameter count,
// then per parameter: u32 name length + name, u64 rows, u64 cols, row-major
// little-endian doubles. Parameters are keyed by name, not order.

void save_checkpoint(const std::string& path, const Model& model, const ModelConfig& cfg,
                     const Vocab& vocab, std::uint64_t seed,
                     const std::optional<LoraConfig>& lora);

struct LoadedCheckpoint {
    ModelConfig config;
    Vocab vocab;
    std::uint64_t seed = 0;
    std::optional<LoraConfig> lora;
    std::unique_ptr<Model> model;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace sst
