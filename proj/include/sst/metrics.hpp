#pragma once

#include "sst/streaming.hpp"

namespace sst {

struct RefSegment {
    std::vector<int> tokens;
    double t0_ms = 0.0;
    double t1_ms = 0.0;
};

// Corpus-level BLEU over pre-tokenized sequences: geometric mean of modified
// n-gram precisions (n = 1..4) times the exponential brevity penalty, no
// smoothing. Returns a score in [0, 100].
double corpus_bleu(const std::vector<std::vector<int>>& hypotheses,
                   const std::vector<std::vector<int>>& references);

Index token_edit_distance(const std::vector<int>& a, const std::vector<int>& b);

// Split points (size refs+1, starting 0 and ending hyp size) of the
// contiguous segmentation minimizing total token edit distance to the
// references; ties break toward the earliest split points, front first.
std::vector<Index> resegment_splits(const std::vector<int>& hyp,
                                    const std::vector<RefSegment>& refs);

std::vector<std::vector<int>> resegment(const std::vector<int>& hyp,
                                        const std::vector<RefSegment>& refs);

// Length-adaptive average lagging for one segment. delays are emission times
// relative to the segment's source start and must be nondecreasing; an empty
// hypothesis scores T (maximal lag).
double laal_segment(const std::vector<double>& delays_ms, double t_ms,
                    std::size_t ref_len);

enum class LatencyMode { kIdeal, kComputationAware };

// Resegment the stream hypothesis against the references, compute LAAL per
// segment from the chosen time channel, and average segments uniformly.
double stream_laal(const EmissionLog& log, const std::vector<RefSegment>& refs,
                   LatencyMode mode);

struct LatencyReport {
    double bleu = 0.0;
    double stream_laal_ms = 0.0;
    double stream_laal_ca_ms = 0.0;
    std::vector<double> segment_laal_ms;
    std::vector<double> segment_laal_ca_ms;
};

LatencyReport evaluate_stream(const EmissionLog& log, const std::vector<RefSegment>& refs);

}  // namespace sst
