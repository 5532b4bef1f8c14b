#include "sst/metrics.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <map>
#include <stdexcept>

namespace sst {

double corpus_bleu(const std::vector<std::vector<int>>& hypotheses,
                   const std::vector<std::vector<int>>& references) {
    if (hypotheses.empty() || hypotheses.size() != references.size())
        throw std::invalid_argument("corpus_bleu: empty corpus or size mismatch");

    constexpr int kMaxN = 4;
    std::array<long long, kMaxN> matches{}, totals{};
    long long hyp_len = 0, ref_len = 0;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        const auto& hyp = hypotheses[i];
        const auto& ref = references[i];
        hyp_len += static_cast<long long>(hyp.size());
        ref_len += static_cast<long long>(ref.size());
        for (int n = 1; n <= kMaxN; ++n) {
            std::map<std::vector<int>, long long> ref_counts;
            for (std::size_t j = 0; j + n <= ref.size(); ++j)
                ++ref_counts[std::vector<int>(ref.begin() + static_cast<std::ptrdiff_t>(j),
                                              ref.begin() + static_cast<std::ptrdiff_t>(j + n))];
            std::map<std::vector<int>, long long> hyp_counts;
            for (std::size_t j = 0; j + n <= hyp.size(); ++j)
                ++hyp_counts[std::vector<int>(hyp.begin() + static_cast<std::ptrdiff_t>(j),
                                              hyp.begin() + static_cast<std::ptrdiff_t>(j + n))];
            for (const auto& [gram, c] : hyp_counts) {
                totals[static_cast<std::size_t>(n - 1)] += c;
                auto it = ref_counts.find(gram);
                if (it != ref_counts.end())
                    matches[static_cast<std::size_t>(n - 1)] += std::min(c, it->second);
            }
        }
    }
    double log_prec_sum = 0.0;
    for (int n = 0; n < kMaxN; ++n) {
        if (totals[static_cast<std::size_t>(n)] == 0 ||
            matches[static_cast<std::size_t>(n)] == 0)
            return 0.0;  // no smoothing at corpus level
        log_prec_sum += std::log(static_cast<double>(matches[static_cast<std::size_t>(n)]) /
                                 static_cast<double>(totals[static_cast<std::size_t>(n)]));
    }
    const double bp = hyp_len >= ref_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(ref_len) /
                                               static_cast<double>(hyp_len));
    return 100.0 * bp * std::exp(log_prec_sum / kMaxN);
}

Index token_edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<Index> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<Index>(j);
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<Index>(i);
        for (std::size_t j = 1; j <= m; ++j) {
            const Index sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

namespace {

void validate_refs(const std::vector<RefSegment>& refs) {
    if (refs.empty()) throw std::invalid_argument("references must be nonempty");
    for (std::size_t i = 0; i < refs.size(); ++i) {
        if (refs[i].t1_ms < refs[i].t0_ms)
            throw std::invalid_argument("reference segment with negative span");
        if (i > 0 && refs[i].t0_ms < refs[i - 1].t1_ms)
            throw std::invalid_argument("reference segments overlap or out of order");
    }
}

}  // namespace

std::vector<Index> resegment_splits(const std::vector<int>& hyp,
                                    const std::vector<RefSegment>& refs) {
    validate_refs(refs);
    const auto n = static_cast<Index>(hyp.size());
    const auto r = static_cast<Index>(refs.size());

    // suffix DP: best[i][j] = min total edit distance of refs i.. against
    // hyp j.., with edit distances of one segment computed incrementally
    const Index kInf = std::numeric_limits<Index>::max() / 4;
    std::vector<std::vector<Index>> best(static_cast<std::size_t>(r) + 1,
                                         std::vector<Index>(static_cast<std::size_t>(n) + 1,
                                                            kInf));
    for (Index j = 0; j <= n; ++j)
        best[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)] =
            j == n ? 0 : kInf;

    for (Index i = r - 1; i >= 0; --i) {
        const auto& ref = refs[static_cast<std::size_t>(i)].tokens;
        const auto m = static_cast<Index>(ref.size());
        for (Index j = 0; j <= n; ++j) {
            // rolling edit-distance row for hyp[j..e) vs ref, e growing
            std::vector<Index> row(static_cast<std::size_t>(m) + 1);
            for (Index c = 0; c <= m; ++c) row[static_cast<std::size_t>(c)] = c;
            Index best_here = kInf;
            auto relax = [&](Index e) {
                const Index tail = best[static_cast<std::size_t>(i) + 1]
                                       [static_cast<std::size_t>(e)];
                if (tail < kInf)
                    best_here = std::min(best_here, row[static_cast<std::size_t>(m)] + tail);
            };
            relax(j);
            for (Index e = j; e < n; ++e) {
                std::vector<Index> next(static_cast<std::size_t>(m) + 1);
                next[0] = row[0] + 1;
                for (Index c = 1; c <= m; ++c) {
                    const Index sub =
                        row[static_cast<std::size_t>(c - 1)] +
                        (hyp[static_cast<std::size_t>(e)] ==
                                 ref[static_cast<std::size_t>(c - 1)]
                             ? 0
                             : 1);
                    next[static_cast<std::size_t>(c)] =
                        std::min({sub, row[static_cast<std::size_t>(c)] + 1,
                                  next[static_cast<std::size_t>(c - 1)] + 1});
                }
                row = std::move(next);
                relax(e + 1);
            }
            best[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = best_here;
        }
    }

    // forward walk choosing the earliest split consistent with the optimum
    std::vector<Index> splits{0};
    Index j = 0;
    for (Index i = 0; i < r; ++i) {
        const auto& ref = refs[static_cast<std::size_t>(i)].tokens;
        const auto m = static_cast<Index>(ref.size());
        std::vector<Index> row(static_cast<std::size_t>(m) + 1);
        for (Index c = 0; c <= m; ++c) row[static_cast<std::size_t>(c)] = c;
        const Index target = best[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        Index chosen = -1;
        for (Index e = j; e <= n; ++e) {
            const Index tail =
                best[static_cast<std::size_t>(i) + 1][static_cast<std::size_t>(e)];
            if (tail < std::numeric_limits<Index>::max() / 4 &&
                row[static_cast<std::size_t>(m)] + tail == target) {
                chosen = e;
                break;
            }
            if (e == n) break;
            std::vector<Index> next(static_cast<std::size_t>(m) + 1);
            next[0] = row[0] + 1;
            for (Index c = 1; c <= m; ++c) {
                const Index sub = row[static_cast<std::size_t>(c - 1)] +
                                  (hyp[static_cast<std::size_t>(e)] ==
                                           ref[static_cast<std::size_t>(c - 1)]
                                       ? 0
                                       : 1);
                next[static_cast<std::size_t>(c)] =
                    std::min({sub, row[static_cast<std::size_t>(c)] + 1,
                              next[static_cast<std::size_t>(c - 1)] + 1});
            }
            row = std::move(next);
        }
        if (chosen < 0) throw std::logic_error("resegment: reconstruction failed");
        splits.push_back(chosen);
        j = chosen;
    }
    splits.back() = n;
    return splits;
}

std::vector<std::vector<int>> resegment(const std::vector<int>& hyp,
                                        const std::vector<RefSegment>& refs) {
    const std::vector<Index> splits = resegment_splits(hyp, refs);
    std::vector<std::vector<int>> out;
    for (std::size_t i = 0; i + 1 < splits.size(); ++i)
        out.emplace_back(hyp.begin() + static_cast<std::ptrdiff_t>(splits[i]),
                         hyp.begin() + static_cast<std::ptrdiff_t>(splits[i + 1]));
    return out;
}

double laal_segment(const std::vector<double>& delays_ms, double t_ms,
                    std::size_t ref_len) {
    if (t_ms <= 0.0) throw std::invalid_argument("laal_segment: T must be positive");
    for (std::size_t i = 1; i < delays_ms.size(); ++i)
        if (delays_ms[i] < delays_ms[i - 1])
            throw std::invalid_argument("laal_segment: delays must be nondecreasing");
    if (delays_ms.empty()) return t_ms;

    const std::size_t hyp_len = delays_ms.size();
    std::size_t tau = hyp_len;
    for (std::size_t i = 0; i < hyp_len; ++i)
        if (delays_ms[i] >= t_ms) {
            tau = i + 1;
            break;
        }
    const double denom = static_cast<double>(std::max(ref_len, hyp_len));
    double sum = 0.0;
    for (std::size_t i = 0; i < tau; ++i)
        sum += delays_ms[i] - static_cast<double>(i) * t_ms / denom;
    return sum / static_cast<double>(tau);
}

double stream_laal(const EmissionLog& log, const std::vector<RefSegment>& refs,
                   LatencyMode mode) {
    validate_refs(refs);
    std::vector<int> hyp;
    for (const auto& rec : log.records) hyp.push_back(rec.token);
    const std::vector<Index> splits = resegment_splits(hyp, refs);

    double sum = 0.0;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        std::vector<double> delays;
        for (Index k = splits[i]; k < splits[i + 1]; ++k) {
            const auto& rec = log.records[static_cast<std::size_t>(k)];
            const double t = mode == LatencyMode::kIdeal ? rec.ideal_ms : rec.ca_ms;
            delays.push_back(t - refs[i].t0_ms);
        }
        sum += laal_segment(delays, refs[i].t1_ms - refs[i].t0_ms,
                            refs[i].tokens.size());
    }
    return sum / static_cast<double>(refs.size());
}

LatencyReport evaluate_stream(const EmissionLog& log,
                              const std::vector<RefSegment>& refs) {
    validate_refs(refs);
    std::vector<int> hyp;
    for (const auto& rec : log.records) hyp.push_back(rec.token);
    const std::vector<Index> splits = resegment_splits(hyp, refs);

    LatencyReport report;
    std::vector<std::vector<int>> hyp_segments;
    std::vector<std::vector<int>> ref_segments;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        hyp_segments.emplace_back(hyp.begin() + static_cast<std::ptrdiff_t>(splits[i]),
                                  hyp.begin() + static_cast<std::ptrdiff_t>(splits[i + 1]));
        ref_segments.push_back(refs[i].tokens);
        std::vector<double> ideal, ca;
        for (Index k = splits[i]; k < splits[i + 1]; ++k) {
            const auto& rec = log.records[static_cast<std::size_t>(k)];
            ideal.push_back(rec.ideal_ms - refs[i].t0_ms);
            ca.push_back(rec.ca_ms - refs[i].t0_ms);
        }
        const double t = refs[i].t1_ms - refs[i].t0_ms;
        report.segment_laal_ms.push_back(laal_segment(ideal, t, refs[i].tokens.size()));
        report.segment_laal_ca_ms.push_back(laal_segment(ca, t, refs[i].tokens.size()));
    }
    report.bleu = corpus_bleu(hyp_segments, ref_segments);
    double si = 0.0, sc = 0.0;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        si += report.segment_laal_ms[i];
        sc += report.segment_laal_ca_ms[i];
    }
    report.stream_laal_ms = si / static_cast<double>(refs.size());
    report.stream_laal_ca_ms = sc / static_cast<double>(refs.size());
    return report;
}

}  // namespace sst
