#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "sst/metrics.hpp"

#include <cmath>

#include "test_support.hpp"

using namespace sst;

namespace {

RefSegment make_ref(std::vector<int> tokens, double t0, double t1) {
    RefSegment r;
    r.tokens = std::move(tokens);
    r.t0_ms = t0;
    r.t1_ms = t1;
    return r;
}

EmissionLog make_log(const std::vector<int>& tokens, const std::vector<double>& ideal,
                     const std::vector<double>& ca) {
    EmissionLog log;
    for (std::size_t i = 0; i < tokens.size(); ++i)
        log.records.push_back({tokens[i], ideal[i], ca[i], 0});
    return log;
}

}  // namespace

TEST_CASE("BLEU: identity, hand case, zero 4-gram, permutation invariance") {
    std::vector<std::vector<int>> refs = {{1, 2, 3, 4, 5}, {6, 7, 8, 9}};
    CHECK(corpus_bleu(refs, refs) == doctest::Approx(100.0).epsilon(1e-12));

    // hyp "a b c d" vs ref "a b c d e": precisions all 1, BP = exp(1 - 5/4)
    const double expected = 100.0 * std::exp(1.0 - 5.0 / 4.0);
    CHECK(corpus_bleu({{1, 2, 3, 4}}, {{1, 2, 3, 4, 5}}) ==
          doctest::Approx(expected).epsilon(1e-10));
    CHECK(std::abs(corpus_bleu({{1, 2, 3, 4}}, {{1, 2, 3, 4, 5}}) - 77.88) < 0.01);

    // no 4-gram match anywhere -> 0 without smoothing
    CHECK(corpus_bleu({{1, 2, 9, 4, 5}}, {{1, 2, 3, 4, 5}}) == 0.0);

    // corpus pair order is irrelevant
    std::vector<std::vector<int>> hyps = {{1, 2, 3, 4}, {6, 7, 8, 9, 9}};
    std::vector<std::vector<int>> rfs = {{1, 2, 3, 4, 5}, {6, 7, 8, 9}};
    std::vector<std::vector<int>> hyps_r = {hyps[1], hyps[0]};
    std::vector<std::vector<int>> rfs_r = {rfs[1], rfs[0]};
    CHECK(corpus_bleu(hyps, rfs) == doctest::Approx(corpus_bleu(hyps_r, rfs_r)).epsilon(1e-12));

    CHECK_THROWS_AS(corpus_bleu({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(corpus_bleu({{1}}, {{1}, {2}}), std::invalid_argument);
}

TEST_CASE("token edit distance basics") {
    CHECK(token_edit_distance({}, {}) == 0);
    CHECK(token_edit_distance({1, 2, 3}, {1, 2, 3}) == 0);
    CHECK(token_edit_distance({1, 2, 3}, {}) == 3);
    CHECK(token_edit_distance({1, 2, 3}, {1, 9, 3}) == 1);
    CHECK(token_edit_distance({1, 2, 3}, {2, 3}) == 1);
    CHECK(token_edit_distance({1, 2}, {2, 1}) == 2);
}

TEST_CASE("resegmentation recovers exact boundaries and trivial cases") {
    std::vector<RefSegment> refs = {make_ref({1, 2, 3}, 0, 1000),
                                    make_ref({4, 5}, 1000, 2000)};
    auto segs = resegment({1, 2, 3, 4, 5}, refs);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0] == std::vector<int>{1, 2, 3});
    CHECK(segs[1] == std::vector<int>{4, 5});

    // single reference -> whole hypothesis
    auto one = resegment({7, 8, 9}, {make_ref({7, 7}, 0, 500)});
    REQUIRE(one.size() == 1);
    CHECK(one[0] == std::vector<int>{7, 8, 9});

    // empty hypothesis -> all segments empty
    auto empty = resegment({}, refs);
    REQUIRE(empty.size() == 2);
    CHECK(empty[0].empty());
    CHECK(empty[1].empty());

    CHECK_THROWS_AS(resegment({1}, {}), std::invalid_argument);
    CHECK_THROWS_AS(resegment({1}, {make_ref({1}, 0, 1000), make_ref({1}, 500, 1500)}),
                    std::invalid_argument);
}

TEST_CASE("resegmentation equals brute-force split enumeration") {
    Rng rng(201);
    for (int trial = 0; trial < 100; ++trial) {
        const int r = 2 + static_cast<int>(rng.uniform_int(0, 1));  // 2 or 3 segments
        const int n = static_cast<int>(rng.uniform_int(0, 8));
        std::vector<int> hyp;
        for (int i = 0; i < n; ++i) hyp.push_back(static_cast<int>(rng.uniform_int(0, 3)));
        std::vector<RefSegment> refs;
        double t = 0;
        for (int i = 0; i < r; ++i) {
            std::vector<int> ref;
            const int m = 1 + static_cast<int>(rng.uniform_int(0, 3));
            for (int j = 0; j < m; ++j) ref.push_back(static_cast<int>(rng.uniform_int(0, 3)));
            refs.push_back(make_ref(ref, t, t + 1000));
            t += 1000;
        }

        // brute force over all split tuples, earliest-lexicographic tie-break
        std::vector<Index> best_splits;
        Index best_cost = std::numeric_limits<Index>::max();
        auto consider = [&](const std::vector<Index>& cuts) {
            Index cost = 0;
            std::vector<Index> full{0};
            full.insert(full.end(), cuts.begin(), cuts.end());
            full.push_back(n);
            for (int i = 0; i < r; ++i)
                cost += token_edit_distance(
                    std::vector<int>(hyp.begin() + full[static_cast<std::size_t>(i)],
                                     hyp.begin() + full[static_cast<std::size_t>(i) + 1]),
                    refs[static_cast<std::size_t>(i)].tokens);
            if (cost < best_cost || (cost == best_cost && cuts < std::vector<Index>(
                                                              best_splits.begin() + 1,
                                                              best_splits.end() - 1))) {
                best_cost = cost;
                best_splits = full;
            }
        };
        if (r == 2) {
            for (Index s1 = 0; s1 <= n; ++s1) consider({s1});
        } else {
            for (Index s1 = 0; s1 <= n; ++s1)
                for (Index s2 = s1; s2 <= n; ++s2) consider({s1, s2});
        }
        CHECK(resegment_splits(hyp, refs) == best_splits);
    }
}

TEST_CASE("segment LAAL trivial and forced cases") {
    // perfectly paced: d_i = (i-1) * T / n, all < T -> 0
    const double T = 1000.0;
    std::vector<double> paced;
    for (int i = 0; i < 5; ++i) paced.push_back(static_cast<double>(i) * T / 5.0);
    CHECK(laal_segment(paced, T, 5) == doctest::Approx(0.0).epsilon(1e-12));

    // all tokens at time T -> tau = 1, LAAL = T
    CHECK(laal_segment({T, T, T}, T, 3) == doctest::Approx(T).epsilon(1e-12));

    // empty hypothesis -> T
    CHECK(laal_segment({}, T, 4) == T);

    CHECK_THROWS_AS(laal_segment({1, 2}, 0.0, 2), std::invalid_argument);
    CHECK_THROWS_AS(laal_segment({5, 4}, T, 2), std::invalid_argument);
}

TEST_CASE("segment LAAL equals an independent direct-sum evaluator") {
    Rng rng(202);
    for (int trial = 0; trial < 50; ++trial) {
        const double T = 500.0 + 2000.0 * rng.uniform();
        const std::size_t hyp_len = 1 + static_cast<std::size_t>(rng.uniform_int(0, 7));
        const std::size_t ref_len = 1 + static_cast<std::size_t>(rng.uniform_int(0, 7));
        std::vector<double> d;
        double t = 0;
        for (std::size_t i = 0; i < hyp_len; ++i) {
            t += 400.0 * rng.uniform();
            d.push_back(t);
        }
        // oracle written straight from the formula
        std::size_t tau = hyp_len;
        for (std::size_t i = 0; i < hyp_len; ++i)
            if (d[i] >= T) {
                tau = i + 1;
                break;
            }
        double sum = 0.0;
        const double denom = static_cast<double>(std::max(ref_len, hyp_len));
        for (std::size_t i = 0; i < tau; ++i)
            sum += d[i] - static_cast<double>(i) * T / denom;
        CHECK(laal_segment(d, T, ref_len) ==
              doctest::Approx(sum / static_cast<double>(tau)).epsilon(1e-12));
    }
}

TEST_CASE("stream LAAL single segment and zero-cost equivalence") {
    std::vector<RefSegment> refs = {make_ref({1, 2, 3}, 0, 3000)};
    EmissionLog log = make_log({1, 2, 3}, {1000, 1500, 2500}, {1000, 1500, 2500});
    CHECK(stream_laal(log, refs, LatencyMode::kIdeal) ==
          doctest::Approx(laal_segment({1000, 1500, 2500}, 3000, 3)).epsilon(1e-12));
    CHECK(stream_laal(log, refs, LatencyMode::kComputationAware) ==
          stream_laal(log, refs, LatencyMode::kIdeal));
}

TEST_CASE("two-segment stream matches the hand computation") {
    // refs: [1 2] over [0,2000), [3 4] over [2000,4000)
    std::vector<RefSegment> refs = {make_ref({1, 2}, 0, 2000),
                                    make_ref({3, 4}, 2000, 4000)};
    EmissionLog log =
        make_log({1, 2, 3, 4}, {500, 1500, 2500, 3500}, {600, 1700, 2800, 3900});
    // exact split: seg1 delays {500, 1500-1000}, seg2 {500, 1500-1000}
    const double seg = (500.0 + (1500.0 - 1000.0)) / 2.0;
    CHECK(stream_laal(log, refs, LatencyMode::kIdeal) ==
          doctest::Approx(seg).epsilon(1e-12));
    const double seg1_ca = (600.0 + (1700.0 - 1000.0)) / 2.0;
    const double seg2_ca = (800.0 + (1900.0 - 1000.0)) / 2.0;
    CHECK(stream_laal(log, refs, LatencyMode::kComputationAware) ==
          doctest::Approx((seg1_ca + seg2_ca) / 2.0).epsilon(1e-12));
}

TEST_CASE("computation-aware LAAL dominates ideal for nonnegative costs") {
    Rng rng(203);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 4 + static_cast<int>(rng.uniform_int(0, 6));
        std::vector<int> tokens;
        std::vector<double> ideal, ca;
        double t = 0, extra = 0;
        for (int i = 0; i < n; ++i) {
            tokens.push_back(static_cast<int>(rng.uniform_int(0, 3)));
            t += 300.0 * rng.uniform();
            extra += 50.0 * rng.uniform();  // accumulated nonnegative compute
            ideal.push_back(t);
            ca.push_back(t + extra);
        }
        std::vector<RefSegment> refs = {
            make_ref({0, 1, 2}, 0, t / 2 + 1),
            make_ref({1, 2, 3}, t / 2 + 1, t + 100)};
        CHECK(stream_laal(make_log(tokens, ideal, ca), refs,
                          LatencyMode::kComputationAware) >=
              stream_laal(make_log(tokens, ideal, ca), refs, LatencyMode::kIdeal));
    }
}

TEST_CASE("uniform time shift moves LAAL by the same amount when tau is stable") {
    // all emissions already past each segment end, so tau stays 1
    std::vector<RefSegment> refs = {make_ref({1, 2}, 0, 1000),
                                    make_ref({3, 4}, 1000, 2000)};
    std::vector<int> toks = {1, 2, 3, 4};
    std::vector<double> times = {1200, 1300, 2400, 2500};
    const double base = stream_laal(make_log(toks, times, times), refs,
                                    LatencyMode::kIdeal);
    const double delta = 250.0;
    std::vector<double> shifted;
    for (double v : times) shifted.push_back(v + delta);
    const double moved = stream_laal(make_log(toks, shifted, shifted), refs,
                                     LatencyMode::kIdeal);
    CHECK(moved == doctest::Approx(base + delta).epsilon(1e-12));
}

TEST_CASE("evaluate_stream assembles a consistent report") {
    std::vector<RefSegment> refs = {make_ref({1, 2, 3, 4}, 0, 2000),
                                    make_ref({5, 6, 7, 8}, 2000, 4000)};
    EmissionLog log = make_log({1, 2, 3, 4, 5, 6, 7, 8},
                               {500, 900, 1300, 1700, 2500, 2900, 3300, 3700},
                               {600, 1000, 1500, 1900, 2800, 3200, 3600, 3950});
    LatencyReport rep = evaluate_stream(log, refs);
    CHECK(rep.bleu == doctest::Approx(100.0).epsilon(1e-10));
    REQUIRE(rep.segment_laal_ms.size() == 2);
    CHECK(rep.stream_laal_ms ==
          doctest::Approx((rep.segment_laal_ms[0] + rep.segment_laal_ms[1]) / 2)
              .epsilon(1e-12));
    CHECK(rep.stream_laal_ca_ms >= rep.stream_laal_ms);
    CHECK(rep.stream_laal_ms ==
          doctest::Approx(stream_laal(log, refs, LatencyMode::kIdeal)).epsilon(1e-12));
}
