#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "sst/trajectory.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "test_support.hpp"

using namespace sst;

namespace {

AlignedUtterance make_utt(double start_ms, const std::vector<double>& word_ends,
                          const std::vector<std::string>& tokens,
                          const std::vector<std::pair<int, int>>& alignment) {
    AlignedUtterance u;
    double prev = 0.0;
    for (double end : word_ends) {
        u.source_words.push_back({"w", prev, end});
        prev = end;
    }
    u.target_tokens = tokens;
    u.word_alignment = alignment;
    u.start_ms = start_ms;
    u.end_ms = start_ms + (word_ends.empty() ? 0.0 : word_ends.back());
    return u;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("word_boundaries basic rules") {
    // one token aligned to one word ending at 500
    auto u1 = make_utt(0, {500}, {"a"}, {{0, 0}});
    CHECK(word_boundaries(u1) == std::vector<double>{500});

    // token aligned to two words (ends 400, 700) -> max rule
    auto u2 = make_utt(0, {400, 700}, {"a"}, {{0, 0}, {1, 0}});
    CHECK(word_boundaries(u2) == std::vector<double>{700});

    // empty target -> empty boundaries
    auto u3 = make_utt(0, {400}, {}, {});
    CHECK(word_boundaries(u3).empty());
}

TEST_CASE("word_boundaries matches a per-token exhaustive scan on random instances") {
    Rng rng(101);
    for (int trial = 0; trial < 50; ++trial) {
        const int n_words = 1 + static_cast<int>(rng.uniform_int(0, 5));
        const int n_tokens = 1 + static_cast<int>(rng.uniform_int(0, 5));
        std::vector<double> ends;
        double t = 0;
        for (int i = 0; i < n_words; ++i) {
            t += 100 + 400 * rng.uniform();
            ends.push_back(std::floor(t));
        }
        std::vector<std::string> tokens(static_cast<std::size_t>(n_tokens), "x");
        std::vector<std::pair<int, int>> align;
        for (int i = 0; i < n_words; ++i)
            if (rng.uniform() < 0.7)
                align.emplace_back(i, static_cast<int>(rng.uniform_int(0, n_tokens - 1)));
        auto u = make_utt(0, ends, tokens, align);

        std::vector<double> oracle(static_cast<std::size_t>(n_tokens), 0.0);
        for (int tok = 0; tok < n_tokens; ++tok)
            for (const auto& [s, tt] : align)
                if (tt == tok)
                    oracle[static_cast<std::size_t>(tok)] =
                        std::max(oracle[static_cast<std::size_t>(tok)],
                                 u.source_words[static_cast<std::size_t>(s)].end_ms);
        CHECK(word_boundaries(u) == oracle);
    }
}

TEST_CASE("enforce_monotonic is a running maximum and idempotent") {
    CHECK(enforce_monotonic({500, 300, 900}) == std::vector<double>{500, 500, 900});
    CHECK(enforce_monotonic({100, 200, 300}) == std::vector<double>{100, 200, 300});
    CHECK(enforce_monotonic({0, 0, 0}) == std::vector<double>{0, 0, 0});

    Rng rng(102);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> m;
        for (int i = 0; i < 10; ++i) m.push_back(std::floor(3000 * rng.uniform()));
        auto once = enforce_monotonic(m);
        CHECK(enforce_monotonic(once) == once);
        for (std::size_t i = 1; i < once.size(); ++i) CHECK(once[i] >= once[i - 1]);
    }
}

TEST_CASE("build_trajectory places tokens in the first feasible chunk") {
    SynthesisConfig cfg;
    auto t1 = build_trajectory({"a"}, {500}, 960, cfg);
    REQUIRE(t1.steps.size() == 1);
    CHECK(t1.steps[0].tokens == std::vector<std::string>{"a"});

    auto t2 = build_trajectory({"a", "b"}, {500, 1900}, 1920, cfg);
    REQUIRE(t2.steps.size() == 2);
    CHECK(t2.steps[0].tokens == std::vector<std::string>{"a"});
    CHECK(t2.steps[1].tokens == std::vector<std::string>{"b"});
    CHECK_FALSE(t2.clamped);
}

TEST_CASE("build_trajectory equals the brute-force smallest-j oracle") {
    SynthesisConfig cfg;
    Rng rng(103);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<double> m;
        double t = 0;
        for (int i = 0; i < 10; ++i) {
            t += 900 * rng.uniform();
            m.push_back(std::floor(t));
        }
        const double duration = m.back() + 500;
        std::vector<std::string> tokens;
        for (int i = 0; i < 10; ++i) tokens.push_back("t" + std::to_string(i));
        Trajectory traj = build_trajectory(tokens, m, duration, cfg);

        const int n_chunks = static_cast<int>(std::ceil(duration / cfg.chunk_ms));
        CHECK(static_cast<int>(traj.steps.size()) == n_chunks);
        for (std::size_t i = 0; i < m.size(); ++i) {
            int oracle_j = 1;
            while (m[i] > cfg.chunk_ms * oracle_j) ++oracle_j;  // smallest feasible j
            const auto& step = traj.steps[static_cast<std::size_t>(oracle_j - 1)];
            CHECK(std::count(step.tokens.begin(), step.tokens.end(), tokens[i]) == 1);
        }
        CHECK(flatten_tokens(traj) == tokens);
    }
}

TEST_CASE("build_trajectory clamps out-of-range boundaries and flags it") {
    SynthesisConfig cfg;
    auto t = build_trajectory({"a", "b"}, {500, 5000}, 1920, cfg);
    CHECK(t.clamped);
    CHECK(t.steps.back().tokens == std::vector<std::string>{"b"});

    CHECK_THROWS_AS(build_trajectory({"a"}, {500, 600}, 960, cfg), std::invalid_argument);
    CHECK_THROWS_AS(build_trajectory({"a", "b"}, {600, 500}, 960, cfg),
                    std::invalid_argument);
}

TEST_CASE("merge_chunks identity, grouping arithmetic and token conservation") {
    SynthesisConfig cfg;
    Rng rng(104);
    Trajectory t;
    for (int j = 1; j <= 30; ++j) {
        TrajectoryStep s;
        s.chunk_index = j;
        const int n = static_cast<int>(rng.uniform_int(0, 2));
        for (int i = 0; i < n; ++i) s.tokens.push_back("c" + std::to_string(j) + "_" + std::to_string(i));
        t.steps.push_back(s);
    }

    Trajectory same = merge_chunks(t, 1, cfg);
    CHECK(same.steps.size() == 30);
    CHECK(flatten_tokens(same) == flatten_tokens(t));

    Trajectory by3 = merge_chunks(t, 3, cfg);
    CHECK(by3.steps.size() == 10);
    CHECK(flatten_tokens(by3) == flatten_tokens(t));
    CHECK(by3.steps[0].chunk_index == 3);
    CHECK(by3.steps[9].chunk_index == 30);

    for (int m = 2; m <= 12; ++m)
        CHECK(flatten_tokens(merge_chunks(t, m, cfg)) == flatten_tokens(t));
    CHECK(merge_chunks(t, 7, cfg).steps.size() == 5);  // last group short

    CHECK_THROWS_AS(merge_chunks(t, 0, cfg), std::invalid_argument);
    CHECK_THROWS_AS(merge_chunks(t, 13, cfg), std::invalid_argument);
}

TEST_CASE("prompt rendering matches the golden file byte for byte") {
    const std::string got = render_translation_prompt(
        "Hello world.", {"First sentence.", "Second sentence."}, "Chinese");
    CHECK(got == read_file(std::string(SST_SOURCE_DIR) + "/tests/data/prompt_golden.txt"));
}

TEST_CASE("prompt rendering edge cases") {
    const std::string none = render_translation_prompt("Hi.", {}, "German");
    CHECK(none.find("|Preceding Sentences|\n\n|End of Preceding Sentences|") !=
          std::string::npos);
    CHECK(none.find("sentence into German. Do not include any \n") != std::string::npos);

    const std::string three =
        render_translation_prompt("S.", {"p1", "p2", "p3"}, "Chinese");
    CHECK(three.find("p1\np2\np3") != std::string::npos);

    CHECK_THROWS_AS(render_translation_prompt("", {}, "Chinese"), std::invalid_argument);
    CHECK_THROWS_AS(render_translation_prompt("S.", {"a", "b", "c", "d"}, "Chinese"),
                    std::invalid_argument);
}

TEST_CASE("slicing a single 30-chunk utterance yields one matching segment") {
    SynthesisConfig cfg;
    std::vector<double> ends;
    std::vector<std::string> tokens;
    std::vector<std::pair<int, int>> align;
    for (int i = 0; i < 20; ++i) {
        ends.push_back(1000.0 * (i + 1));
        tokens.push_back("t" + std::to_string(i));
        align.emplace_back(i, i);
    }
    auto u = make_utt(0, ends, tokens, align);
    u.end_ms = cfg.segment_ms();
    Matrix features = Matrix::Constant(1440, 4, 1.0);

    auto segs = slice_robust_segments({u}, features, cfg);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].frames.rows() == 1440);
    CHECK_FALSE(segs[0].padded);
    CHECK(flatten_tokens(segs[0].trajectory) == tokens);

    Trajectory direct = build_trajectory(
        tokens, enforce_monotonic(word_boundaries(u)), cfg.segment_ms(), cfg);
    REQUIRE(segs[0].trajectory.steps.size() == direct.steps.size());
    for (std::size_t j = 0; j < direct.steps.size(); ++j)
        CHECK(segs[0].trajectory.steps[j].tokens == direct.steps[j].tokens);
}

TEST_CASE("a window landing mid-utterance shifts to the utterance boundary") {
    SynthesisConfig cfg;
    // utterance B spans the 28.8 s mark (25 s .. 35 s)
    auto a = make_utt(0, {5000}, {"a1"}, {{0, 0}});
    auto b = make_utt(25000, {3000, 10000}, {"b1", "b2"}, {{0, 0}, {1, 1}});
    Matrix features = Matrix::Constant(40 * 48, 3, 2.0);  // 38.4 s recording

    auto segs = slice_robust_segments({a, b}, features, cfg);
    REQUIRE(segs.size() >= 2);
    CHECK(segs[1].start_ms == 25000.0);  // shifted back from 28800
    CHECK(segs[0].truncated);            // b1 fit the first window, b2 did not
    CHECK(flatten_tokens(segs[0].trajectory) == std::vector<std::string>{"a1", "b1"});
    CHECK(flatten_tokens(segs[1].trajectory) == std::vector<std::string>{"b2"});
}

TEST_CASE("multi-utterance slicing conserves tokens and respects causality") {
    SynthesisConfig cfg;
    Rng rng(105);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<AlignedUtterance> utts;
        std::vector<std::string> all_tokens;
        double cursor = 0.0;
        const int n_utts = 4 + static_cast<int>(rng.uniform_int(0, 3));
        for (int k = 0; k < n_utts; ++k) {
            std::vector<double> ends;
            std::vector<std::string> toks;
            std::vector<std::pair<int, int>> align;
            const int n = 3 + static_cast<int>(rng.uniform_int(0, 4));
            double t = 0;
            for (int i = 0; i < n; ++i) {
                t += 500 + 2500 * rng.uniform();
                ends.push_back(std::floor(t));
                toks.push_back("u" + std::to_string(k) + "_" + std::to_string(i));
                if (rng.uniform() < 0.8) align.emplace_back(i, i);
            }
            auto u = make_utt(cursor, ends, toks, align);
            utts.push_back(u);
            all_tokens.insert(all_tokens.end(), toks.begin(), toks.end());
            cursor = u.end_ms + std::floor(2000 * rng.uniform());
        }
        const Index rows = static_cast<Index>(std::ceil(cursor / 20.0));
        Matrix features = Matrix::Constant(rows, 2, 1.0);

        auto segs = slice_robust_segments(utts, features, cfg);
        std::vector<std::string> emitted;
        for (const auto& seg : segs) {
            auto flat = flatten_tokens(seg.trajectory);
            emitted.insert(emitted.end(), flat.begin(), flat.end());
            // causality: boundary of every token <= end of its step's chunk
            std::size_t ti = 0;
            for (const auto& step : seg.trajectory.steps)
                for (std::size_t i = 0; i < step.tokens.size(); ++i, ++ti)
                    CHECK(seg.boundaries_ms[ti] <= cfg.chunk_ms * step.chunk_index);
            CHECK(seg.frames.rows() == 1440);
        }
        CHECK(emitted == all_tokens);  // every token exactly once, in order
    }
}

TEST_CASE("short recording yields a single padded segment") {
    SynthesisConfig cfg;
    auto u = make_utt(0, {1000, 2000}, {"a", "b"}, {{0, 0}, {1, 1}});
    Matrix features = Matrix::Constant(100, 2, 3.0);  // 2 s of audio
    auto segs = slice_robust_segments({u}, features, cfg);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].padded);
    CHECK(segs[0].frames.rows() == 1440);
    CHECK(segs[0].frames.bottomRows(1340).cwiseAbs().maxCoeff() == 0.0);
    CHECK(flatten_tokens(segs[0].trajectory) == std::vector<std::string>{"a", "b"});
}

TEST_CASE("simulation with zero silence is pure concatenation") {
    SynthesisConfig cfg;
    cfg.silence_cap_ms = 0.0;  // truncation forces every silence to zero
    cfg.leading_silence_prob = 0.0;
    std::vector<AlignedUtterance> pool;
    std::vector<Matrix> feats;
    int total_tokens = 0;
    for (int k = 0; k < 3; ++k) {
        auto u = make_utt(0, {1000, 2000}, {"a" + std::to_string(k), "b" + std::to_string(k)},
                          {{0, 0}, {1, 1}});
        pool.push_back(u);
        feats.push_back(Matrix::Constant(100, 2, k + 1.0));
        total_tokens += 2;
    }
    RobustSegment seg = simulate_robust_segment(pool, feats, cfg, 7);
    CHECK(static_cast<int>(flatten_tokens(seg.trajectory).size()) == total_tokens);
    // the three utterances occupy rows 0..299 back to back, order seeded
    for (Index r = 0; r < 300; ++r) CHECK(seg.frames.row(r).cwiseAbs().maxCoeff() > 0.0);
    CHECK(seg.frames.bottomRows(1440 - 300).cwiseAbs().maxCoeff() == 0.0);
    CHECK(seg.padded);
}

TEST_CASE("simulation is reproducible and matches the shifted-timestamp oracle") {
    SynthesisConfig cfg;
    cfg.leading_silence_prob = 1.0;
    std::vector<AlignedUtterance> pool;
    std::vector<Matrix> feats;
    for (int k = 0; k < 4; ++k) {
        auto u = make_utt(0, {1500, 3000, 4500},
                          {"x" + std::to_string(k), "y" + std::to_string(k),
                           "z" + std::to_string(k)},
                          {{0, 0}, {1, 1}, {2, 2}});
        pool.push_back(u);
        feats.push_back(Matrix::Constant(225, 1, k + 1.0));  // 4.5 s, distinct value
    }
    RobustSegment s1 = simulate_robust_segment(pool, feats, cfg, 42);
    RobustSegment s2 = simulate_robust_segment(pool, feats, cfg, 42);
    CHECK((s1.frames - s2.frames).cwiseAbs().maxCoeff() == 0.0);
    CHECK(flatten_tokens(s1.trajectory) == flatten_tokens(s2.trajectory));
    CHECK(s1.boundaries_ms == s2.boundaries_ms);

    RobustSegment s3 = simulate_robust_segment(pool, feats, cfg, 43);
    CHECK((s1.frames - s3.frames).cwiseAbs().maxCoeff() > 0.0);

    // oracle: locate each utterance's placement by its distinct feature value
    // and recompute the expected boundaries from the shift
    std::size_t ti = 0;
    for (int id : s1.utterance_ids) {
        Index offset = -1;
        for (Index r = 0; r < s1.frames.rows(); ++r)
            if (s1.frames(r, 0) == id + 1.0) {
                offset = r;
                break;
            }
        REQUIRE(offset >= 0);
        const auto m = enforce_monotonic(word_boundaries(pool[static_cast<std::size_t>(id)]));
        for (double mi : m) {
            const double expected = static_cast<double>(offset) * cfg.frame_ms + mi;
            if (expected > cfg.segment_ms()) break;
            REQUIRE(ti < s1.boundaries_ms.size());
            CHECK(s1.boundaries_ms[ti] == doctest::Approx(expected).epsilon(1e-12));
            ++ti;
        }
    }
    CHECK(ti == s1.boundaries_ms.size());

    // causality after simulation
    std::size_t k = 0;
    for (const auto& step : s1.trajectory.steps)
        for (std::size_t i = 0; i < step.tokens.size(); ++i, ++k)
            CHECK(s1.boundaries_ms[k] <= cfg.chunk_ms * step.chunk_index);
}

TEST_CASE("utterance validation rejects malformed inputs") {
    auto ok = make_utt(0, {500, 900}, {"a"}, {{0, 0}});
    CHECK_NOTHROW(validate_utterance(ok));

    auto bad = ok;
    bad.word_alignment = {{5, 0}};
    CHECK_THROWS_AS(validate_utterance(bad), std::invalid_argument);

    auto overlap = ok;
    overlap.source_words[1].start_ms = 100;  // overlaps word 0
    CHECK_THROWS_AS(validate_utterance(overlap), std::invalid_argument);
}

TEST_CASE("endpoint client round-trips against an in-process mock") {
    httplib::Server server;
    std::string seen_body;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req,
                                            httplib::Response& res) {
        seen_body = req.body;
        nlohmann::json out{
            {"choices",
             {{{"message", {{"role", "assistant"}, {"content", "canned translation"}}}}}}};
        res.set_content(out.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ChatEndpointConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.api_key = "test-key";
    const std::string got =
        translate_sentence(cfg, "Hello.", {"Previous."}, "Chinese");
    CHECK(got == "canned translation");

    auto body = nlohmann::json::parse(seen_body);
    const std::string prompt = body["messages"][0]["content"].get<std::string>();
    CHECK(prompt == render_translation_prompt("Hello.", {"Previous."}, "Chinese"));

    server.stop();
    th.join();

    ChatEndpointConfig dead;
    dead.base_url = "http://127.0.0.1:1";
    dead.max_retries = 0;
    dead.retry_backoff_ms = 1;
    CHECK_THROWS_AS(translate_sentence(dead, "Hello.", {}, "Chinese"),
                    std::runtime_error);
}
