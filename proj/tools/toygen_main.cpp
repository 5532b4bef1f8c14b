#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sst/config.hpp"
#include "sst/io.hpp"
#include "sst/toy.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sst;

namespace {

void write_split(const std::string& dir, const ToyConfig& toy, int n_recordings,
                 int utterances_each, std::uint64_t seed_base, bool with_references) {
    fs::create_directories(dir);
    std::ofstream index((fs::path(dir) / "recordings.jsonl").string(), std::ios::trunc);
    if (!index) throw std::runtime_error("cannot write recording index in " + dir);
    for (int i = 0; i < n_recordings; ++i) {
        std::ostringstream stem;
        stem << "rec_" << std::setw(5) << std::setfill('0') << i;
        const ToyRecording rec = make_toy_recording(
            toy, utterances_each, seed_base + static_cast<std::uint64_t>(i));
        const std::string align_name = stem.str() + ".align.jsonl";
        const std::string feat_name = stem.str() + ".sstf";
        write_alignments((fs::path(dir) / align_name).string(), rec.utterances);
        write_features((fs::path(dir) / feat_name).string(), rec.features, toy.frame_ms);
        json entry{{"alignments", align_name}, {"features", feat_name}};
        if (with_references) {
            const std::string ref_name = stem.str() + ".refs.jsonl";
            write_references((fs::path(dir) / ref_name).string(),
                             toy_references(rec.utterances));
            entry["references"] = ref_name;
        }
        index << entry.dump() << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generate the bundled synthetic translation dataset"};
    std::string config_path, output;
    std::optional<std::uint64_t> seed_override;
    app.add_option("--config", config_path, "run configuration file")->required();
    app.add_option("--output", output, "data directory (default paths.data_dir)");
    app.add_option("--seed", seed_override, "override run.seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        RunConfig cfg = load_run_config(config_path);
        if (seed_override) cfg.seed = *seed_override;
        const std::string dir = output.empty() ? cfg.paths.data_dir : output;
        if (dir.empty()) throw std::runtime_error("no data directory configured");
        write_split((fs::path(dir) / "train").string(), cfg.toy, cfg.toy_train_recordings,
                    cfg.toy_utterances_per_recording, cfg.seed * 131ULL, false);
        write_split((fs::path(dir) / "eval").string(), cfg.toy, cfg.toy_eval_recordings,
                    cfg.toy_utterances_per_recording, cfg.seed * 131ULL + 100000ULL, true);
        std::cout << "wrote " << cfg.toy_train_recordings << " train and "
                  << cfg.toy_eval_recordings << " eval recordings to " << dir << '\n';
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
