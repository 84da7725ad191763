#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>
#include <omp.h>

#include "pokerlab/agents.hpp"
#include "pokerlab/engine.hpp"
#include "pokerlab/phh.hpp"

namespace pokerlab {

struct GenConfig {
    int64_t hands = 1000;
    uint64_t seed = 1;
    HandMeta meta;
    int64_t equity_rollouts = 1000;
    double split = 0.95;
    int threads = 0; // 0 = all hardware threads
};

// Plays one hand to completion with six style-parameterized agents. Fully
// determined by (meta, styles, hand_seed, rollouts).
inline PhhRecord simulate_hand(const HandMeta& meta,
                               const std::array<StyleVector, kPlayers>& styles,
                               uint64_t hand_seed, int64_t equity_rollouts) {
    Rng deal_rng(derive_seed(hand_seed, 0xDEA1u));
    Rng decision_rng(derive_seed(hand_seed, 0xDEC1u));
    AgentConfig acfg{equity_rollouts};

    GameState state = GameState::new_hand(meta, deal_rng);
    int guard = 0;
    while (!state.terminal()) {
        if (++guard > 10000) throw std::logic_error("simulate_hand: runaway hand");
        AgentDecision d = decide(state, styles[state.to_act()], acfg, decision_rng);
        state = state.apply(d.action);
    }
    return PhhRecord{meta, state.events()};
}

inline std::array<StyleVector, kPlayers> styles_for_hand(uint64_t seed, int64_t hand_index) {
    std::array<StyleVector, kPlayers> styles;
    uint64_t style_seed = derive_seed(seed, 0x57u, static_cast<uint64_t>(hand_index));
    for (int p = 0; p < kPlayers; ++p) styles[p] = init_style(style_seed, p);
    return styles;
}

struct CorpusSummary {
    int64_t train_hands = 0;
    int64_t test_hands = 0;
    std::filesystem::path train_path, test_path, manifest_path;
};

// Generates `hands` independent hands (parallel across hands, deterministic
// output order) and writes train/test PHH files plus a JSON manifest that is
// sufficient to reproduce the run.
inline CorpusSummary generate_corpus(const GenConfig& cfg, const std::filesystem::path& out_dir) {
    if (cfg.hands <= 0) throw std::invalid_argument("generate_corpus: hands must be positive");
    CorpusWriter writer(out_dir, cfg.hands, cfg.split, cfg.seed);

    const int64_t chunk = 2048;
    std::vector<PhhRecord> buffer;
    for (int64_t base = 0; base < cfg.hands; base += chunk) {
        int64_t n = std::min(chunk, cfg.hands - base);
        buffer.assign(static_cast<size_t>(n), PhhRecord{});
        int threads = cfg.threads > 0 ? cfg.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 16) num_threads(threads)
        for (int64_t i = 0; i < n; ++i) {
            int64_t hand_index = base + i;
            auto styles = styles_for_hand(cfg.seed, hand_index);
            uint64_t hand_seed = derive_seed(cfg.seed, 0x4A4Du, static_cast<uint64_t>(hand_index));
            buffer[static_cast<size_t>(i)] =
                simulate_hand(cfg.meta, styles, hand_seed, cfg.equity_rollouts);
        }
        for (const PhhRecord& r : buffer) writer.add(r);
    }
    auto counts = writer.finalize();

    nlohmann::json manifest{
        {"version", 1},
        {"command", "generate"},
        {"hands", cfg.hands},
        {"seed", cfg.seed},
        {"split", cfg.split},
        {"train_hands", counts.train_hands},
        {"test_hands", counts.test_hands},
        {"equity_rollouts", cfg.equity_rollouts},
        {"small_blind", cfg.meta.small_blind},
        {"big_blind", cfg.meta.big_blind},
        {"button", cfg.meta.button + 1},
        {"stacks", cfg.meta.stacks},
    };
    nlohmann::json ranges = nlohmann::json::object();
    for (const auto& r : kStyleRanges) ranges[r.name] = {r.lo, r.hi};
    manifest["style_ranges"] = ranges;

    CorpusSummary summary;
    summary.train_hands = counts.train_hands;
    summary.test_hands = counts.test_hands;
    summary.train_path = out_dir / "train.phh";
    summary.test_path = out_dir / "test.phh";
    summary.manifest_path = out_dir / "manifest.json";
    std::ofstream mf(summary.manifest_path);
    mf << manifest.dump(2) << '\n';
    if (!mf) throw std::runtime_error("generate_corpus: cannot write manifest under " +
                                      out_dir.string());
    return summary;
}

} // namespace pokerlab
