#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "pokerlab/cards.hpp"
#include "pokerlab/rng.hpp"

namespace pokerlab {

struct EquityEstimate {
    double equity = 0.0;  // win probability plus tie share
    int64_t samples = 0;
    double stderr_est = 0.0; // sqrt(p(1-p)/n)
};

namespace detail {

inline uint64_t used_mask(std::span<const Card> hole, std::span<const Card> board) {
    if (hole.size() != 2) throw std::invalid_argument("equity: need exactly 2 hole cards");
    if (board.size() > 5) throw std::invalid_argument("equity: board has at most 5 cards");
    uint64_t used = 0;
    for (Card c : hole) used |= 1ull << c.index();
    for (Card c : board) used |= 1ull << c.index();
    if (static_cast<size_t>(std::popcount(used)) != hole.size() + board.size())
        throw std::invalid_argument("equity: duplicate card among hole/board");
    return used;
}

inline int remaining_cards(uint64_t used, std::array<Card, 52>& out) {
    int m = 0;
    for (int i = 0; i < 52; ++i) {
        if (!(used >> i & 1)) out[m++] = Card::from_index(i);
    }
    return m;
}

} // namespace detail

// Monte-Carlo equity of `hole` against `opponents` unseen hands. Each rollout
// completes the board and deals random opponent holes from the live deck; a
// k-way tie credits 1/k. Deterministic for a given rng seed.
inline EquityEstimate mc_equity(std::span<const Card> hole, std::span<const Card> board,
                                int opponents, int64_t rollouts, Rng& rng) {
    if (opponents < 1 || opponents > 5)
        throw std::invalid_argument("mc_equity: opponents must be 1..5");
    if (rollouts < 1) throw std::invalid_argument("mc_equity: rollouts must be >= 1");
    uint64_t used = detail::used_mask(hole, board);

    std::array<Card, 52> rem{};
    int m = detail::remaining_cards(used, rem);
    const int board_need = 5 - static_cast<int>(board.size());
    const int need = board_need + 2 * opponents;

    std::array<Card, 7> hero{};
    hero[0] = hole[0];
    hero[1] = hole[1];
    for (size_t i = 0; i < board.size(); ++i) hero[2 + i] = board[i];

    std::array<Card, 7> opp{};
    double total = 0.0;
    for (int64_t it = 0; it < rollouts; ++it) {
        // Partial Fisher-Yates; the array stays shuffled between rollouts,
        // which keeps draws uniform without a restore pass.
        for (int i = 0; i < need; ++i) {
            int j = i + static_cast<int>(rng.below(static_cast<uint64_t>(m - i)));
            std::swap(rem[i], rem[j]);
        }
        for (int i = 0; i < board_need; ++i) hero[2 + board.size() + i] = rem[i];
        HandRank hero_rank = evaluate_best(std::span<const Card>(hero.data(), 7));
        std::copy(hero.begin() + 2, hero.end(), opp.begin() + 2);

        int better = 0, equal = 0;
        for (int o = 0; o < opponents && better == 0; ++o) {
            opp[0] = rem[board_need + 2 * o];
            opp[1] = rem[board_need + 2 * o + 1];
            HandRank r = evaluate_best(std::span<const Card>(opp.data(), 7));
            if (r > hero_rank) ++better;
            else if (r == hero_rank) ++equal;
        }
        if (better == 0) total += 1.0 / (1.0 + equal);
    }

    EquityEstimate est;
    est.samples = rollouts;
    est.equity = total / static_cast<double>(rollouts);
    est.stderr_est = std::sqrt(est.equity * (1.0 - est.equity) / static_cast<double>(rollouts));
    return est;
}

// Exact heads-up equity by full enumeration of opponent holes and board
// completions. Tractable from the flop on; the default cap rejects anything
// larger with a hint to fall back to mc_equity.
inline double exact_equity(std::span<const Card> hole, std::span<const Card> board,
                           int64_t max_outcomes = 50'000'000) {
    if (board.size() < 3) throw std::invalid_argument("exact_equity: needs flop or later");
    uint64_t used = detail::used_mask(hole, board);
    std::array<Card, 52> rem{};
    const int64_t m = detail::remaining_cards(used, rem);
    const int board_need = 5 - static_cast<int>(board.size());

    int64_t board_combos = 1;
    for (int i = 0; i < board_need; ++i) board_combos = board_combos * (m - i) / (i + 1);
    int64_t opp_combos = (m - board_need) * (m - board_need - 1) / 2;
    if (board_combos * opp_combos > max_outcomes)
        throw std::domain_error("exact_equity: enumeration too large; use mc_equity");

    std::array<Card, 7> hero{};
    hero[0] = hole[0];
    hero[1] = hole[1];
    for (size_t i = 0; i < board.size(); ++i) hero[2 + i] = board[i];
    std::array<Card, 7> opp{};

    double total = 0.0;
    int64_t outcomes = 0;
    // Board completion indices b1 < b2 into rem; -1 means unused slot.
    auto run_opponents = [&](int b1, int b2) {
        for (size_t i = 0; i < board.size(); ++i) opp[2 + i] = board[i];
        int extra = 0;
        if (b1 >= 0) { hero[2 + board.size()] = rem[b1]; opp[2 + board.size()] = rem[b1]; extra = 1; }
        if (b2 >= 0) { hero[2 + board.size() + 1] = rem[b2]; opp[2 + board.size() + 1] = rem[b2]; extra = 2; }
        (void)extra;
        HandRank hero_rank = evaluate_best(std::span<const Card>(hero.data(), 7));
        for (int i = 0; i < m; ++i) {
            if (i == b1 || i == b2) continue;
            for (int j = i + 1; j < m; ++j) {
                if (j == b1 || j == b2) continue;
                opp[0] = rem[i];
                opp[1] = rem[j];
                HandRank r = evaluate_best(std::span<const Card>(opp.data(), 7));
                if (r < hero_rank) total += 1.0;
                else if (r == hero_rank) total += 0.5;
                ++outcomes;
            }
        }
    };

    if (board_need == 0) {
        run_opponents(-1, -1);
    } else if (board_need == 1) {
        for (int b = 0; b < m; ++b) run_opponents(b, -1);
    } else {
        for (int b1 = 0; b1 < m; ++b1)
            for (int b2 = b1 + 1; b2 < m; ++b2) run_opponents(b1, b2);
    }
    return total / static_cast<double>(outcomes);
}

} // namespace pokerlab
