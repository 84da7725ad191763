#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pokerlab/cards.hpp"

namespace pokerlab {

inline constexpr int kPlayers = 6;

using Chips = int64_t;

// Table setup a hand is played under. Not part of the event grammar; corpus
// manifests carry it once for the whole file.
struct HandMeta {
    std::array<Chips, kPlayers> stacks{10000, 10000, 10000, 10000, 10000, 10000};
    Chips small_blind = 50;
    Chips big_blind = 100;
    int button = kPlayers - 1; // seat index; p1 posts the small blind

    friend bool operator==(const HandMeta&, const HandMeta&) = default;
};

// One line of a hand history. player is 1-based (p1..p6), 0 for board deals.
struct PhhEvent {
    enum class Kind : uint8_t { deal_hole, deal_board, fold, check_call, bet_raise, show };

    Kind kind = Kind::fold;
    int player = 0;
    Chips amount = 0;
    std::vector<Card> cards;

    static PhhEvent deal_hole(int player, Card a, Card b) {
        return {Kind::deal_hole, player, 0, {a, b}};
    }
    static PhhEvent deal_board(std::vector<Card> cards) {
        return {Kind::deal_board, 0, 0, std::move(cards)};
    }
    static PhhEvent fold(int player) { return {Kind::fold, player, 0, {}}; }
    static PhhEvent check_call(int player) { return {Kind::check_call, player, 0, {}}; }
    static PhhEvent bet_raise(int player, Chips to) { return {Kind::bet_raise, player, to, {}}; }
    static PhhEvent show(int player, Card a, Card b) {
        return {Kind::show, player, 0, {a, b}};
    }

    friend bool operator==(const PhhEvent&, const PhhEvent&) = default;
};

// A complete hand: replaying `events` from `meta` through the engine is legal
// by construction for anything the generator or parser hands out.
struct PhhRecord {
    HandMeta meta;
    std::vector<PhhEvent> events;

    friend bool operator==(const PhhRecord&, const PhhRecord&) = default;
};

} // namespace pokerlab
