#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "pokerlab/engine.hpp"
#include "pokerlab/equity.hpp"
#include "pokerlab/rng.hpp"

namespace pokerlab {

// Per-player play style, drawn uniformly within each field's range from
// (seed, player). Probabilities live in [0,1], bet scales are pot multiples
// in [0.3, 1.5].
struct StyleVector {
    double raise_propensity = 0.5;  // lower raise threshold when high
    double tightness = 0.5;         // scales the pot-odds equity requirement
    double bluff_frequency = 0.1;   // chance to raise instead of folding
    double call_willingness = 0.5;  // discounts the call requirement
    double initial_bet_scale = 0.6; // opening bet, x pot
    double raise_scale = 0.8;       // raise increment, x pot
    double bet_continuation = 0.5;  // chance to keep barreling as last aggressor
};

struct StyleRange {
    const char* name;
    double lo, hi;
};

inline constexpr StyleRange kStyleRanges[7] = {
    {"raise_propensity", 0.0, 1.0}, {"tightness", 0.0, 1.0},
    {"bluff_frequency", 0.0, 1.0},  {"call_willingness", 0.0, 1.0},
    {"initial_bet_scale", 0.3, 1.5}, {"raise_scale", 0.3, 1.5},
    {"bet_continuation", 0.0, 1.0},
};

inline StyleVector init_style(uint64_t seed, int player) {
    Rng rng(derive_seed(seed, 0x5747u, static_cast<uint64_t>(player)));
    StyleVector s;
    double* fields[7] = {&s.raise_propensity, &s.tightness,       &s.bluff_frequency,
                         &s.call_willingness, &s.initial_bet_scale, &s.raise_scale,
                         &s.bet_continuation};
    for (int i = 0; i < 7; ++i) *fields[i] = rng.uniform(kStyleRanges[i].lo, kStyleRanges[i].hi);
    return s;
}

enum class Rationale : uint8_t { value, bluff, pot_odds_call, give_up };

struct AgentDecision {
    PlayerAction action;
    EquityEstimate equity_used;
    Rationale rationale = Rationale::pot_odds_call;
};

struct AgentConfig {
    int64_t equity_rollouts = 1000;
};

// Equity needed to continue against a bet: pot odds scaled up by tightness and
// down by call willingness, capped so a near-lock never folds.
inline double required_call_equity(const StyleVector& style, double pot_odds) {
    double req = pot_odds * (0.6 + 0.9 * style.tightness) * (1.3 - 0.6 * style.call_willingness);
    return std::min(req, 0.9);
}

inline bool would_continue_facing_bet(const StyleVector& style, double equity, double pot_odds) {
    return equity >= required_call_equity(style, pot_odds);
}

// Equity above which the agent bets/raises for value, relative to the 1/(k+1)
// baseline of a k-opponent pot.
inline double raise_equity_threshold(const StyleVector& style, int opponents) {
    return 1.0 / (opponents + 1) * (1.15 + 0.7 * (1.0 - style.raise_propensity));
}

// Myopic equity-driven decision for the seat to act. Always legal by
// construction: every emitted amount is clamped into the engine's menu.
inline AgentDecision decide(const GameState& s, const StyleVector& style,
                            const AgentConfig& cfg, Rng& rng) {
    const int seat = s.to_act();
    if (seat < 0) throw std::logic_error("decide: no seat to act");
    const PlayerState& me = s.players()[seat];
    const LegalActions la = s.legal_actions();

    int opponents = 0;
    for (int i = 0; i < kPlayers; ++i) {
        if (i != seat && s.players()[i].status != PlayerStatus::folded) ++opponents;
    }

    Rng eq_rng = rng.fork(0xE0);
    EquityEstimate eq = mc_equity(std::span<const Card>(me.hole.data(), 2), s.board(),
                                  opponents, cfg.equity_rollouts, eq_rng);

    const Chips pot = s.pot_total();
    const double pot_odds =
        la.call_cost > 0 ? static_cast<double>(la.call_cost) / static_cast<double>(pot + la.call_cost)
                         : 0.0;
    const double req = required_call_equity(style, pot_odds);
    const double raise_th = raise_equity_threshold(style, opponents);
    const bool facing_bet = la.call_cost > 0;

    auto clamped = [&](double target) {
        Chips t = static_cast<Chips>(std::llround(target));
        return std::clamp(t, la.min_raise_to, la.max_raise_to);
    };
    const Chips open_to = la.can_bet_raise ? clamped(style.initial_bet_scale * pot) : 0;
    const Chips raise_to =
        la.can_bet_raise ? clamped(s.current_bet() + style.raise_scale * pot) : 0;

    if (la.can_bet_raise && eq.equity >= std::max(raise_th, req)) {
        Chips to = facing_bet || s.street() == Street::preflop ? raise_to : open_to;
        return {PlayerAction::bet_raise(seat, to), eq, Rationale::value};
    }
    if (!facing_bet) {
        if (la.can_bet_raise && s.street() != Street::preflop &&
            s.prev_street_aggressor() == seat && eq.equity >= 0.5 * raise_th &&
            rng.uniform() < style.bet_continuation) {
            return {PlayerAction::bet_raise(seat, open_to), eq, Rationale::value};
        }
        return {PlayerAction::check_call(seat), eq, Rationale::pot_odds_call};
    }
    if (would_continue_facing_bet(style, eq.equity, pot_odds)) {
        return {PlayerAction::check_call(seat), eq, Rationale::pot_odds_call};
    }
    if (la.can_bet_raise && rng.uniform() < style.bluff_frequency) {
        return {PlayerAction::bet_raise(seat, raise_to), eq, Rationale::bluff};
    }
    return {PlayerAction::fold(seat), eq, Rationale::give_up};
}

} // namespace pokerlab
