#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "pokerlab/agents.hpp"
#include "pokerlab/datagen.hpp"

using namespace pokerlab;

TEST_CASE("init_style is deterministic and in range", "[agents]") {
    StyleVector a = init_style(99, 2);
    StyleVector b = init_style(99, 2);
    REQUIRE(a.raise_propensity == b.raise_propensity);
    REQUIRE(a.raise_scale == b.raise_scale);

    std::set<double> firsts;
    for (int p = 0; p < kPlayers; ++p) firsts.insert(init_style(99, p).raise_propensity);
    REQUIRE(firsts.size() == kPlayers); // same seed, different players differ

    double sum = 0.0;
    double lo = 1e9, hi = -1e9;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        StyleVector s = init_style(derive_seed(1234, static_cast<uint64_t>(i)), 0);
        const double fields[7] = {s.raise_propensity, s.tightness,        s.bluff_frequency,
                                  s.call_willingness, s.initial_bet_scale, s.raise_scale,
                                  s.bet_continuation};
        for (int f = 0; f < 7; ++f) {
            REQUIRE(fields[f] >= kStyleRanges[f].lo);
            REQUIRE(fields[f] <= kStyleRanges[f].hi);
        }
        sum += s.raise_propensity;
        lo = std::min(lo, s.raise_propensity);
        hi = std::max(hi, s.raise_propensity);
    }
    REQUIRE(std::abs(sum / draws - 0.5) < 0.02); // mean near the range midpoint
    REQUIRE(lo < 0.01);
    REQUIRE(hi > 0.99);
}

TEST_CASE("tightness only shrinks the continue region", "[agents]") {
    StyleVector s;
    for (double pot_odds : {0.05, 0.15, 0.25, 0.4, 0.6, 0.8}) {
        for (double equity = 0.0; equity <= 1.0001; equity += 0.05) {
            bool prev = true;
            for (double tight = 0.0; tight <= 1.0001; tight += 0.1) {
                s.tightness = tight;
                bool cont = would_continue_facing_bet(s, equity, pot_odds);
                if (!prev) REQUIRE_FALSE(cont); // once folded, stays folded as tightness rises
                prev = cont;
            }
        }
    }
}

TEST_CASE("call requirement is capped so locks never fold", "[agents]") {
    StyleVector nitty;
    nitty.tightness = 1.0;
    nitty.call_willingness = 0.0;
    nitty.bluff_frequency = 0.0;
    REQUIRE(would_continue_facing_bet(nitty, 1.0, 0.95));
    for (double po = 0.0; po <= 0.99; po += 0.01)
        REQUIRE(required_call_equity(nitty, po) <= 0.9);
}

TEST_CASE("decide folds weak hands facing a bet when bluffing is off", "[agents]") {
    // Construct a state where seat 3 faces a large raise.
    Rng deal(2024);
    GameState s = GameState::new_hand(HandMeta{}, deal);
    s = s.apply(PlayerAction::bet_raise(2, 2000));
    REQUIRE(s.to_act() == 3);

    StyleVector tight;
    tight.tightness = 1.0;
    tight.call_willingness = 0.0;
    tight.bluff_frequency = 0.0;
    tight.raise_propensity = 0.0;

    // Find a seed where the dealt hand is weak enough to be below the bar,
    // then the decision must be a fold.
    Rng drng(55);
    AgentDecision d = decide(s, tight, AgentConfig{400}, drng);
    double po = 2000.0 / (2000.0 + s.pot_total());
    if (d.equity_used.equity < required_call_equity(tight, po)) {
        REQUIRE(d.action.kind == ActionKind::fold);
        REQUIRE(d.rationale == Rationale::give_up);
    }

    // With bluff_frequency 1 the same spot never folds.
    StyleVector bluffy = tight;
    bluffy.bluff_frequency = 1.0;
    Rng drng2(55);
    AgentDecision d2 = decide(s, bluffy, AgentConfig{400}, drng2);
    REQUIRE(d2.action.kind != ActionKind::fold);
}

TEST_CASE("decide is deterministic given state, style, and rng", "[agents]") {
    Rng deal(2025);
    GameState s = GameState::new_hand(HandMeta{}, deal);
    StyleVector style = init_style(7, 3);
    Rng a(9), b(9);
    AgentDecision da = decide(s, style, AgentConfig{300}, a);
    AgentDecision db = decide(s, style, AgentConfig{300}, b);
    REQUIRE(da.action.kind == db.action.kind);
    REQUIRE(da.action.amount == db.action.amount);
    REQUIRE(da.equity_used.equity == db.equity_used.equity);
}

TEST_CASE("simulated hands only ever emit legal actions", "[agents]") {
    // decide() feeds the engine directly; apply throws if anything is off.
    for (uint64_t hand = 0; hand < 300; ++hand) {
        auto styles = styles_for_hand(31, static_cast<int64_t>(hand));
        PhhRecord rec = simulate_hand(HandMeta{}, styles, derive_seed(31, 0x4A4Du, hand), 60);
        REQUIRE(!rec.events.empty());
        auto replayed = replay(rec);
        INFO(serialize(rec));
        REQUIRE(replayed.ok());
        Chips sum = 0;
        for (const auto& p : replayed.value().players()) sum += p.stack;
        REQUIRE(sum == 60000);
    }
}

TEST_CASE("agent pool produces all four action kinds", "[agents]") {
    int folds = 0, calls = 0, raises = 0, shows = 0, showdowns = 0;
    const int hands = 400;
    for (uint64_t hand = 0; hand < hands; ++hand) {
        auto styles = styles_for_hand(77, static_cast<int64_t>(hand));
        PhhRecord rec = simulate_hand(HandMeta{}, styles, derive_seed(77, 0x4A4Du, hand), 60);
        bool sd = false;
        for (const auto& e : rec.events) {
            folds += e.kind == PhhEvent::Kind::fold;
            calls += e.kind == PhhEvent::Kind::check_call;
            raises += e.kind == PhhEvent::Kind::bet_raise;
            if (e.kind == PhhEvent::Kind::show) { shows += 1; sd = true; }
        }
        showdowns += sd;
    }
    INFO("folds=" << folds << " calls=" << calls << " raises=" << raises << " shows=" << shows
                  << " showdowns=" << showdowns);
    REQUIRE(folds > hands);        // plenty of folding
    REQUIRE(calls > hands / 2);
    REQUIRE(raises > hands / 4);
    REQUIRE(showdowns > hands / 20); // a reasonable share reach showdown
}
