#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pokerlab/cards.hpp"
#include "pokerlab/events.hpp"
#include "pokerlab/rng.hpp"

namespace pokerlab {

enum class Street : uint8_t { preflop = 0, flop, turn, river, showdown };

inline constexpr const char* kStreetNames[] = {"preflop", "flop", "turn", "river", "showdown"};

enum class PlayerStatus : uint8_t { active, folded, all_in };

enum class ActionKind : uint8_t { fold, check_call, bet_raise, show };

struct PlayerAction {
    int actor = -1; // seat index 0..5
    ActionKind kind = ActionKind::fold;
    Chips amount = 0; // bet_raise only: the total street commitment raised to
    std::array<Card, 2> cards{};

    static PlayerAction fold(int seat) { return {seat, ActionKind::fold, 0, {}}; }
    static PlayerAction check_call(int seat) { return {seat, ActionKind::check_call, 0, {}}; }
    static PlayerAction bet_raise(int seat, Chips to) {
        return {seat, ActionKind::bet_raise, to, {}};
    }
};

struct IllegalAction : std::runtime_error {
    explicit IllegalAction(const std::string& rule) : std::runtime_error(rule) {}
};

// Action menu for the seat to act. Any amount in [min_raise_to, max_raise_to]
// is a legal bet_raise target; below-minimum sizes are legal only as the
// all-in boundary, which min_raise_to already collapses to.
struct LegalActions {
    bool can_fold = false;
    bool can_check_call = false;
    bool can_bet_raise = false;
    Chips call_cost = 0;
    Chips min_raise_to = 0;
    Chips max_raise_to = 0;
};

struct Pot {
    Chips amount = 0;
    uint32_t eligible_mask = 0; // bit i set = seat i can win this pot

    bool eligible(int seat) const { return (eligible_mask >> seat) & 1u; }
};

struct PlayerState {
    Chips stack = 0;
    std::array<Card, 2> hole{};
    PlayerStatus status = PlayerStatus::active;
    Chips street_wager = 0; // chips in front this street
    Chips contributed = 0;  // total chips put in this hand (net of refunds)
    bool acted = false;     // has acted since the last raise-free reset this street
};

// Six-player No-Limit Hold'em hand as an immutable value: apply() returns the
// successor state and appends to the event log. Board cards come off the
// state's own deck, so a stacked deck replays a recorded hand exactly.
//
// Betting rules: raise targets must add at least the last full raise increment
// unless all-in; a short all-in raise does not re-arm the minimum. Uncalled
// bet excess is refunded when a street closes. Open-folding is permitted.
class GameState {
public:
    static GameState new_hand(const HandMeta& meta, Rng& rng) {
        return GameState(meta, Deck(rng));
    }

    // Deck prefix must hold the cards in deal order (12 hole cards, then board).
    static GameState new_hand_stacked(const HandMeta& meta, std::span<const Card> deck_prefix) {
        return GameState(meta, Deck::stacked(deck_prefix));
    }

    Street street() const { return street_; }
    bool terminal() const { return terminal_; }
    int to_act() const { return to_act_; }
    int button() const { return meta_.button; }
    const HandMeta& meta() const { return meta_; }
    const std::array<PlayerState, kPlayers>& players() const { return players_; }
    const std::vector<Card>& board() const { return board_; }
    const std::vector<PhhEvent>& events() const { return events_; }
    Chips current_bet() const { return current_bet_; }
    Chips min_raise_increment() const { return min_raise_inc_; }
    int street_aggressor() const { return aggressor_; }
    int prev_street_aggressor() const { return prev_aggressor_; }
    const std::array<Chips, kPlayers>& winnings() const { return winnings_; }

    Chips pot_total() const {
        Chips t = pot_;
        for (const auto& p : players_) t += p.street_wager;
        return t;
    }

    int count_not_folded() const {
        int n = 0;
        for (const auto& p : players_) n += p.status != PlayerStatus::folded;
        return n;
    }

    // Layered pots from total contributions so far, smallest level first.
    std::vector<Pot> pots() const {
        std::vector<Chips> levels;
        for (const auto& p : players_) {
            if (p.contributed > 0) levels.push_back(p.contributed);
        }
        std::sort(levels.begin(), levels.end());
        levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

        std::vector<Pot> out;
        Chips prev = 0;
        for (Chips level : levels) {
            Pot pot;
            for (int i = 0; i < kPlayers; ++i) {
                const auto& p = players_[i];
                pot.amount += std::clamp(p.contributed, prev, level) - prev;
                if (p.status != PlayerStatus::folded && p.contributed >= level)
                    pot.eligible_mask |= 1u << i;
            }
            if (!out.empty() && out.back().eligible_mask == pot.eligible_mask)
                out.back().amount += pot.amount;
            else
                out.push_back(pot);
            prev = level;
        }
        return out;
    }

    LegalActions legal_actions() const {
        if (terminal_ || street_ == Street::showdown)
            throw std::logic_error("legal_actions: hand is over");
        const PlayerState& p = players_[to_act_];
        LegalActions la;
        la.can_fold = true;
        la.can_check_call = true;
        la.call_cost = std::min(current_bet_ - p.street_wager, p.stack);
        la.max_raise_to = p.street_wager + p.stack;
        la.can_bet_raise = la.max_raise_to > current_bet_;
        if (la.can_bet_raise)
            la.min_raise_to = std::min(current_bet_ + min_raise_inc_, la.max_raise_to);
        return la;
    }

    GameState apply(const PlayerAction& a) const {
        GameState s = *this;
        s.apply_in_place(a);
        return s;
    }

private:
    GameState(const HandMeta& meta, Deck deck) : meta_(meta), deck_(std::move(deck)) {
        for (Chips st : meta.stacks) {
            if (st <= 0) throw std::invalid_argument("new_hand: stacks must be positive");
        }
        if (meta.button < 0 || meta.button >= kPlayers)
            throw std::invalid_argument("new_hand: button out of range");
        for (int i = 0; i < kPlayers; ++i) players_[i].stack = meta.stacks[i];
        for (int i = 0; i < kPlayers; ++i) {
            int seat = i; // deal in seat order; PHH events are per-seat anyway
            Card a = deck_.deal(), b = deck_.deal();
            players_[seat].hole = {a, b};
            events_.push_back(PhhEvent::deal_hole(seat + 1, a, b));
        }
        post_blind((meta.button + 1) % kPlayers, meta.small_blind);
        post_blind((meta.button + 2) % kPlayers, meta.big_blind);
        current_bet_ = meta.big_blind;
        min_raise_inc_ = meta.big_blind;
        to_act_ = next_actor_from((meta.button + 3) % kPlayers);
        if (to_act_ < 0 || round_closed()) resolve_street();
    }

    void post_blind(int seat, Chips amount) {
        PlayerState& p = players_[seat];
        Chips w = std::min(amount, p.stack);
        p.stack -= w;
        p.street_wager += w;
        p.contributed += w;
        if (p.stack == 0) p.status = PlayerStatus::all_in;
    }

    bool is_active(int seat) const { return players_[seat].status == PlayerStatus::active; }

    // First seat with a pending decision, scanning clockwise from `seat`; -1 if none.
    int next_actor_from(int seat) const {
        for (int k = 0; k < kPlayers; ++k) {
            int i = (seat + k) % kPlayers;
            const PlayerState& p = players_[i];
            if (p.status == PlayerStatus::active &&
                (!p.acted || p.street_wager != current_bet_))
                return i;
        }
        return -1;
    }

    bool round_closed() const {
        for (const auto& p : players_) {
            if (p.status == PlayerStatus::active && (!p.acted || p.street_wager != current_bet_))
                return false;
        }
        return true;
    }

    void apply_in_place(const PlayerAction& a) {
        if (terminal_ || street_ == Street::showdown)
            throw IllegalAction("hand is over");
        if (a.actor != to_act_)
            throw IllegalAction("not seat " + std::to_string(a.actor + 1) + "'s turn");
        PlayerState& p = players_[a.actor];

        switch (a.kind) {
            case ActionKind::fold: {
                p.status = PlayerStatus::folded;
                p.acted = true;
                events_.push_back(PhhEvent::fold(a.actor + 1));
                break;
            }
            case ActionKind::check_call: {
                Chips cost = std::min(current_bet_ - p.street_wager, p.stack);
                p.stack -= cost;
                p.street_wager += cost;
                p.contributed += cost;
                if (p.stack == 0) p.status = PlayerStatus::all_in;
                p.acted = true;
                events_.push_back(PhhEvent::check_call(a.actor + 1));
                break;
            }
            case ActionKind::bet_raise: {
                Chips max_to = p.street_wager + p.stack;
                if (max_to <= current_bet_)
                    throw IllegalAction("stack covers at most a call");
                if (a.amount <= current_bet_)
                    throw IllegalAction("raise target must exceed the current bet");
                if (a.amount > max_to)
                    throw IllegalAction("raise target exceeds stack");
                if (a.amount < current_bet_ + min_raise_inc_ && a.amount != max_to)
                    throw IllegalAction("raise below minimum and not all-in");
                Chips add = a.amount - p.street_wager;
                p.stack -= add;
                p.street_wager = a.amount;
                p.contributed += add;
                if (p.stack == 0) p.status = PlayerStatus::all_in;
                if (a.amount - current_bet_ >= min_raise_inc_)
                    min_raise_inc_ = a.amount - current_bet_;
                current_bet_ = a.amount;
                aggressor_ = a.actor;
                p.acted = true;
                events_.push_back(PhhEvent::bet_raise(a.actor + 1, a.amount));
                break;
            }
            case ActionKind::show:
                throw IllegalAction("showdown reveals are emitted by the engine");
        }

        if (count_not_folded() == 1) {
            finish_by_fold();
            return;
        }
        int next = next_actor_from((a.actor + 1) % kPlayers);
        if (next < 0 || round_closed()) {
            resolve_street();
        } else {
            to_act_ = next;
        }
    }

    void refund_uncalled() {
        int top = 0;
        for (int i = 1; i < kPlayers; ++i) {
            if (players_[i].street_wager > players_[top].street_wager) top = i;
        }
        Chips second = 0;
        for (int i = 0; i < kPlayers; ++i) {
            if (i != top) second = std::max(second, players_[i].street_wager);
        }
        PlayerState& p = players_[top];
        Chips refund = p.street_wager - second;
        if (refund > 0) {
            p.stack += refund;
            p.street_wager -= refund;
            p.contributed -= refund;
            if (p.status == PlayerStatus::all_in && p.stack > 0) p.status = PlayerStatus::active;
        }
    }

    void merge_wagers() {
        refund_uncalled();
        for (auto& p : players_) {
            pot_ += p.street_wager;
            p.street_wager = 0;
            p.acted = false;
        }
        current_bet_ = 0;
        min_raise_inc_ = meta_.big_blind;
        prev_aggressor_ = aggressor_;
        aggressor_ = -1;
    }

    void finish_by_fold() {
        merge_wagers();
        int winner = -1;
        for (int i = 0; i < kPlayers; ++i) {
            if (players_[i].status != PlayerStatus::folded) winner = i;
        }
        players_[winner].stack += pot_;
        winnings_[winner] += pot_;
        pot_ = 0;
        finish();
    }

    void deal_street(Street next) {
        int n = next == Street::flop ? 3 : 1;
        std::vector<Card> dealt = deck_.deal(static_cast<size_t>(n));
        board_.insert(board_.end(), dealt.begin(), dealt.end());
        events_.push_back(PhhEvent::deal_board(std::move(dealt)));
        street_ = next;
    }

    void resolve_street() {
        merge_wagers();
        int active = 0;
        for (int i = 0; i < kPlayers; ++i) active += is_active(i);
        if (active < 2) {
            // Fewer than two live bettors: run the board out and show down.
            while (street_ != Street::river)
                deal_street(static_cast<Street>(static_cast<int>(street_) + 1));
            showdown();
            return;
        }
        if (street_ == Street::river) {
            showdown();
            return;
        }
        deal_street(static_cast<Street>(static_cast<int>(street_) + 1));
        to_act_ = next_actor_from((meta_.button + 1) % kPlayers);
        if (to_act_ < 0) showdown(); // unreachable with active >= 2; defensive
    }

    void showdown() {
        street_ = Street::showdown;
        for (int i = 0; i < kPlayers; ++i) {
            const PlayerState& p = players_[i];
            if (p.status != PlayerStatus::folded)
                events_.push_back(PhhEvent::show(i + 1, p.hole[0], p.hole[1]));
        }
        std::array<HandRank, kPlayers> strength;
        std::array<Card, 7> seven;
        for (int i = 0; i < kPlayers; ++i) {
            if (players_[i].status == PlayerStatus::folded) continue;
            seven[0] = players_[i].hole[0];
            seven[1] = players_[i].hole[1];
            std::copy(board_.begin(), board_.end(), seven.begin() + 2);
            strength[i] = evaluate_best(std::span<const Card>(seven.data(), 2 + board_.size()));
        }
        for (const Pot& pot : pots()) {
            std::vector<int> winners;
            for (int i = 0; i < kPlayers; ++i) {
                if (!pot.eligible(i)) continue;
                if (winners.empty() || strength[i] > strength[winners.front()]) {
                    winners.assign(1, i);
                } else if (strength[i] == strength[winners.front()]) {
                    winners.push_back(i);
                }
            }
            if (winners.empty()) throw std::logic_error("showdown: pot with no eligible seat");
            Chips share = pot.amount / static_cast<Chips>(winners.size());
            Chips odd = pot.amount % static_cast<Chips>(winners.size());
            for (int w : winners) {
                players_[w].stack += share;
                winnings_[w] += share;
            }
            // Odd chips go to the earliest winners left of the button.
            for (int k = 1; k <= kPlayers && odd > 0; ++k) {
                int seat = (meta_.button + k) % kPlayers;
                if (std::find(winners.begin(), winners.end(), seat) != winners.end()) {
                    players_[seat].stack += 1;
                    winnings_[seat] += 1;
                    --odd;
                }
            }
        }
        pot_ = 0;
        finish();
    }

    void finish() {
        street_ = Street::showdown;
        terminal_ = true;
        to_act_ = -1;
    }

    HandMeta meta_;
    Deck deck_;
    std::array<PlayerState, kPlayers> players_{};
    std::vector<Card> board_;
    std::vector<PhhEvent> events_;
    std::array<Chips, kPlayers> winnings_{};
    Street street_ = Street::preflop;
    Chips pot_ = 0;
    Chips current_bet_ = 0;
    Chips min_raise_inc_ = 0;
    int to_act_ = -1;
    int aggressor_ = -1;
    int prev_aggressor_ = -1;
    bool terminal_ = false;
};

} // namespace pokerlab
