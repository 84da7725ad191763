#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pokerlab/rng.hpp"

namespace pokerlab {

enum class Suit : uint8_t { clubs = 0, diamonds = 1, hearts = 2, spades = 3 };

inline constexpr char kRankChars[] = "23456789TJQKA";
inline constexpr char kSuitChars[] = "cdhs";

// One of the 52 cards. rank is 2..14 (ace high), index() is rank-major 0..51.
struct Card {
    uint8_t rank = 2; // 2..14
    Suit suit = Suit::clubs;

    constexpr Card() = default;
    constexpr Card(int r, Suit s) : rank(static_cast<uint8_t>(r)), suit(s) {}

    constexpr int rank_index() const { return rank - 2; } // 0..12
    constexpr int index() const { return rank_index() * 4 + static_cast<int>(suit); }

    static constexpr Card from_index(int idx) {
        return Card(idx / 4 + 2, static_cast<Suit>(idx % 4));
    }

    std::string to_string() const {
        return {kRankChars[rank_index()], kSuitChars[static_cast<int>(suit)]};
    }

    static std::optional<Card> parse(std::string_view text) {
        if (text.size() != 2) return std::nullopt;
        const char* r = std::char_traits<char>::find(kRankChars, 13, text[0]);
        const char* s = std::char_traits<char>::find(kSuitChars, 4, text[1]);
        if (!r || !s) return std::nullopt;
        return Card(static_cast<int>(r - kRankChars) + 2,
                    static_cast<Suit>(s - kSuitChars));
    }

    friend constexpr bool operator==(Card a, Card b) {
        return a.rank == b.rank && a.suit == b.suit;
    }
    friend constexpr auto operator<=>(Card a, Card b) { return a.index() <=> b.index(); }
};

inline std::string cards_to_string(std::span<const Card> cards) {
    std::string out;
    for (Card c : cards) out += c.to_string();
    return out;
}

enum class HandCategory : uint8_t {
    high_card = 0,
    pair,
    two_pair,
    three_of_a_kind,
    straight,
    flush,
    full_house,
    four_of_a_kind,
    straight_flush,
};

inline constexpr const char* kHandCategoryNames[] = {
    "high_card",      "pair",           "two_pair",
    "three_of_a_kind", "straight",      "flush",
    "full_house",     "four_of_a_kind", "straight_flush",
};

inline const char* to_string(HandCategory c) {
    return kHandCategoryNames[static_cast<int>(c)];
}

// Strength of a 5-card hand: category, then kickers compared lexicographically.
// Kicker count is fixed per category (together they pin down the best 5 ranks):
// straight/straight_flush 1, quads/full_house 2, trips/two_pair 3, pair 4,
// flush/high_card 5.
struct HandRank {
    HandCategory category = HandCategory::high_card;
    std::array<uint8_t, 5> kicker_ranks{}; // ranks 2..14, descending significance
    uint8_t kicker_count = 0;

    std::span<const uint8_t> kickers() const { return {kicker_ranks.data(), kicker_count}; }

    // Packed so that bigger == stronger.
    uint32_t key() const {
        uint32_t k = static_cast<uint32_t>(category) << 20;
        for (int i = 0; i < 5; ++i) {
            uint32_t r = i < kicker_count ? kicker_ranks[i] : 0;
            k |= r << (16 - 4 * i);
        }
        return k;
    }

    friend bool operator==(const HandRank& a, const HandRank& b) { return a.key() == b.key(); }
    friend std::strong_ordering operator<=>(const HandRank& a, const HandRank& b) {
        return a.key() <=> b.key();
    }
};

inline std::strong_ordering compare(const HandRank& a, const HandRank& b) { return a <=> b; }

namespace detail {

// Highest straight top rank-index in a 13-bit rank mask, or -1. Wheel (A2345)
// counts with top index 3; ace is low only there.
inline int straight_high_index(uint32_t mask) {
    for (int hi = 12; hi >= 4; --hi) {
        if (((mask >> (hi - 4)) & 0x1Fu) == 0x1Fu) return hi;
    }
    constexpr uint32_t wheel = (1u << 12) | 0xFu;
    if ((mask & wheel) == wheel) return 3;
    return -1;
}

inline HandRank make_rank(HandCategory cat, std::initializer_list<int> kicker_indices) {
    HandRank hr;
    hr.category = cat;
    hr.kicker_count = static_cast<uint8_t>(kicker_indices.size());
    int i = 0;
    for (int idx : kicker_indices) hr.kicker_ranks[i++] = static_cast<uint8_t>(idx + 2);
    return hr;
}

// Appends the n highest set bits of mask (as rank indices) to out.
inline void top_ranks(uint32_t mask, int n, std::array<int, 5>& out, int& count) {
    for (int r = 12; r >= 0 && count < n; --r) {
        if (mask & (1u << r)) out[count++] = r;
    }
}

} // namespace detail

// Best 5-card hand from 5..7 distinct cards. The workhorse behind showdown
// resolution, equity rollouts, and probe labels, so it is branchy bit-mask
// code rather than anything elegant.
inline HandRank evaluate_best(std::span<const Card> cards) {
    const size_t n = cards.size();
    if (n < 5 || n > 7) throw std::invalid_argument("evaluate_best: need 5..7 cards");
    uint64_t seen = 0;
    int rank_cnt[13] = {0};
    int suit_cnt[4] = {0};
    uint32_t suit_mask[4] = {0};
    uint32_t rank_mask = 0;
    for (Card c : cards) {
        uint64_t bit = 1ull << c.index();
        if (seen & bit) throw std::invalid_argument("evaluate_best: duplicate card " + c.to_string());
        seen |= bit;
        int r = c.rank_index(), s = static_cast<int>(c.suit);
        ++rank_cnt[r];
        ++suit_cnt[s];
        suit_mask[s] |= 1u << r;
        rank_mask |= 1u << r;
    }

    using detail::make_rank;

    int flush_suit = -1;
    for (int s = 0; s < 4; ++s) {
        if (suit_cnt[s] >= 5) flush_suit = s;
    }
    if (flush_suit >= 0) {
        if (int hi = detail::straight_high_index(suit_mask[flush_suit]); hi >= 0)
            return make_rank(HandCategory::straight_flush, {hi});
    }

    int quad = -1, trip_hi = -1, trip_lo = -1, pair_hi = -1, pair_lo = -1;
    for (int r = 12; r >= 0; --r) {
        switch (rank_cnt[r]) {
            case 4:
                if (quad < 0) quad = r;
                break;
            case 3:
                if (trip_hi < 0) trip_hi = r;
                else if (trip_lo < 0) trip_lo = r;
                break;
            case 2:
                // Keep only the two highest pairs; a third pair can still
                // surface as the two-pair kicker via rank_mask.
                if (pair_hi < 0) pair_hi = r;
                else if (pair_lo < 0) pair_lo = r;
                break;
            default:
                break;
        }
    }

    std::array<int, 5> ks{};
    int kc = 0;
    if (quad >= 0) {
        detail::top_ranks(rank_mask & ~(1u << quad), 1, ks, kc);
        return make_rank(HandCategory::four_of_a_kind, {quad, ks[0]});
    }
    if (trip_hi >= 0 && (trip_lo >= 0 || pair_hi >= 0)) {
        int pr = std::max(trip_lo, pair_hi);
        return make_rank(HandCategory::full_house, {trip_hi, pr});
    }
    if (flush_suit >= 0) {
        detail::top_ranks(suit_mask[flush_suit], 5, ks, kc);
        return make_rank(HandCategory::flush, {ks[0], ks[1], ks[2], ks[3], ks[4]});
    }
    if (int hi = detail::straight_high_index(rank_mask); hi >= 0)
        return make_rank(HandCategory::straight, {hi});
    if (trip_hi >= 0) {
        detail::top_ranks(rank_mask & ~(1u << trip_hi), 2, ks, kc);
        return make_rank(HandCategory::three_of_a_kind, {trip_hi, ks[0], ks[1]});
    }
    if (pair_hi >= 0 && pair_lo >= 0) {
        detail::top_ranks(rank_mask & ~(1u << pair_hi) & ~(1u << pair_lo), 1, ks, kc);
        return make_rank(HandCategory::two_pair, {pair_hi, pair_lo, ks[0]});
    }
    if (pair_hi >= 0) {
        detail::top_ranks(rank_mask & ~(1u << pair_hi), 3, ks, kc);
        return make_rank(HandCategory::pair, {pair_hi, ks[0], ks[1], ks[2]});
    }
    detail::top_ranks(rank_mask, 5, ks, kc);
    return make_rank(HandCategory::high_card, {ks[0], ks[1], ks[2], ks[3], ks[4]});
}

inline HandRank evaluate7(std::span<const Card> cards) {
    if (cards.size() != 7) throw std::invalid_argument("evaluate7: need exactly 7 cards");
    return evaluate_best(cards);
}

// A shuffled 52-card deck. deal() removes from the top; identical seed gives
// an identical order. Replay builds decks with a prescribed order instead.
class Deck {
public:
    explicit Deck(Rng& rng) {
        for (int i = 0; i < 52; ++i) cards_[i] = Card::from_index(i);
        rng.shuffle(std::span<Card>(cards_));
    }

    // Deck with a fixed prefix order (remaining cards follow in index order).
    static Deck stacked(std::span<const Card> prefix) {
        Deck d;
        uint64_t used = 0;
        size_t n = 0;
        for (Card c : prefix) {
            uint64_t bit = 1ull << c.index();
            if (used & bit) throw std::invalid_argument("Deck::stacked: duplicate card " + c.to_string());
            used |= bit;
            d.cards_[n++] = c;
        }
        for (int i = 0; i < 52; ++i) {
            if (!(used & (1ull << i))) d.cards_[n++] = Card::from_index(i);
        }
        return d;
    }

    Card deal() {
        if (next_ >= 52) throw std::out_of_range("Deck: overdraw");
        return cards_[next_++];
    }

    std::vector<Card> deal(size_t n) {
        if (n > remaining()) throw std::out_of_range("Deck: overdraw");
        std::vector<Card> out;
        out.reserve(n);
        for (size_t i = 0; i < n; ++i) out.push_back(deal());
        return out;
    }

    size_t remaining() const { return 52 - next_; }

private:
    Deck() = default;
    std::array<Card, 52> cards_{};
    size_t next_ = 0;
};

} // namespace pokerlab
