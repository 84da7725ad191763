#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "pokerlab/cards.hpp"
#include "pokerlab/rng.hpp"

using namespace pokerlab;

namespace {

std::vector<Card> cards_from(std::initializer_list<const char*> names) {
    std::vector<Card> out;
    for (const char* n : names) out.push_back(*Card::parse(n));
    return out;
}

std::vector<Card> random_distinct(Rng& rng, int n) {
    std::array<Card, 52> deck{};
    for (int i = 0; i < 52; ++i) deck[i] = Card::from_index(i);
    for (int i = 0; i < n; ++i) {
        int j = i + static_cast<int>(rng.below(static_cast<uint64_t>(52 - i)));
        std::swap(deck[i], deck[j]);
    }
    return {deck.begin(), deck.begin() + n};
}

bool matches_oracle(const HandRank& got, const oracle::Hand5& want) {
    if (static_cast<int>(got.category) != want.category) return false;
    if (got.kickers().size() != want.ranks.size()) return false;
    for (size_t i = 0; i < want.ranks.size(); ++i) {
        if (got.kickers()[i] != want.ranks[i]) return false;
    }
    return true;
}

} // namespace

TEST_CASE("card text round trip covers all 52", "[cards]") {
    std::set<std::string> texts;
    for (int i = 0; i < 52; ++i) {
        Card c = Card::from_index(i);
        std::string t = c.to_string();
        REQUIRE(t.size() == 2);
        auto back = Card::parse(t);
        REQUIRE(back.has_value());
        REQUIRE(*back == c);
        texts.insert(t);
    }
    REQUIRE(texts.size() == 52);
    REQUIRE(Card::parse("Kh")->rank == 13);
    REQUIRE(Card::parse("Kh")->suit == Suit::hearts);
    REQUIRE_FALSE(Card::parse("1h").has_value());
    REQUIRE_FALSE(Card::parse("Kx").has_value());
    REQUIRE_FALSE(Card::parse("K").has_value());
}

TEST_CASE("evaluate7 fixed hands", "[cards]") {
    auto royal = cards_from({"Ah", "Kh", "Qh", "Jh", "Th", "2c", "3d"});
    HandRank r = evaluate7(royal);
    REQUIRE(r.category == HandCategory::straight_flush);
    REQUIRE(r.kickers()[0] == 14);

    auto quads = cards_from({"2c", "2d", "2h", "2s", "9c", "9d", "5h"});
    r = evaluate7(quads);
    REQUIRE(r.category == HandCategory::four_of_a_kind);
    REQUIRE(r.kickers()[0] == 2);
    REQUIRE(r.kickers()[1] == 9);

    auto wheel = cards_from({"Ah", "2c", "3d", "4s", "5h", "9c", "Jd"});
    r = evaluate7(wheel);
    REQUIRE(r.category == HandCategory::straight);
    REQUIRE(r.kickers()[0] == 5);

    REQUIRE_THROWS_AS(evaluate7(cards_from({"Ah", "Ah", "Qh", "Jh", "Th", "2c", "3d"})),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(evaluate7(cards_from({"Ah", "Kh", "Qh"})), std::invalid_argument);
}

TEST_CASE("evaluate7 agrees with best-of-21 oracle on random draws", "[cards]") {
    Rng rng(7101);
    for (int it = 0; it < 20000; ++it) {
        auto cards = random_distinct(rng, 7);
        HandRank got = evaluate_best(cards);
        oracle::Hand5 want = oracle::best_hand(cards);
        INFO(cards_to_string(cards));
        REQUIRE(matches_oracle(got, want));
    }
}

TEST_CASE("evaluate_best handles 5 and 6 card inputs", "[cards]") {
    Rng rng(7102);
    for (int n : {5, 6}) {
        for (int it = 0; it < 3000; ++it) {
            auto cards = random_distinct(rng, n);
            HandRank got = evaluate_best(cards);
            oracle::Hand5 want = oracle::best_hand(cards);
            INFO(cards_to_string(cards));
            REQUIRE(matches_oracle(got, want));
        }
    }
}

TEST_CASE("evaluate7 is permutation invariant", "[cards]") {
    Rng rng(7103);
    for (int it = 0; it < 500; ++it) {
        auto cards = random_distinct(rng, 7);
        HandRank base = evaluate7(cards);
        for (int k = 0; k < 5; ++k) {
            rng.shuffle(std::span<Card>(cards));
            REQUIRE(evaluate7(cards) == base);
        }
    }
}

TEST_CASE("compare basics and oracle agreement", "[cards]") {
    auto flush = evaluate_best(cards_from({"2h", "5h", "9h", "Jh", "Kh"}));
    auto straight = evaluate_best(cards_from({"4c", "5d", "6h", "7s", "8c"}));
    REQUIRE(compare(flush, straight) == std::strong_ordering::greater);

    auto a = evaluate_best(cards_from({"Kh", "Kd", "9c", "5s", "2h"}));
    auto b = evaluate_best(cards_from({"Ks", "Kc", "9d", "5h", "2c"}));
    REQUIRE(compare(a, b) == std::strong_ordering::equal);

    Rng rng(7104);
    for (int it = 0; it < 4000; ++it) {
        auto x = random_distinct(rng, 7);
        auto y = random_distinct(rng, 7);
        auto lib = compare(evaluate_best(x), evaluate_best(y));
        auto ox = oracle::best_hand(x);
        auto oy = oracle::best_hand(y);
        if (ox < oy) REQUIRE(lib == std::strong_ordering::less);
        else if (oy < ox) REQUIRE(lib == std::strong_ordering::greater);
        else REQUIRE(lib == std::strong_ordering::equal);
    }
}

TEST_CASE("compare is a strict weak ordering on random triples", "[cards]") {
    Rng rng(7105);
    for (int it = 0; it < 2000; ++it) {
        auto a = evaluate_best(random_distinct(rng, 7));
        auto b = evaluate_best(random_distinct(rng, 7));
        auto c = evaluate_best(random_distinct(rng, 7));
        REQUIRE((a < b) == (b > a));
        REQUIRE_FALSE(a < a);
        if (a < b && b < c) REQUIRE(a < c);
        if (a == b && b == c) REQUIRE(a == c);
    }
}

TEST_CASE("deck deals distinct cards and is seed deterministic", "[cards]") {
    Rng rng1(42), rng2(42), rng3(43);
    Deck d1(rng1), d2(rng2), d3(rng3);
    auto all1 = d1.deal(52);
    auto all2 = d2.deal(52);
    std::set<Card> unique(all1.begin(), all1.end());
    REQUIRE(unique.size() == 52);
    REQUIRE(all1 == all2);
    auto all3 = d3.deal(52);
    REQUIRE(all1 != all3);
    REQUIRE_THROWS_AS(d1.deal(), std::out_of_range);

    Deck d4(rng1);
    d4.deal(50);
    REQUIRE_THROWS_AS(d4.deal(3), std::out_of_range);
    REQUIRE(d4.deal(2).size() == 2);
}

TEST_CASE("first dealt card is uniform (chi-square, p=0.001)", "[cards]") {
    const int deals = 10000;
    std::array<int, 52> counts{};
    for (int i = 0; i < deals; ++i) {
        Rng rng(derive_seed(90001, static_cast<uint64_t>(i)));
        Deck d(rng);
        counts[static_cast<size_t>(d.deal().index())]++;
    }
    double expected = deals / 52.0;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // Upper 0.001 quantile of chi-square with 51 dof.
    REQUIRE(chi2 < 88.0);
}

TEST_CASE("stacked deck preserves prefix and rejects duplicates", "[cards]") {
    auto prefix = cards_from({"Ah", "Kd", "2c"});
    Deck d = Deck::stacked(prefix);
    REQUIRE(d.deal() == *Card::parse("Ah"));
    REQUIRE(d.deal() == *Card::parse("Kd"));
    REQUIRE(d.deal() == *Card::parse("2c"));
    auto rest = d.deal(49);
    std::set<Card> unique(rest.begin(), rest.end());
    REQUIRE(unique.size() == 49);
    REQUIRE_THROWS_AS(Deck::stacked(cards_from({"Ah", "Ah"})), std::invalid_argument);
}
