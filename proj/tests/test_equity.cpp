#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "pokerlab/cards.hpp"
#include "pokerlab/equity.hpp"
#include "pokerlab/rng.hpp"

using namespace pokerlab;

namespace {

std::vector<Card> cards_from(std::initializer_list<const char*> names) {
    std::vector<Card> out;
    for (const char* n : names) out.push_back(*Card::parse(n));
    return out;
}

// Random disjoint (hole, board) with the given board size.
std::pair<std::vector<Card>, std::vector<Card>> random_spot(Rng& rng, int board_size) {
    std::array<Card, 52> deck{};
    for (int i = 0; i < 52; ++i) deck[i] = Card::from_index(i);
    rng.shuffle(std::span<Card>(deck));
    std::vector<Card> hole(deck.begin(), deck.begin() + 2);
    std::vector<Card> board(deck.begin() + 2, deck.begin() + 2 + board_size);
    return {hole, board};
}

} // namespace

TEST_CASE("nut hands have equity exactly 1", "[equity]") {
    auto hole = cards_from({"Ah", "Kh"});
    auto board = cards_from({"Qh", "Jh", "Th", "2c", "3d"});
    REQUIRE(exact_equity(hole, board) == 1.0);
    Rng rng(5);
    auto est = mc_equity(hole, board, 1, 2000, rng);
    REQUIRE(est.equity == 1.0);
    Rng rng2(5);
    auto est5 = mc_equity(hole, board, 5, 500, rng2);
    REQUIRE(est5.equity == 1.0);
}

TEST_CASE("input validation", "[equity]") {
    auto hole = cards_from({"Ah", "Kh"});
    Rng rng(6);
    REQUIRE_THROWS_AS(mc_equity(hole, cards_from({"Ah", "2c", "3c"}), 1, 10, rng),
                      std::invalid_argument); // collision with hole
    REQUIRE_THROWS_AS(mc_equity(hole, {}, 0, 10, rng), std::invalid_argument);
    REQUIRE_THROWS_AS(mc_equity(hole, {}, 6, 10, rng), std::invalid_argument);
    REQUIRE_THROWS_AS(mc_equity(hole, {}, 1, 0, rng), std::invalid_argument);
    REQUIRE_THROWS_AS(exact_equity(hole, {}), std::invalid_argument); // preflop
    REQUIRE_THROWS_AS(exact_equity(hole, cards_from({"2c", "3c", "4c"}), 1000),
                      std::domain_error); // over the enumeration cap
}

TEST_CASE("mc_equity is deterministic per seed", "[equity]") {
    auto hole = cards_from({"9c", "9d"});
    auto board = cards_from({"2h", "7s", "Jd"});
    Rng a(123), b(123), c(124);
    auto ea = mc_equity(hole, board, 2, 3000, a);
    auto eb = mc_equity(hole, board, 2, 3000, b);
    auto ec = mc_equity(hole, board, 2, 3000, c);
    REQUIRE(ea.equity == eb.equity);
    REQUIRE(ea.equity != ec.equity); // same spot, different stream
}

TEST_CASE("river exact equity equals a direct combo count", "[equity]") {
    Rng rng(777);
    for (int it = 0; it < 20; ++it) {
        auto [hole, board] = random_spot(rng, 5);
        // Direct count over all C(45,2)=990 opponent holes.
        std::vector<Card> rem;
        uint64_t used = 0;
        for (Card x : hole) used |= 1ull << x.index();
        for (Card x : board) used |= 1ull << x.index();
        for (int i = 0; i < 52; ++i)
            if (!(used >> i & 1)) rem.push_back(Card::from_index(i));
        std::vector<Card> hero = board;
        hero.insert(hero.end(), hole.begin(), hole.end());
        HandRank hr = evaluate_best(hero);
        int wins = 0, ties = 0, total = 0;
        for (size_t i = 0; i < rem.size(); ++i) {
            for (size_t j = i + 1; j < rem.size(); ++j) {
                std::vector<Card> opp = board;
                opp.push_back(rem[i]);
                opp.push_back(rem[j]);
                HandRank orank = evaluate_best(opp);
                wins += orank < hr;
                ties += orank == hr;
                ++total;
            }
        }
        REQUIRE(total == 990);
        double want = (wins + 0.5 * ties) / 990.0;
        REQUIRE(exact_equity(hole, board) == Catch::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("mc_equity converges to exact_equity on river spots", "[equity]") {
    Rng rng(778);
    int ok = 0;
    const int cases = 25;
    for (int it = 0; it < cases; ++it) {
        auto [hole, board] = random_spot(rng, 5);
        double exact = exact_equity(hole, board);
        Rng mc_rng(derive_seed(779, static_cast<uint64_t>(it)));
        auto est = mc_equity(hole, board, 1, 10000, mc_rng);
        ok += std::abs(est.equity - exact) < 0.02;
    }
    REQUIRE(ok == cases);
}

TEST_CASE("mc_equity converges on a flop spot at 1e5 rollouts", "[equity]") {
    auto hole = cards_from({"Ac", "Kd"});
    auto board = cards_from({"Kh", "7s", "2d"});
    double exact = exact_equity(hole, board);
    Rng rng(780);
    auto est = mc_equity(hole, board, 1, 100000, rng);
    REQUIRE(std::abs(est.equity - exact) < 0.01);
}

TEST_CASE("stderr estimate is near the empirical batch spread", "[equity]") {
    auto hole = cards_from({"8c", "8d"});
    auto board = cards_from({"2h", "7s", "Jd"});
    const int batches = 40;
    const int64_t n = 1000;
    std::vector<double> est(batches);
    double mean = 0.0, claimed = 0.0;
    for (int b = 0; b < batches; ++b) {
        Rng rng(derive_seed(781, static_cast<uint64_t>(b)));
        auto e = mc_equity(hole, board, 1, n, rng);
        est[static_cast<size_t>(b)] = e.equity;
        mean += e.equity;
        claimed += e.stderr_est;
    }
    mean /= batches;
    claimed /= batches;
    double var = 0.0;
    for (double e : est) var += (e - mean) * (e - mean);
    double empirical = std::sqrt(var / (batches - 1));
    REQUIRE(claimed < 2.0 * empirical);
    REQUIRE(empirical < 2.0 * claimed);
}

TEST_CASE("nut kicker never lowers river equity", "[equity]") {
    // Pair of aces, kicker swapped from a weak card to the best available.
    auto board = cards_from({"Ad", "7s", "2d", "9h", "4c"});
    auto weak = cards_from({"Ac", "3h"});
    auto nut = cards_from({"Ac", "Kh"});
    REQUIRE(exact_equity(nut, board) >= exact_equity(weak, board));

    // Fuzz: swap the low hole card for a higher one of the same suit. Only
    // spots where the made-hand category is unchanged are true kicker swaps.
    Rng rng(782);
    int checked = 0;
    for (int it = 0; it < 300 && checked < 12; ++it) {
        auto [hole, b] = random_spot(rng, 5);
        uint64_t used = 0;
        for (Card x : hole) used |= 1ull << x.index();
        for (Card x : b) used |= 1ull << x.index();
        Card low = hole[0].rank < hole[1].rank ? hole[0] : hole[1];
        Card high = hole[0].rank < hole[1].rank ? hole[1] : hole[0];
        Card swap = low;
        for (int r = 14; r > low.rank; --r) {
            Card cand(r, low.suit);
            if (!(used >> cand.index() & 1)) { swap = cand; break; }
        }
        if (swap == low) continue;
        std::vector<Card> seven_old{high, low}, seven_new{high, swap};
        seven_old.insert(seven_old.end(), b.begin(), b.end());
        seven_new.insert(seven_new.end(), b.begin(), b.end());
        if (evaluate_best(seven_old).category != evaluate_best(seven_new).category) continue;
        std::vector<Card> improved{high, swap};
        std::vector<Card> original{high, low};
        REQUIRE(exact_equity(improved, b) >= exact_equity(original, b) - 1e-12);
        ++checked;
    }
    REQUIRE(checked >= 12);
}

TEST_CASE("full-deal fairness: mean equity is 1/(k+1)", "[equity]") {
    for (int k : {1, 3, 5}) {
        const int deals = 400;
        const int64_t rollouts = 400;
        double sum = 0.0, sumsq = 0.0;
        for (int d = 0; d < deals; ++d) {
            Rng deal_rng(derive_seed(783, static_cast<uint64_t>(k), static_cast<uint64_t>(d)));
            auto [hole, board] = random_spot(deal_rng, 3);
            Rng mc_rng(derive_seed(784, static_cast<uint64_t>(k), static_cast<uint64_t>(d)));
            double e = mc_equity(hole, board, k, rollouts, mc_rng).equity;
            sum += e;
            sumsq += e * e;
        }
        double mean = sum / deals;
        double sd = std::sqrt((sumsq / deals - mean * mean) / (deals - 1));
        REQUIRE(std::abs(mean - 1.0 / (k + 1)) < 3.0 * sd);
    }
}
