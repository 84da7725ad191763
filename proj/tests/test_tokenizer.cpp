#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <map>

#include "pokerlab/datagen.hpp"
#include "pokerlab/tokenizer.hpp"

using namespace pokerlab;

namespace {

PhhRecord generated_hand(uint64_t i) {
    auto styles = styles_for_hand(801, static_cast<int64_t>(i));
    return simulate_hand(HandMeta{}, styles, derive_seed(801, 0x4A4Du, i), 50);
}

} // namespace

TEST_CASE("vocabulary is a bijection with reserved specials", "[tokenizer]") {
    Vocab v = Vocab::standard();
    REQUIRE(v.size() == 80);
    REQUIRE(v.id("<PAD>") == Vocab::kPad);
    REQUIRE(v.id("<BOS>") == Vocab::kBos);
    REQUIRE(v.id("<EOS>") == Vocab::kEos);
    REQUIRE(v.id("<GAP>") == Vocab::kGap);
    REQUIRE(v.id("<ANS>") == Vocab::kAns);
    std::map<int, std::string> seen;
    for (int i = 0; i < v.size(); ++i) {
        REQUIRE(v.id(v.token(i)) == i);
        seen[i] = v.token(i);
    }
    REQUIRE(seen.size() == 80);
    REQUIRE_THROWS_AS(v.id("zz"), std::out_of_range);
    REQUIRE_THROWS_AS(v.token(80), std::out_of_range);

    // closed over generator output: players, actions, cards, digits
    for (int p = 1; p <= 6; ++p) REQUIRE_NOTHROW(v.id("p" + std::to_string(p)));
    for (const char* a : {"f", "cc", "cbr", "sm", "d", "dh", "db"}) REQUIRE_NOTHROW(v.id(a));
    for (int i = 0; i < 52; ++i) REQUIRE_NOTHROW(v.id(Card::from_index(i).to_string()));
    for (int d = 0; d <= 9; ++d) REQUIRE_NOTHROW(v.id(std::to_string(d)));

    REQUIRE_FALSE(v.maskable(Vocab::kBos));
    REQUIRE_FALSE(v.maskable(v.id("d")));
    REQUIRE_FALSE(v.maskable(v.id("dh")));
    REQUIRE(v.maskable(v.id("p3")));
    REQUIRE(v.maskable(v.id("Kh")));
    REQUIRE(v.maskable(v.id("7")));
    REQUIRE(v.maskable(v.id("cc")));
}

TEST_CASE("vocab save/load round trip", "[tokenizer]") {
    namespace fs = std::filesystem;
    Vocab v = Vocab::standard();
    fs::path p = fs::temp_directory_path() / "pokerlab_vocab.json";
    v.save(p);
    Vocab w = Vocab::load(p);
    REQUIRE(w.size() == v.size());
    for (int i = 0; i < v.size(); ++i) {
        REQUIRE(w.token(i) == v.token(i));
        REQUIRE(w.kind(i) == v.kind(i));
    }
    fs::remove(p);
}

TEST_CASE("encode basics", "[tokenizer]") {
    Vocab v = Vocab::standard();
    PhhRecord rec;
    rec.events.push_back(PhhEvent::fold(3));
    auto ids = encode(v, rec);
    REQUIRE(ids == std::vector<int32_t>{Vocab::kBos, v.id("p3"), v.id("f"), Vocab::kEos});

    PhhRecord empty;
    REQUIRE(encode(v, empty) == std::vector<int32_t>{Vocab::kBos, Vocab::kEos});

    // out-of-vocabulary tokens name the offender
    Vocab coin = Vocab::coin();
    try {
        encode(coin, rec);
        FAIL("expected out_of_range");
    } catch (const std::out_of_range& ex) {
        REQUIRE(std::string(ex.what()).find("p") != std::string::npos);
    }
}

TEST_CASE("encode matches the serialized token stream on generated hands", "[tokenizer]") {
    Vocab v = Vocab::standard();
    for (uint64_t i = 0; i < 400; ++i) {
        PhhRecord rec = generated_hand(i);
        auto enc = encode_indexed(v, rec);
        REQUIRE(decode(v, enc.ids) == token_stream(rec));
        REQUIRE(enc.ids.size() == enc.event_index.size());
        REQUIRE(enc.event_index.front() == -1);
        REQUIRE(enc.event_index.back() == -1);
        // provenance is monotone over events
        int prev = -1;
        for (size_t k = 1; k + 1 < enc.ids.size(); ++k) {
            REQUIRE(enc.event_index[k] >= prev);
            prev = enc.event_index[k];
        }
    }
}

TEST_CASE("amount tokens", "[tokenizer]") {
    REQUIRE(amount_tokens(0) == std::vector<std::string>{"0"});
    REQUIRE(amount_tokens(300) == std::vector<std::string>{"3", "0", "0"});
    REQUIRE_THROWS_AS(amount_tokens(-1), std::invalid_argument);
    Rng rng(555);
    for (int i = 0; i < 2000; ++i) {
        Chips c = static_cast<Chips>(rng.below(1000000));
        auto toks = amount_tokens(c);
        REQUIRE(amount_from_tokens(toks) == c);
    }
}

TEST_CASE("mask_gaps structure on the minimal example", "[tokenizer]") {
    Vocab v = Vocab::standard();
    int32_t a = v.id("Kh"), b = v.id("Qs"), c = v.id("2c");
    std::vector<int32_t> ids{a, b, c};

    // find a seed that masks exactly position 1 (one gap: ceil(0.2*3) = 1)
    bool found = false;
    for (uint64_t seed = 0; seed < 64 && !found; ++seed) {
        Rng rng(seed);
        TokenizedExample ex = mask_gaps(v, ids, 0.2, rng);
        if (ex.gap_positions == std::vector<int32_t>{1}) {
            REQUIRE(ex.input_ids == std::vector<int32_t>{a, Vocab::kGap, c, Vocab::kAns, b});
            REQUIRE(ex.loss_mask == std::vector<uint8_t>{0, 0, 0, 0, 1});
            REQUIRE(ex.target_ids == ex.input_ids);
            found = true;
        }
    }
    REQUIRE(found);

    // fraction 0: no gaps, <ANS> appended, mask all false
    Rng rng(9);
    TokenizedExample ex0 = mask_gaps(v, ids, 0.0, rng);
    REQUIRE(ex0.input_ids == std::vector<int32_t>{a, b, c, Vocab::kAns});
    REQUIRE(ex0.gap_positions.empty());
    for (uint8_t m : ex0.loss_mask) REQUIRE(m == 0);
}

TEST_CASE("mask_gaps invariants on generated hands", "[tokenizer]") {
    Vocab v = Vocab::standard();
    for (uint64_t i = 0; i < 300; ++i) {
        PhhRecord rec = generated_hand(i);
        auto ids = encode(v, rec);
        Rng rng(derive_seed(31, i));
        TokenizedExample ex = mask_gaps(v, ids, 0.15, rng);

        // same inputs, same seed -> identical example
        Rng rng2(derive_seed(31, i));
        REQUIRE(mask_gaps(v, ids, 0.15, rng2) == ex);

        // inversion recovers the original
        REQUIRE(invert_mask(ex) == ids);

        // mask only at moved-token positions, strictly after <ANS>
        size_t ans = 0;
        while (ex.input_ids[ans] != Vocab::kAns) ++ans;
        int64_t n_masked = 0;
        for (size_t t = 0; t < ex.loss_mask.size(); ++t) {
            if (ex.loss_mask[t]) {
                REQUIRE(t > ans);
                ++n_masked;
            }
        }
        REQUIRE(n_masked == static_cast<int64_t>(ex.gap_positions.size()));
        REQUIRE(n_masked == gap_count(v, ids, 0.15));

        // masking is content preserving: non-gap inputs plus moved tokens
        // reassemble the original multiset
        std::map<int32_t, int> lhs, rhs;
        for (size_t t = 0; t < ans; ++t)
            if (ex.input_ids[t] != Vocab::kGap) lhs[ex.input_ids[t]]++;
        for (size_t t = ans + 1; t < ex.input_ids.size(); ++t) lhs[ex.input_ids[t]]++;
        for (int32_t id : ids) rhs[id]++;
        REQUIRE(lhs == rhs);

        // gaps never land on specials or structural tokens
        for (int32_t pos : ex.gap_positions) REQUIRE(v.maskable(ids[static_cast<size_t>(pos)]));
    }
}

TEST_CASE("mask_gaps rejects bad fractions", "[tokenizer]") {
    Vocab v = Vocab::standard();
    std::vector<int32_t> ids{v.id("Kh")};
    Rng rng(1);
    REQUIRE_THROWS_AS(mask_gaps(v, ids, 1.0, rng), std::invalid_argument);
    REQUIRE_THROWS_AS(mask_gaps(v, ids, -0.1, rng), std::invalid_argument);
}

TEST_CASE("tokenized examples survive the JSONL round trip", "[tokenizer]") {
    namespace fs = std::filesystem;
    Vocab v = Vocab::standard();
    std::vector<TokenizedExample> examples;
    for (uint64_t i = 0; i < 50; ++i) {
        auto ids = encode(v, generated_hand(i));
        Rng rng(derive_seed(77, i));
        examples.push_back(mask_gaps(v, ids, 0.15, rng));
    }
    fs::path p = fs::temp_directory_path() / "pokerlab_examples.jsonl";
    write_examples_jsonl(p, examples);
    auto back = read_examples_jsonl(p);
    REQUIRE(back == examples);
    fs::remove(p);
}
