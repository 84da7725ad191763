#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pokerlab/engine.hpp"
#include "pokerlab/events.hpp"

namespace pokerlab {

// Minimal expected-type; the parser reports failures as values so arbitrary
// byte input can never throw out of it.
template <typename T, typename E>
class Expected {
public:
    Expected(T value) : v_(std::move(value)) {}
    Expected(E error) : v_(std::move(error)) {}
    bool ok() const { return std::holds_alternative<T>(v_); }
    explicit operator bool() const { return ok(); }
    T& value() { return std::get<T>(v_); }
    const T& value() const { return std::get<T>(v_); }
    E& error() { return std::get<E>(v_); }
    const E& error() const { return std::get<E>(v_); }

private:
    std::variant<T, E> v_;
};

struct PhhError {
    enum class Kind { syntax, semantic };
    Kind kind = Kind::syntax;
    int line = 0; // 1-based
    int col = 0;  // 1-based; 0 when not column-specific
    std::string message;

    std::string to_string() const {
        std::ostringstream os;
        os << (kind == Kind::syntax ? "syntax" : "semantic") << " error at line " << line;
        if (col > 0) os << ", col " << col;
        os << ": " << message;
        return os.str();
    }
};

// --- serialization ---------------------------------------------------------

inline std::string serialize_event(const PhhEvent& e) {
    switch (e.kind) {
        case PhhEvent::Kind::deal_hole:
            return "d dh p" + std::to_string(e.player) + " " + cards_to_string(e.cards);
        case PhhEvent::Kind::deal_board:
            return "d db " + cards_to_string(e.cards);
        case PhhEvent::Kind::fold:
            return "p" + std::to_string(e.player) + " f";
        case PhhEvent::Kind::check_call:
            return "p" + std::to_string(e.player) + " cc";
        case PhhEvent::Kind::bet_raise:
            return "p" + std::to_string(e.player) + " cbr " + std::to_string(e.amount);
        case PhhEvent::Kind::show:
            return "p" + std::to_string(e.player) + " sm " + cards_to_string(e.cards);
    }
    return {};
}

// One event per line, LF-terminated.
inline std::string serialize(const PhhRecord& record) {
    std::string out;
    for (const PhhEvent& e : record.events) {
        out += serialize_event(e);
        out += '\n';
    }
    return out;
}

// --- parsing ---------------------------------------------------------------

namespace detail {

struct Token {
    std::string_view text;
    int col; // 1-based
};

inline std::optional<std::vector<Card>> parse_cards(std::string_view text) {
    if (text.empty() || text.size() % 2 != 0) return std::nullopt;
    std::vector<Card> cards;
    cards.reserve(text.size() / 2);
    for (size_t i = 0; i < text.size(); i += 2) {
        auto c = Card::parse(text.substr(i, 2));
        if (!c) return std::nullopt;
        cards.push_back(*c);
    }
    return cards;
}

inline std::optional<int> parse_player_token(std::string_view t) {
    if (t.size() < 2 || t[0] != 'p') return std::nullopt;
    int value = 0;
    auto [p, ec] = std::from_chars(t.data() + 1, t.data() + t.size(), value);
    if (ec != std::errc() || p != t.data() + t.size() || value < 1) return std::nullopt;
    return value;
}

} // namespace detail

// Replays a record's actions through the engine on a deck stacked with the
// recorded deals. Success means the record is byte-for-byte a legal engine
// trajectory (deals, actions, and showdown reveals all included).
inline Expected<GameState, PhhError> replay(const PhhRecord& record,
                                            const std::vector<int>* event_lines = nullptr) {
    auto line_of = [&](size_t event_idx) {
        return event_lines && event_idx < event_lines->size()
                   ? (*event_lines)[event_idx]
                   : static_cast<int>(event_idx) + 1;
    };
    auto semantic = [&](size_t event_idx, std::string msg) {
        return PhhError{PhhError::Kind::semantic, line_of(event_idx), 0, std::move(msg)};
    };

    const auto& ev = record.events;
    if (ev.empty())
        return semantic(0, "empty record cannot be replayed");
    std::vector<Card> deck_prefix;
    for (int i = 0; i < kPlayers; ++i) {
        if (i >= static_cast<int>(ev.size()) || ev[i].kind != PhhEvent::Kind::deal_hole ||
            ev[i].player != i + 1) {
            return semantic(std::min<size_t>(i, ev.size() - 1),
                            "hand must open with hole deals for p1..p6 in seat order");
        }
        deck_prefix.insert(deck_prefix.end(), ev[i].cards.begin(), ev[i].cards.end());
    }
    for (const PhhEvent& e : ev) {
        if (e.kind == PhhEvent::Kind::deal_board)
            deck_prefix.insert(deck_prefix.end(), e.cards.begin(), e.cards.end());
    }

    std::optional<GameState> maybe_state;
    try {
        maybe_state.emplace(GameState::new_hand_stacked(record.meta, deck_prefix));
    } catch (const std::exception& ex) {
        return semantic(0, ex.what());
    }
    GameState& state = *maybe_state;

    for (size_t i = kPlayers; i < ev.size(); ++i) {
        const PhhEvent& e = ev[i];
        PlayerAction a;
        switch (e.kind) {
            case PhhEvent::Kind::deal_hole:
                return semantic(i, "hole deal after the hand has started");
            case PhhEvent::Kind::deal_board:
            case PhhEvent::Kind::show:
                continue; // engine emits these; verified by the final comparison
            case PhhEvent::Kind::fold:
                a = PlayerAction::fold(e.player - 1);
                break;
            case PhhEvent::Kind::check_call:
                a = PlayerAction::check_call(e.player - 1);
                break;
            case PhhEvent::Kind::bet_raise:
                a = PlayerAction::bet_raise(e.player - 1, e.amount);
                break;
        }
        try {
            state = state.apply(a);
        } catch (const IllegalAction& ex) {
            return semantic(i, std::string("illegal action: ") + ex.what());
        }
    }
    if (!state.terminal())
        return semantic(ev.size() - 1, "record ends before the hand is over");
    if (state.events() != ev) {
        // Find the first divergence for the diagnostic.
        size_t k = 0;
        while (k < ev.size() && k < state.events().size() && state.events()[k] == ev[k]) ++k;
        return semantic(std::min(k, ev.size() - 1),
                        "recorded events diverge from the legal replay at event " +
                            std::to_string(k + 1));
    }
    return state;
}

enum class ReplayCheck { on, off };

// Strict line parser for the six-event grammar. Unknown tokens, malformed
// cards, and framing problems are syntax errors with line/column; records
// that parse but cannot be replayed legally are semantic errors.
inline Expected<PhhRecord, PhhError> parse(std::string_view text,
                                           const HandMeta& meta = HandMeta{},
                                           ReplayCheck check = ReplayCheck::on) {
    PhhRecord record;
    record.meta = meta;
    std::vector<int> event_lines;

    auto syntax = [](int line, int col, std::string msg) {
        return PhhError{PhhError::Kind::syntax, line, col, std::move(msg)};
    };

    int line_no = 0;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos
                                                                               : eol - pos);
        pos = eol == std::string_view::npos ? text.size() : eol + 1;
        ++line_no;

        if (line.empty()) {
            // Only a trailing newline may leave an empty tail.
            if (pos >= text.size()) break;
            return syntax(line_no, 1, "blank line inside record");
        }

        std::vector<detail::Token> toks;
        int col = 1;
        size_t i = 0;
        while (i < line.size()) {
            size_t sp = line.find(' ', i);
            size_t end = sp == std::string_view::npos ? line.size() : sp;
            if (end == i) return syntax(line_no, col, "unexpected space");
            toks.push_back({line.substr(i, end - i), col});
            col += static_cast<int>(end - i) + 1;
            i = end + (sp == std::string_view::npos ? 0 : 1);
            if (sp != std::string_view::npos && i >= line.size())
                return syntax(line_no, col, "trailing space");
        }

        auto expect_count = [&](size_t n, const char* what) -> std::optional<PhhError> {
            if (toks.size() < n)
                return syntax(line_no, col, std::string("expected ") + what);
            if (toks.size() > n)
                return syntax(line_no, toks[n].col, "unexpected token '" + std::string(toks[n].text) + "'");
            return std::nullopt;
        };

        PhhEvent e;
        if (toks[0].text == "d") {
            if (toks.size() < 2)
                return syntax(line_no, col, "expected 'dh' or 'db' after 'd'");
            if (toks[1].text == "dh") {
                if (auto err = expect_count(4, "'d dh pN <two cards>'")) return *err;
                auto player = detail::parse_player_token(toks[2].text);
                if (!player)
                    return syntax(line_no, toks[2].col, "expected player token like 'p1'");
                auto cards = detail::parse_cards(toks[3].text);
                if (!cards || cards->size() != 2)
                    return syntax(line_no, toks[3].col, "expected exactly two cards, e.g. 'KhQs'");
                if (*player > kPlayers)
                    return PhhError{PhhError::Kind::semantic, line_no, toks[2].col,
                                    "player index " + std::to_string(*player) + " out of range 1.." +
                                        std::to_string(kPlayers)};
                e = PhhEvent::deal_hole(*player, (*cards)[0], (*cards)[1]);
            } else if (toks[1].text == "db") {
                if (auto err = expect_count(3, "'d db <cards>'")) return *err;
                auto cards = detail::parse_cards(toks[2].text);
                if (!cards || cards->size() > 3)
                    return syntax(line_no, toks[2].col, "expected one to three cards");
                e = PhhEvent::deal_board(std::move(*cards));
            } else {
                return syntax(line_no, toks[1].col,
                              "expected 'dh' or 'db', got '" + std::string(toks[1].text) + "'");
            }
        } else if (auto player = detail::parse_player_token(toks[0].text)) {
            if (toks.size() < 2)
                return syntax(line_no, col, "expected an action after the player token");
            std::string_view verb = toks[1].text;
            if (*player > kPlayers)
                return PhhError{PhhError::Kind::semantic, line_no, toks[0].col,
                                "player index " + std::to_string(*player) + " out of range 1.." +
                                    std::to_string(kPlayers)};
            if (verb == "f") {
                if (auto err = expect_count(2, "'pN f'")) return *err;
                e = PhhEvent::fold(*player);
            } else if (verb == "cc") {
                if (auto err = expect_count(2, "'pN cc'")) return *err;
                e = PhhEvent::check_call(*player);
            } else if (verb == "cbr") {
                if (auto err = expect_count(3, "'pN cbr <amount>'")) return *err;
                std::string_view amt = toks[2].text;
                Chips value = 0;
                auto [p, ec] = std::from_chars(amt.data(), amt.data() + amt.size(), value);
                bool leading_zero = amt.size() > 1 && amt[0] == '0';
                bool digits = !amt.empty() && amt[0] >= '0' && amt[0] <= '9';
                if (!digits || ec != std::errc() || p != amt.data() + amt.size() || leading_zero)
                    return syntax(line_no, toks[2].col, "malformed amount '" + std::string(amt) + "'");
                e = PhhEvent::bet_raise(*player, value);
            } else if (verb == "sm") {
                if (auto err = expect_count(3, "'pN sm <two cards>'")) return *err;
                auto cards = detail::parse_cards(toks[2].text);
                if (!cards || cards->size() != 2)
                    return syntax(line_no, toks[2].col, "expected exactly two cards");
                e = PhhEvent::show(*player, (*cards)[0], (*cards)[1]);
            } else {
                return syntax(line_no, toks[1].col,
                              "unknown action '" + std::string(verb) + "' (expected f, cc, cbr, sm)");
            }
        } else {
            return syntax(line_no, toks[0].col,
                          "expected 'd' or a player token, got '" + std::string(toks[0].text) + "'");
        }
        record.events.push_back(std::move(e));
        event_lines.push_back(line_no);
    }

    if (check == ReplayCheck::on && !record.events.empty()) {
        auto replayed = replay(record, &event_lines);
        if (!replayed.ok()) return replayed.error();
    }
    return record;
}

// --- corpus files ----------------------------------------------------------

// Writes hands into train/test PHH files with a seeded, exact-count split
// assignment fixed up front from the expected total.
class CorpusWriter {
public:
    CorpusWriter(const std::filesystem::path& dir, int64_t total, double ratio, uint64_t seed)
        : dir_(dir), total_(total) {
        if (!(ratio > 0.0 && ratio < 1.0))
            throw std::invalid_argument("CorpusWriter: split ratio must be in (0,1)");
        if (total <= 0) throw std::invalid_argument("CorpusWriter: total must be positive");
        std::filesystem::create_directories(dir);
        train_.open(dir / "train.phh", std::ios::binary);
        test_.open(dir / "test.phh", std::ios::binary);
        if (!train_ || !test_)
            throw std::runtime_error("CorpusWriter: cannot open output files under " + dir.string());
        int64_t n_train = std::llround(ratio * static_cast<double>(total));
        n_train = std::clamp<int64_t>(n_train, 0, total);
        std::vector<int64_t> order(static_cast<size_t>(total));
        for (int64_t i = 0; i < total; ++i) order[static_cast<size_t>(i)] = i;
        Rng rng(derive_seed(seed, 0x5f17u));
        rng.shuffle(std::span<int64_t>(order));
        is_train_.assign(static_cast<size_t>(total), false);
        for (int64_t i = 0; i < n_train; ++i) is_train_[static_cast<size_t>(order[i])] = true;
    }

    bool next_is_train() const { return is_train_[static_cast<size_t>(written_)]; }

    void add(const PhhRecord& record) {
        if (written_ >= total_) throw std::logic_error("CorpusWriter: more records than declared");
        std::ofstream& out = is_train_[static_cast<size_t>(written_)] ? train_ : test_;
        int64_t& count = is_train_[static_cast<size_t>(written_)] ? train_count_ : test_count_;
        if (count > 0) out << '\n';
        out << serialize(record);
        ++count;
        ++written_;
        if (!out) throw std::runtime_error("CorpusWriter: write failed under " + dir_.string());
    }

    struct Summary {
        int64_t train_hands = 0;
        int64_t test_hands = 0;
    };

    Summary finalize() {
        if (written_ != total_)
            throw std::logic_error("CorpusWriter: expected " + std::to_string(total_) +
                                   " records, got " + std::to_string(written_));
        train_.close();
        test_.close();
        return {train_count_, test_count_};
    }

private:
    std::filesystem::path dir_;
    int64_t total_ = 0;
    int64_t written_ = 0;
    int64_t train_count_ = 0;
    int64_t test_count_ = 0;
    std::vector<bool> is_train_;
    std::ofstream train_, test_;
};

// Reads a blank-line separated PHH corpus file; throws on any parse failure
// (corpus files are artifact-produced, not untrusted input).
inline std::vector<PhhRecord> read_corpus(const std::filesystem::path& path,
                                          const HandMeta& meta = HandMeta{},
                                          ReplayCheck check = ReplayCheck::off) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_corpus: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    std::string all = ss.str();

    std::vector<PhhRecord> records;
    size_t pos = 0;
    int64_t ordinal = 0;
    while (pos < all.size()) {
        size_t sep = all.find("\n\n", pos);
        std::string_view block(all.data() + pos,
                               (sep == std::string::npos ? all.size() : sep + 1) - pos);
        pos = sep == std::string::npos ? all.size() : sep + 2;
        if (block.empty()) continue;
        auto rec = parse(block, meta, check);
        if (!rec.ok())
            throw std::runtime_error("read_corpus: record " + std::to_string(ordinal) + " in " +
                                     path.string() + ": " + rec.error().to_string());
        records.push_back(std::move(rec.value()));
        ++ordinal;
    }
    return records;
}

} // namespace pokerlab
