#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "pokerlab/events.hpp"
#include "pokerlab/rng.hpp"

namespace pokerlab {

enum class TokenKind : uint8_t { special, structural, player, card, digit, action };

// Fixed token<->id bijection with reserved low ids for the specials. Closed
// over everything the generator can emit: players, action verbs, all 52
// cards, and per-digit amount tokens.
class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kGap = 3;
    static constexpr int kAns = 4;

    Vocab(std::vector<std::pair<std::string, TokenKind>> tokens) {
        add("<PAD>", TokenKind::special);
        add("<BOS>", TokenKind::special);
        add("<EOS>", TokenKind::special);
        add("<GAP>", TokenKind::special);
        add("<ANS>", TokenKind::special);
        for (auto& [text, kind] : tokens) add(text, kind);
    }

    // The poker hand-history vocabulary (80 tokens).
    static Vocab standard() {
        std::vector<std::pair<std::string, TokenKind>> toks;
        for (const char* s : {"d", "dh", "db"}) toks.push_back({s, TokenKind::structural});
        for (const char* s : {"f", "cc", "cbr", "sm"}) toks.push_back({s, TokenKind::action});
        for (int p = 1; p <= kPlayers; ++p) toks.push_back({"p" + std::to_string(p), TokenKind::player});
        for (int i = 0; i < 52; ++i) toks.push_back({Card::from_index(i).to_string(), TokenKind::card});
        for (int d = 0; d <= 9; ++d) toks.push_back({std::to_string(d), TokenKind::digit});
        return Vocab(std::move(toks));
    }

    // Binary coin-flip vocabulary used by the sequence-task harness.
    static Vocab coin() {
        return Vocab({{"H", TokenKind::card}, {"T", TokenKind::card}});
    }

    int size() const { return static_cast<int>(tokens_.size()); }

    int id(std::string_view text) const {
        auto it = ids_.find(std::string(text));
        if (it == ids_.end())
            throw std::out_of_range("Vocab: unknown token '" + std::string(text) + "'");
        return it->second;
    }

    const std::string& token(int id) const {
        if (id < 0 || id >= size()) throw std::out_of_range("Vocab: id out of range");
        return tokens_[static_cast<size_t>(id)].first;
    }

    TokenKind kind(int id) const {
        if (id < 0 || id >= size()) throw std::out_of_range("Vocab: id out of range");
        return tokens_[static_cast<size_t>(id)].second;
    }

    // Content tokens may be replaced by <GAP>; specials and the event-framing
    // structural tokens may not.
    bool maskable(int id) const {
        TokenKind k = kind(id);
        return k == TokenKind::player || k == TokenKind::card || k == TokenKind::digit ||
               k == TokenKind::action;
    }

    void save(const std::filesystem::path& path) const {
        nlohmann::json j;
        j["version"] = 1;
        nlohmann::json map = nlohmann::json::object();
        nlohmann::json kinds = nlohmann::json::object();
        static const char* kind_names[] = {"special", "structural", "player",
                                           "card",    "digit",      "action"};
        for (int i = 0; i < size(); ++i) {
            map[tokens_[static_cast<size_t>(i)].first] = i;
            kinds[tokens_[static_cast<size_t>(i)].first] =
                kind_names[static_cast<int>(tokens_[static_cast<size_t>(i)].second)];
        }
        j["token_to_id"] = map;
        j["kinds"] = kinds;
        std::ofstream out(path);
        out << j.dump(2) << '\n';
        if (!out) throw std::runtime_error("Vocab::save: write failed: " + path.string());
    }

    static Vocab load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("Vocab::load: cannot open " + path.string());
        nlohmann::json j = nlohmann::json::parse(in);
        if (j.at("version").get<int>() != 1)
            throw std::runtime_error("Vocab::load: unsupported version");
        std::unordered_map<std::string, TokenKind> kind_of;
        static const std::unordered_map<std::string, TokenKind> kind_names = {
            {"special", TokenKind::special}, {"structural", TokenKind::structural},
            {"player", TokenKind::player},   {"card", TokenKind::card},
            {"digit", TokenKind::digit},     {"action", TokenKind::action}};
        for (auto& [tok, name] : j.at("kinds").items())
            kind_of[tok] = kind_names.at(name.get<std::string>());
        std::vector<std::pair<std::string, int>> by_id;
        for (auto& [tok, id] : j.at("token_to_id").items())
            by_id.push_back({tok, id.get<int>()});
        std::sort(by_id.begin(), by_id.end(),
                  [](const auto& a, const auto& b) { return a.second < b.second; });
        std::vector<std::pair<std::string, TokenKind>> toks;
        for (auto& [tok, id] : by_id) {
            if (id < 5) continue; // specials are implicit
            toks.push_back({tok, kind_of.at(tok)});
        }
        return Vocab(std::move(toks));
    }

private:
    void add(std::string text, TokenKind kind) {
        ids_[text] = static_cast<int>(tokens_.size());
        tokens_.push_back({std::move(text), kind});
    }

    std::vector<std::pair<std::string, TokenKind>> tokens_;
    std::unordered_map<std::string, int> ids_;
};

// Per-digit amount encoding keeps the vocabulary closed over all chip counts.
inline std::vector<std::string> amount_tokens(Chips chips) {
    if (chips < 0) throw std::invalid_argument("amount_tokens: negative amount");
    std::string s = std::to_string(chips);
    std::vector<std::string> out;
    for (char c : s) out.push_back(std::string(1, c));
    return out;
}

inline Chips amount_from_tokens(std::span<const std::string> tokens) {
    if (tokens.empty()) throw std::invalid_argument("amount_from_tokens: empty");
    Chips v = 0;
    for (const auto& t : tokens) {
        if (t.size() != 1 || t[0] < '0' || t[0] > '9')
            throw std::invalid_argument("amount_from_tokens: bad digit token '" + t + "'");
        v = v * 10 + (t[0] - '0');
    }
    return v;
}

// The whitespace-free token stream of one hand: cards and digits become
// individual tokens.
inline std::vector<std::string> token_stream(const PhhRecord& record) {
    std::vector<std::string> out;
    for (const PhhEvent& e : record.events) {
        switch (e.kind) {
            case PhhEvent::Kind::deal_hole:
                out.insert(out.end(), {"d", "dh", "p" + std::to_string(e.player)});
                for (Card c : e.cards) out.push_back(c.to_string());
                break;
            case PhhEvent::Kind::deal_board:
                out.insert(out.end(), {"d", "db"});
                for (Card c : e.cards) out.push_back(c.to_string());
                break;
            case PhhEvent::Kind::fold:
                out.insert(out.end(), {"p" + std::to_string(e.player), "f"});
                break;
            case PhhEvent::Kind::check_call:
                out.insert(out.end(), {"p" + std::to_string(e.player), "cc"});
                break;
            case PhhEvent::Kind::bet_raise: {
                out.insert(out.end(), {"p" + std::to_string(e.player), "cbr"});
                auto digits = amount_tokens(e.amount);
                out.insert(out.end(), digits.begin(), digits.end());
                break;
            }
            case PhhEvent::Kind::show:
                out.insert(out.end(), {"p" + std::to_string(e.player), "sm"});
                for (Card c : e.cards) out.push_back(c.to_string());
                break;
        }
    }
    return out;
}

struct EncodedRecord {
    std::vector<int32_t> ids;        // [BOS, tokens..., EOS]
    std::vector<int32_t> event_index; // aligned to ids; -1 for BOS/EOS
};

// [BOS ... EOS] ids plus per-token event provenance (probe builders use it to
// find board-card and action-token positions).
inline EncodedRecord encode_indexed(const Vocab& vocab, const PhhRecord& record) {
    EncodedRecord enc;
    enc.ids.push_back(Vocab::kBos);
    enc.event_index.push_back(-1);
    char scratch[3] = {0, 0, 0};
    auto push = [&](std::string_view tok, size_t ei) {
        enc.ids.push_back(static_cast<int32_t>(vocab.id(tok)));
        enc.event_index.push_back(static_cast<int32_t>(ei));
    };
    auto push_player = [&](int player, size_t ei) {
        scratch[0] = 'p';
        scratch[1] = static_cast<char>('0' + player);
        push({scratch, 2}, ei);
    };
    for (size_t ei = 0; ei < record.events.size(); ++ei) {
        const PhhEvent& e = record.events[ei];
        switch (e.kind) {
            case PhhEvent::Kind::deal_hole:
                push("d", ei);
                push("dh", ei);
                push_player(e.player, ei);
                break;
            case PhhEvent::Kind::deal_board:
                push("d", ei);
                push("db", ei);
                break;
            case PhhEvent::Kind::fold:
                push_player(e.player, ei);
                push("f", ei);
                break;
            case PhhEvent::Kind::check_call:
                push_player(e.player, ei);
                push("cc", ei);
                break;
            case PhhEvent::Kind::bet_raise: {
                push_player(e.player, ei);
                push("cbr", ei);
                for (char c : std::to_string(e.amount)) push({&c, 1}, ei);
                break;
            }
            case PhhEvent::Kind::show:
                push_player(e.player, ei);
                push("sm", ei);
                break;
        }
        for (Card c : e.cards) push(c.to_string(), ei);
    }
    enc.ids.push_back(Vocab::kEos);
    enc.event_index.push_back(-1);
    return enc;
}

inline std::vector<int32_t> encode(const Vocab& vocab, const PhhRecord& record) {
    return encode_indexed(vocab, record).ids;
}

// Ids back to text tokens, skipping specials.
inline std::vector<std::string> decode(const Vocab& vocab, std::span<const int32_t> ids) {
    std::vector<std::string> out;
    for (int32_t id : ids) {
        if (vocab.kind(id) == TokenKind::special) continue;
        out.push_back(vocab.token(id));
    }
    return out;
}

// One training sequence. loss_mask is true exactly at the moved-token
// positions after <ANS>; target_ids mirrors input_ids (the trainer shifts).
struct TokenizedExample {
    std::vector<int32_t> input_ids;
    std::vector<int32_t> target_ids;
    std::vector<uint8_t> loss_mask;
    std::vector<int32_t> gap_positions;

    friend bool operator==(const TokenizedExample&, const TokenizedExample&) = default;
};

inline int64_t gap_count(const Vocab& vocab, std::span<const int32_t> ids, double fraction) {
    int64_t maskable = 0;
    for (int32_t id : ids) maskable += vocab.maskable(id);
    return static_cast<int64_t>(std::ceil(fraction * static_cast<double>(maskable)));
}

// Replaces ceil(fraction * maskable) content tokens with <GAP> and moves the
// originals behind an appended <ANS>, in gap order.
inline TokenizedExample mask_gaps(const Vocab& vocab, std::span<const int32_t> ids,
                                  double fraction, Rng& rng) {
    if (fraction < 0.0 || fraction >= 1.0)
        throw std::invalid_argument("mask_gaps: fraction must be in [0,1)");
    std::vector<int32_t> maskable;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (vocab.maskable(ids[i])) maskable.push_back(static_cast<int32_t>(i));
    }
    int64_t n_gaps = static_cast<int64_t>(
        std::ceil(fraction * static_cast<double>(maskable.size())));

    // Partial Fisher-Yates, then restore order so answers follow gap order.
    for (int64_t i = 0; i < n_gaps; ++i) {
        int64_t j = i + static_cast<int64_t>(rng.below(maskable.size() - static_cast<size_t>(i)));
        std::swap(maskable[static_cast<size_t>(i)], maskable[static_cast<size_t>(j)]);
    }
    maskable.resize(static_cast<size_t>(n_gaps));
    std::sort(maskable.begin(), maskable.end());

    TokenizedExample ex;
    ex.input_ids.assign(ids.begin(), ids.end());
    ex.gap_positions = maskable;
    std::vector<int32_t> answers;
    for (int32_t pos : maskable) {
        answers.push_back(ex.input_ids[static_cast<size_t>(pos)]);
        ex.input_ids[static_cast<size_t>(pos)] = Vocab::kGap;
    }
    ex.input_ids.push_back(Vocab::kAns);
    ex.loss_mask.assign(ex.input_ids.size(), 0);
    for (int32_t a : answers) {
        ex.input_ids.push_back(a);
        ex.loss_mask.push_back(1);
    }
    ex.target_ids = ex.input_ids;
    return ex;
}

// Undoes mask_gaps: strips the <ANS> tail and re-inserts the moved tokens.
inline std::vector<int32_t> invert_mask(const TokenizedExample& ex) {
    size_t ans = 0;
    while (ans < ex.input_ids.size() && ex.input_ids[ans] != Vocab::kAns) ++ans;
    if (ans == ex.input_ids.size()) throw std::invalid_argument("invert_mask: no <ANS> token");
    std::vector<int32_t> out(ex.input_ids.begin(), ex.input_ids.begin() + static_cast<long>(ans));
    std::span<const int32_t> answers(ex.input_ids.data() + ans + 1,
                                     ex.input_ids.size() - ans - 1);
    if (answers.size() != ex.gap_positions.size())
        throw std::invalid_argument("invert_mask: answer count does not match gap count");
    for (size_t i = 0; i < answers.size(); ++i)
        out[static_cast<size_t>(ex.gap_positions[i])] = answers[i];
    return out;
}

// --- JSON-lines storage ------------------------------------------------------

inline void write_examples_jsonl(const std::filesystem::path& path,
                                 std::span<const TokenizedExample> examples) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_examples_jsonl: cannot open " + path.string());
    out << nlohmann::json{{"format", "tokenized-examples"}, {"version", 1}}.dump() << '\n';
    for (const auto& ex : examples) {
        nlohmann::json j{{"input_ids", ex.input_ids},
                         {"target_ids", ex.target_ids},
                         {"loss_mask", ex.loss_mask},
                         {"gap_positions", ex.gap_positions}};
        out << j.dump() << '\n';
    }
    if (!out) throw std::runtime_error("write_examples_jsonl: write failed: " + path.string());
}

inline std::vector<TokenizedExample> read_examples_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_examples_jsonl: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_examples_jsonl: empty file");
    auto header = nlohmann::json::parse(line);
    if (header.value("format", "") != "tokenized-examples" || header.value("version", 0) != 1)
        throw std::runtime_error("read_examples_jsonl: unrecognized header in " + path.string());
    std::vector<TokenizedExample> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        TokenizedExample ex;
        ex.input_ids = j.at("input_ids").get<std::vector<int32_t>>();
        ex.target_ids = j.at("target_ids").get<std::vector<int32_t>>();
        ex.loss_mask = j.at("loss_mask").get<std::vector<uint8_t>>();
        ex.gap_positions = j.at("gap_positions").get<std::vector<int32_t>>();
        out.push_back(std::move(ex));
    }
    return out;
}

} // namespace pokerlab
