#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pokerlab/cards.hpp"
#include "pokerlab/equity.hpp"
#include "pokerlab/model.hpp"
#include "pokerlab/phh.hpp"
#include "pokerlab/tokenizer.hpp"

namespace pokerlab {

enum class ProbeTask : uint8_t { classify, regress };
enum class ProbeKind : uint8_t { linear, mlp };

inline const char* to_string(ProbeKind k) { return k == ProbeKind::linear ? "linear" : "mlp"; }

struct ProbeSample {
    std::vector<float> activation; // length = model_dim
    int class_label = -1;          // classify tasks
    double value_label = 0.0;      // regress tasks
    int layer = -1;
    int64_t hand_id = -1;
    int position = -1;
};

struct ProbeDataset {
    int feature_dim = 0;
    ProbeTask task = ProbeTask::classify;
    int num_classes = 0;
    std::vector<std::string> class_names;
    std::vector<ProbeSample> samples;

    std::vector<int64_t> class_counts() const {
        std::vector<int64_t> counts(static_cast<size_t>(num_classes), 0);
        for (const auto& s : samples) counts[static_cast<size_t>(s.class_label)]++;
        return counts;
    }
};

// Interpolated percentile of the class counts, floored to an integer, with
// the minimum-count floor. Exact integer arithmetic so independent
// implementations agree bit for bit.
inline int64_t percentile_target_count(std::vector<int64_t> counts, double percentile,
                                       int64_t floor_count) {
    if (counts.empty()) throw std::invalid_argument("percentile_target_count: no classes");
    if (percentile < 0.0 || percentile > 100.0)
        throw std::invalid_argument("percentile_target_count: percentile out of range");
    int64_t p100 = static_cast<int64_t>(std::llround(percentile * 100.0));
    if (std::abs(percentile * 100.0 - static_cast<double>(p100)) > 1e-6)
        throw std::invalid_argument("percentile_target_count: percentile resolution is 0.01");
    std::sort(counts.begin(), counts.end());
    const int64_t k = static_cast<int64_t>(counts.size());
    const int64_t den = 10000;
    int64_t pos = p100 * (k - 1);
    int64_t idx = pos / den;
    int64_t rem = pos % den;
    int64_t lo = counts[static_cast<size_t>(idx)];
    int64_t hi = idx + 1 < k ? counts[static_cast<size_t>(idx + 1)] : lo;
    int64_t value = (lo * (den - rem) + hi * rem) / den;
    return std::max(value, floor_count);
}

// Downsamples classes above the percentile target, uniformly without
// replacement; classes at or below the target are kept whole.
inline std::vector<ProbeSample> balance_classes(const std::vector<ProbeSample>& samples,
                                                double percentile, int64_t floor_count,
                                                Rng& rng) {
    if (samples.empty()) return {};
    std::map<int, std::vector<size_t>> by_class;
    for (size_t i = 0; i < samples.size(); ++i) by_class[samples[i].class_label].push_back(i);
    std::vector<int64_t> counts;
    for (auto& [cls, idx] : by_class) counts.push_back(static_cast<int64_t>(idx.size()));
    int64_t target = percentile_target_count(counts, percentile, floor_count);

    std::vector<size_t> keep;
    for (auto& [cls, idx] : by_class) {
        if (static_cast<int64_t>(idx.size()) <= target) {
            keep.insert(keep.end(), idx.begin(), idx.end());
        } else {
            std::vector<size_t> pool = idx;
            for (int64_t i = 0; i < target; ++i) {
                size_t j = static_cast<size_t>(i) +
                           static_cast<size_t>(rng.below(pool.size() - static_cast<size_t>(i)));
                std::swap(pool[static_cast<size_t>(i)], pool[j]);
            }
            keep.insert(keep.end(), pool.begin(), pool.begin() + static_cast<long>(target));
        }
    }
    std::sort(keep.begin(), keep.end());
    std::vector<ProbeSample> out;
    out.reserve(keep.size());
    for (size_t i : keep) out.push_back(samples[i]);
    return out;
}

// --- dataset builders --------------------------------------------------------

struct ProbeBuildConfig {
    Street street = Street::flop; // probed street for hand-rank/equity
    int64_t max_hands = 0;        // 0 = no cap
    int max_actions_per_hand = 3; // action task: sampled per hand
    int64_t equity_rollouts = 1000;
    uint64_t label_seed = 0xE9;
    std::vector<int> layers;
};

namespace detail {

struct CaptureRequest {
    int64_t hand_id = -1;
    std::vector<int32_t> ids; // truncated at position+1
    int position = -1;
    int class_label = -1;
    double value_label = 0.0;
};

// Runs batched forwards over the requests and scatters activations into
// per-layer datasets.
template <typename T>
void capture_requests(Model<T>& model, std::vector<CaptureRequest>& reqs,
                      std::span<const int> layers, std::map<int, ProbeDataset>& out) {
    std::stable_sort(reqs.begin(), reqs.end(), [](const auto& a, const auto& b) {
        return a.ids.size() < b.ids.size();
    });
    const int batch_size = 64;
    std::vector<int32_t> ids;
    for (size_t start = 0; start < reqs.size(); start += batch_size) {
        size_t end = std::min(start + batch_size, reqs.size());
        int seq = 0;
        for (size_t i = start; i < end; ++i)
            seq = std::max(seq, static_cast<int>(reqs[i].ids.size()));
        const int b = static_cast<int>(end - start);
        ids.assign(static_cast<size_t>(b) * seq, Vocab::kPad);
        for (size_t i = start; i < end; ++i) {
            std::copy(reqs[i].ids.begin(), reqs[i].ids.end(),
                      ids.begin() + static_cast<long>((i - start) * static_cast<size_t>(seq)));
        }
        BatchView view{ids.data(), nullptr, nullptr, b, seq};
        auto streams = model.capture_batch(view, layers);
        for (size_t li = 0; li < layers.size(); ++li) {
            ProbeDataset& ds = out[layers[li]];
            for (size_t i = start; i < end; ++i) {
                const auto& r = reqs[i];
                ProbeSample s;
                s.layer = layers[li];
                s.hand_id = r.hand_id;
                s.position = r.position;
                s.class_label = r.class_label;
                s.value_label = r.value_label;
                auto row = streams[li].row(static_cast<int64_t>(i - start) * seq + r.position);
                s.activation.resize(static_cast<size_t>(row.size()));
                for (int64_t c = 0; c < row.size(); ++c)
                    s.activation[static_cast<size_t>(c)] = static_cast<float>(row[c]);
                ds.samples.push_back(std::move(s));
            }
        }
    }
}

struct HandLayout {
    EncodedRecord enc;
    std::array<Card, 2> p1_hole;
    // per street (flop/turn/river): board cards so far, last-card token
    // position, active opponent count when dealt; -1 position = street absent
    std::array<std::vector<Card>, 3> board_at;
    std::array<int, 3> last_card_pos{-1, -1, -1};
    std::array<int, 3> active_opponents{0, 0, 0};
    bool p1_in_hand_at[3] = {false, false, false};
};

inline HandLayout analyze_hand(const Vocab& vocab, const PhhRecord& rec) {
    HandLayout lay;
    lay.enc = encode_indexed(vocab, rec);
    if (rec.events.empty() || rec.events[0].kind != PhhEvent::Kind::deal_hole ||
        rec.events[0].player != 1)
        throw std::invalid_argument("analyze_hand: record does not start with p1's deal");
    lay.p1_hole = {rec.events[0].cards[0], rec.events[0].cards[1]};

    std::array<bool, kPlayers> folded{};
    std::vector<Card> board;
    int db_seen = 0;
    for (size_t ei = 0; ei < rec.events.size(); ++ei) {
        const PhhEvent& e = rec.events[ei];
        if (e.kind == PhhEvent::Kind::fold) folded[static_cast<size_t>(e.player - 1)] = true;
        if (e.kind != PhhEvent::Kind::deal_board) continue;
        board.insert(board.end(), e.cards.begin(), e.cards.end());
        if (db_seen < 3) {
            lay.board_at[static_cast<size_t>(db_seen)] = board;
            int last = -1;
            for (size_t t = 0; t < lay.enc.ids.size(); ++t) {
                if (lay.enc.event_index[t] == static_cast<int32_t>(ei)) last = static_cast<int>(t);
            }
            lay.last_card_pos[static_cast<size_t>(db_seen)] = last;
            int opp = 0;
            for (int p = 1; p < kPlayers; ++p) opp += !folded[static_cast<size_t>(p)];
            lay.active_opponents[static_cast<size_t>(db_seen)] = opp;
            lay.p1_in_hand_at[db_seen] = !folded[0];
        }
        ++db_seen;
    }
    return lay;
}

inline int street_slot(Street s) {
    switch (s) {
        case Street::flop: return 0;
        case Street::turn: return 1;
        case Street::river: return 2;
        default: throw std::invalid_argument("probes: street must be flop, turn, or river");
    }
}

} // namespace detail

struct BuiltDataset {
    std::map<int, ProbeDataset> by_layer;
    int64_t skipped = 0;
    int64_t used_hands = 0;
};

// Hand rank of player 1's hole cards in the context of the probed street's
// board; activation read at the street's last board-card token.
template <typename T>
BuiltDataset build_handrank_dataset(Model<T>& model, const Vocab& vocab,
                                    const std::vector<PhhRecord>& records, int64_t hand_id_base,
                                    const ProbeBuildConfig& cfg) {
    const int slot = detail::street_slot(cfg.street);
    BuiltDataset out;
    std::vector<detail::CaptureRequest> reqs;
    for (size_t i = 0; i < records.size(); ++i) {
        if (cfg.max_hands > 0 && out.used_hands >= cfg.max_hands) break;
        auto lay = detail::analyze_hand(vocab, records[i]);
        if (lay.last_card_pos[slot] < 0) {
            ++out.skipped;
            continue;
        }
        std::vector<Card> cards(lay.board_at[static_cast<size_t>(slot)]);
        cards.push_back(lay.p1_hole[0]);
        cards.push_back(lay.p1_hole[1]);
        HandRank hr = evaluate_best(cards);

        detail::CaptureRequest r;
        r.hand_id = hand_id_base + static_cast<int64_t>(i);
        r.position = lay.last_card_pos[slot];
        r.ids.assign(lay.enc.ids.begin(), lay.enc.ids.begin() + r.position + 1);
        r.class_label = static_cast<int>(hr.category);
        reqs.push_back(std::move(r));
        ++out.used_hands;
    }
    for (int l : cfg.layers) {
        out.by_layer[l].task = ProbeTask::classify;
        out.by_layer[l].num_classes = 9;
        out.by_layer[l].feature_dim = model.config().model_dim;
        for (int c = 0; c < 9; ++c)
            out.by_layer[l].class_names.push_back(kHandCategoryNames[c]);
    }
    detail::capture_requests(model, reqs, cfg.layers, out.by_layer);
    return out;
}

// Action kind at a masked action token: the verb is replaced by <GAP> and the
// activation is read at the gap, so the token itself cannot leak.
template <typename T>
BuiltDataset build_action_dataset(Model<T>& model, const Vocab& vocab,
                                  const std::vector<PhhRecord>& records, int64_t hand_id_base,
                                  const ProbeBuildConfig& cfg) {
    BuiltDataset out;
    std::vector<detail::CaptureRequest> reqs;
    for (size_t i = 0; i < records.size(); ++i) {
        if (cfg.max_hands > 0 && out.used_hands >= cfg.max_hands) break;
        auto enc = encode_indexed(vocab, records[i]);
        std::vector<std::pair<int, int>> actions; // (verb position, class)
        for (size_t ei = 0; ei < records[i].events.size(); ++ei) {
            int cls;
            switch (records[i].events[ei].kind) {
                case PhhEvent::Kind::fold: cls = 0; break;
                case PhhEvent::Kind::check_call: cls = 1; break;
                case PhhEvent::Kind::bet_raise: cls = 2; break;
                case PhhEvent::Kind::show: cls = 3; break;
                default: continue;
            }
            // verb is the second token of the event
            int first = -1;
            for (size_t t = 0; t < enc.ids.size(); ++t) {
                if (enc.event_index[t] == static_cast<int32_t>(ei)) {
                    first = static_cast<int>(t);
                    break;
                }
            }
            actions.push_back({first + 1, cls});
        }
        if (actions.empty()) {
            ++out.skipped;
            continue;
        }
        Rng pick(derive_seed(cfg.label_seed, 0xAC7u, hand_id_base + static_cast<uint64_t>(i)));
        for (int k = 0; k < cfg.max_actions_per_hand && !actions.empty(); ++k) {
            size_t j = static_cast<size_t>(pick.below(actions.size()));
            auto [pos, cls] = actions[j];
            actions.erase(actions.begin() + static_cast<long>(j));
            detail::CaptureRequest r;
            r.hand_id = hand_id_base + static_cast<int64_t>(i);
            r.position = pos;
            r.ids.assign(enc.ids.begin(), enc.ids.begin() + pos + 1);
            r.ids.back() = Vocab::kGap; // mask the action verb itself
            r.class_label = cls;
            reqs.push_back(std::move(r));
        }
        ++out.used_hands;
    }
    for (int l : cfg.layers) {
        out.by_layer[l].task = ProbeTask::classify;
        out.by_layer[l].num_classes = 4;
        out.by_layer[l].feature_dim = model.config().model_dim;
        out.by_layer[l].class_names = {"fold", "check_call", "bet_raise", "show"};
    }
    detail::capture_requests(model, reqs, cfg.layers, out.by_layer);
    return out;
}

// Player 1's simulated equity at the probed street. Every other player's hole
// cards are masked to <GAP> in the input, mirroring what the probe target is
// supposed to be inferable from.
template <typename T>
BuiltDataset build_equity_dataset(Model<T>& model, const Vocab& vocab,
                                  const std::vector<PhhRecord>& records, int64_t hand_id_base,
                                  const ProbeBuildConfig& cfg) {
    const int slot = detail::street_slot(cfg.street);
    BuiltDataset out;
    std::vector<detail::CaptureRequest> reqs;
    for (size_t i = 0; i < records.size(); ++i) {
        if (cfg.max_hands > 0 && out.used_hands >= cfg.max_hands) break;
        auto lay = detail::analyze_hand(vocab, records[i]);
        if (lay.last_card_pos[slot] < 0 || !lay.p1_in_hand_at[slot] ||
            lay.active_opponents[slot] < 1) {
            ++out.skipped;
            continue;
        }
        int64_t hand_id = hand_id_base + static_cast<int64_t>(i);
        Rng label_rng(derive_seed(cfg.label_seed, 0xE4u, static_cast<uint64_t>(hand_id)));
        EquityEstimate eq = mc_equity(std::span<const Card>(lay.p1_hole.data(), 2),
                                      lay.board_at[static_cast<size_t>(slot)],
                                      lay.active_opponents[slot], cfg.equity_rollouts, label_rng);

        detail::CaptureRequest r;
        r.hand_id = hand_id;
        r.position = lay.last_card_pos[slot];
        r.ids.assign(lay.enc.ids.begin(), lay.enc.ids.begin() + r.position + 1);
        // hide every hole card except player 1's
        for (size_t t = 0; t < r.ids.size(); ++t) {
            int32_t ev = lay.enc.event_index[t];
            if (ev >= 1 && ev < kPlayers && vocab.kind(r.ids[t]) == TokenKind::card)
                r.ids[t] = Vocab::kGap;
        }
        r.value_label = eq.equity;
        reqs.push_back(std::move(r));
        ++out.used_hands;
    }
    for (int l : cfg.layers) {
        out.by_layer[l].task = ProbeTask::regress;
        out.by_layer[l].num_classes = 0;
        out.by_layer[l].feature_dim = model.config().model_dim;
    }
    detail::capture_requests(model, reqs, cfg.layers, out.by_layer);
    return out;
}

// --- probe fitting -----------------------------------------------------------

struct ProbeHyper {
    int mlp_hidden = 256;
    double lr = 1e-3;
    double weight_decay = 0.0;
    int max_epochs = 300;
    int patience = 30;
};

// Fitted probe in the raw activation basis: argmax(W x) for linear,
// argmax(W1 relu(W2 x)) for the two-layer MLP; regression drops the argmax.
struct FittedProbe {
    ProbeKind kind = ProbeKind::linear;
    ProbeTask task = ProbeTask::classify;
    Eigen::MatrixXd W;      // [C, F] (linear)
    Eigen::MatrixXd W1, W2; // [C, H], [H, F] (mlp)

    Eigen::VectorXd scores(const Eigen::VectorXd& x) const {
        if (kind == ProbeKind::linear) return W * x;
        return W1 * (W2 * x).cwiseMax(0.0);
    }
    int predict_class(const Eigen::VectorXd& x) const {
        Eigen::Index best;
        scores(x).maxCoeff(&best);
        return static_cast<int>(best);
    }
    double predict_value(const Eigen::VectorXd& x) const { return scores(x)(0); }
};

namespace detail {

struct DenseData {
    Eigen::MatrixXd X; // [n, F]
    std::vector<int> y;
    Eigen::VectorXd v; // regression targets
};

inline DenseData densify(std::span<const ProbeSample> samples) {
    DenseData d;
    if (samples.empty()) return d;
    const int64_t n = static_cast<int64_t>(samples.size());
    const int64_t f = static_cast<int64_t>(samples[0].activation.size());
    d.X.resize(n, f);
    d.v.resize(n);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t c = 0; c < f; ++c)
            d.X(i, c) = static_cast<double>(samples[static_cast<size_t>(i)].activation[static_cast<size_t>(c)]);
        d.y.push_back(samples[static_cast<size_t>(i)].class_label);
        d.v(i) = samples[static_cast<size_t>(i)].value_label;
    }
    return d;
}

} // namespace detail

// Gradient-trained probe (AdamW, full batch) with feature scaling folded back
// into the returned weights so the prediction rule stays argmax(W x).
inline FittedProbe train_probe(ProbeKind kind, ProbeTask task,
                               std::span<const ProbeSample> train,
                               std::span<const ProbeSample> val, int num_classes, uint64_t seed,
                               const ProbeHyper& hyper = {}) {
    if (train.empty()) throw std::invalid_argument("train_probe: empty training set");
    const int F = static_cast<int>(train[0].activation.size());
    const int C = task == ProbeTask::classify ? num_classes : 1;
    if (task == ProbeTask::classify) {
        std::vector<bool> present(static_cast<size_t>(num_classes), false);
        int distinct = 0;
        for (const auto& s : train) {
            if (!present[static_cast<size_t>(s.class_label)]) {
                present[static_cast<size_t>(s.class_label)] = true;
                ++distinct;
            }
        }
        if (distinct < 2)
            throw std::invalid_argument("train_probe: training set has a single class");
    }

    detail::DenseData tr = detail::densify(train);
    detail::DenseData va = detail::densify(val);

    // per-feature scale (no centering: the probe has no bias term)
    Eigen::VectorXd scale(F);
    for (int c = 0; c < F; ++c) {
        double mean = tr.X.col(c).mean();
        double var = (tr.X.col(c).array() - mean).square().mean();
        scale(c) = std::sqrt(var) > 1e-8 ? std::sqrt(var) : 1.0;
    }
    Eigen::MatrixXd Xs = tr.X.array().rowwise() / scale.transpose().array();
    Eigen::MatrixXd Xv = va.X.array().rowwise() / scale.transpose().array();

    const int H = hyper.mlp_hidden;
    std::vector<ParamBlock<double>> params;
    if (kind == ProbeKind::linear) {
        params.emplace_back("W", std::vector<int64_t>{C, F});
    } else {
        params.emplace_back("W1", std::vector<int64_t>{C, H});
        params.emplace_back("W2", std::vector<int64_t>{H, F});
    }
    Rng rng(derive_seed(seed, 0x9B0E5u));
    for (auto& p : params) {
        double std = 1.0 / std::sqrt(static_cast<double>(p.value.shape[1]));
        for (auto& w : p.value.data) w = rng.normal() * std;
    }
    AdamW<double> opt(params);
    opt.lr = hyper.lr;
    opt.weight_decay = hyper.weight_decay;
    opt.beta1 = 0.9;
    opt.beta2 = 0.95;
    opt.eps = 1e-8;

    const int64_t n = Xs.rows();
    Eigen::MatrixXd hidden, act, logits, dlogits, dact;

    auto forward_loss = [&](const Eigen::MatrixXd& X, const std::vector<int>& y,
                            const Eigen::VectorXd& v, bool want_grad) {
        Eigen::Map<Tensor<double>::Mat> Wmap(params[0].value.data.data(), C,
                                             kind == ProbeKind::linear ? F : H);
        if (kind == ProbeKind::linear) {
            logits.noalias() = X * Wmap.transpose();
        } else {
            Eigen::Map<Tensor<double>::Mat> W2map(params[1].value.data.data(), H, F);
            hidden.noalias() = X * W2map.transpose();
            act = hidden.cwiseMax(0.0);
            logits.noalias() = act * Wmap.transpose();
        }
        const int64_t rows = X.rows();
        double loss = 0.0;
        dlogits.resize(rows, C);
        if (task == ProbeTask::classify) {
            for (int64_t i = 0; i < rows; ++i) {
                auto row = logits.row(i);
                double mx = row.maxCoeff();
                double sum = 0.0;
                for (int c = 0; c < C; ++c) sum += std::exp(row(c) - mx);
                double lse = mx + std::log(sum);
                loss += lse - row(y[static_cast<size_t>(i)]);
                if (want_grad) {
                    for (int c = 0; c < C; ++c)
                        dlogits(i, c) = std::exp(row(c) - lse) / static_cast<double>(rows);
                    dlogits(i, y[static_cast<size_t>(i)]) -= 1.0 / static_cast<double>(rows);
                }
            }
            loss /= static_cast<double>(rows);
        } else {
            Eigen::VectorXd err = logits.col(0) - v;
            loss = err.squaredNorm() / static_cast<double>(rows);
            if (want_grad) dlogits.col(0) = 2.0 * err / static_cast<double>(rows);
        }
        if (want_grad) {
            if (kind == ProbeKind::linear) {
                Eigen::Map<Tensor<double>::Mat> gW(params[0].grad.data.data(), C, F);
                gW = dlogits.transpose() * X;
            } else {
                Eigen::Map<Tensor<double>::Mat> gW1(params[0].grad.data.data(), C, H);
                Eigen::Map<Tensor<double>::Mat> gW2(params[1].grad.data.data(), H, F);
                gW1 = dlogits.transpose() * act;
                dact = dlogits * Wmap;
                dact = (hidden.array() > 0.0).select(dact, 0.0);
                gW2 = dact.transpose() * X;
            }
        }
        return loss;
    };

    double best_val = std::numeric_limits<double>::infinity();
    std::vector<AlignedVec<double>> best_params;
    for (auto& p : params) best_params.push_back(p.value.data);
    int since_best = 0;
    for (int epoch = 0; epoch < hyper.max_epochs; ++epoch) {
        forward_loss(Xs, tr.y, tr.v, true);
        opt.step(params);
        double vloss = va.X.rows() > 0 ? forward_loss(Xv, va.y, va.v, false)
                                       : forward_loss(Xs, tr.y, tr.v, false);
        if (vloss < best_val - 1e-9) {
            best_val = vloss;
            for (size_t i = 0; i < params.size(); ++i) best_params[i] = params[i].value.data;
            since_best = 0;
        } else if (++since_best >= hyper.patience) {
            break;
        }
    }
    (void)n;

    FittedProbe probe;
    probe.kind = kind;
    probe.task = task;
    if (kind == ProbeKind::linear) {
        probe.W = Eigen::Map<Tensor<double>::Mat>(best_params[0].data(), C, F);
        probe.W = probe.W.array().rowwise() / scale.transpose().array(); // fold scaling
    } else {
        probe.W1 = Eigen::Map<Tensor<double>::Mat>(best_params[0].data(), C, H);
        probe.W2 = Eigen::Map<Tensor<double>::Mat>(best_params[1].data(), H, F);
        probe.W2 = probe.W2.array().rowwise() / scale.transpose().array();
    }
    return probe;
}

// --- evaluation and reports ----------------------------------------------------

struct ProbeMetrics {
    double accuracy = 0.0;
    double pearson_r = 0.0;
    double r2 = 0.0;
    std::vector<std::vector<int64_t>> confusion; // [true][predicted]
};

inline ProbeMetrics evaluate_probe(const FittedProbe& probe, std::span<const ProbeSample> test,
                                   int num_classes) {
    if (test.empty()) throw std::invalid_argument("evaluate_probe: empty test set");
    ProbeMetrics m;
    if (probe.task == ProbeTask::classify) {
        m.confusion.assign(static_cast<size_t>(num_classes),
                           std::vector<int64_t>(static_cast<size_t>(num_classes), 0));
        int64_t hits = 0;
        Eigen::VectorXd x(test[0].activation.size());
        for (const auto& s : test) {
            for (size_t c = 0; c < s.activation.size(); ++c)
                x(static_cast<Eigen::Index>(c)) = s.activation[c];
            int pred = probe.predict_class(x);
            m.confusion[static_cast<size_t>(s.class_label)][static_cast<size_t>(pred)]++;
            hits += pred == s.class_label;
        }
        m.accuracy = static_cast<double>(hits) / static_cast<double>(test.size());
    } else {
        const int64_t n = static_cast<int64_t>(test.size());
        Eigen::VectorXd pred(n), truth(n);
        Eigen::VectorXd x(test[0].activation.size());
        for (int64_t i = 0; i < n; ++i) {
            const auto& s = test[static_cast<size_t>(i)];
            for (size_t c = 0; c < s.activation.size(); ++c)
                x(static_cast<Eigen::Index>(c)) = s.activation[c];
            pred(i) = probe.predict_value(x);
            truth(i) = s.value_label;
        }
        double pm = pred.mean(), tm = truth.mean();
        double cov = ((pred.array() - pm) * (truth.array() - tm)).sum();
        double vp = (pred.array() - pm).square().sum();
        double vt = (truth.array() - tm).square().sum();
        m.pearson_r = vp > 0 && vt > 0 ? cov / std::sqrt(vp * vt) : 0.0;
        double ss_res = (pred - truth).squaredNorm();
        m.r2 = vt > 0 ? 1.0 - ss_res / vt : 0.0;
    }
    return m;
}

// two-sided 95% t critical values by degrees of freedom
inline double t_critical_95(int df) {
    static const double table[] = {12.706, 4.303, 3.182, 2.776, 2.571,
                                   2.447,  2.365, 2.306, 2.262, 2.228};
    if (df < 1) throw std::invalid_argument("t_critical_95: df must be >= 1");
    if (df <= 10) return table[df - 1];
    if (df <= 20) return 2.09;
    return 1.96;
}

struct ProbeReportRow {
    int layer = 0;
    ProbeKind kind = ProbeKind::linear;
    std::vector<double> seed_metrics; // accuracy (classify) or pearson r (regress)
    std::vector<double> seed_r2;      // regress only
    double mean = 0.0;
    double ci_half = 0.0; // 95% over seeds
    ProbeMetrics first_seed;
};

struct ProbeReport {
    std::string task;
    ProbeTask task_kind = ProbeTask::classify;
    int num_classes = 0;
    std::vector<std::string> class_names;
    std::vector<int64_t> train_class_counts, test_class_counts;
    int64_t train_size = 0, test_size = 0;
    std::vector<ProbeReportRow> rows;

    const ProbeReportRow& row(int layer, ProbeKind kind) const {
        for (const auto& r : rows) {
            if (r.layer == layer && r.kind == kind) return r;
        }
        throw std::out_of_range("ProbeReport: no such row");
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"task", task},
                         {"kind", task_kind == ProbeTask::classify ? "classify" : "regress"},
                         {"num_classes", num_classes},
                         {"class_names", class_names},
                         {"train_class_counts", train_class_counts},
                         {"test_class_counts", test_class_counts},
                         {"train_size", train_size},
                         {"test_size", test_size}};
        nlohmann::json rows_json = nlohmann::json::array();
        for (const auto& r : rows) {
            nlohmann::json rj{{"layer", r.layer},
                              {"probe", to_string(r.kind)},
                              {"seed_metrics", r.seed_metrics},
                              {"mean", r.mean},
                              {"ci95_half", r.ci_half}};
            if (task_kind == ProbeTask::regress) rj["seed_r2"] = r.seed_r2;
            else rj["confusion_seed0"] = r.first_seed.confusion;
            rows_json.push_back(rj);
        }
        j["rows"] = rows_json;
        return j;
    }
};

// Splits probe-train samples into train/val by hand id (test samples come from
// the model's held-out corpus and never mix in).
inline void split_by_hand(const std::vector<ProbeSample>& samples, double val_fraction,
                          uint64_t seed, std::vector<ProbeSample>& train_out,
                          std::vector<ProbeSample>& val_out) {
    std::vector<int64_t> hand_ids;
    for (const auto& s : samples) hand_ids.push_back(s.hand_id);
    std::sort(hand_ids.begin(), hand_ids.end());
    hand_ids.erase(std::unique(hand_ids.begin(), hand_ids.end()), hand_ids.end());
    Rng rng(derive_seed(seed, 0x59117u));
    rng.shuffle(std::span<int64_t>(hand_ids));
    size_t n_val = static_cast<size_t>(std::llround(val_fraction * static_cast<double>(hand_ids.size())));
    std::set<int64_t> val_hands(hand_ids.begin(), hand_ids.begin() + static_cast<long>(n_val));
    for (const auto& s : samples) {
        (val_hands.count(s.hand_id) ? val_out : train_out).push_back(s);
    }
}

struct ProbeRunConfig {
    int n_seeds = 5;
    uint64_t base_seed = 100;
    double val_fraction = 0.15;
    double balance_percentile = 40.0;
    int64_t balance_floor = 10;
    bool balance = true; // classify tasks only
    ProbeHyper hyper;
};

// Trains linear and MLP probes for one layer across seeds and aggregates.
inline ProbeReport run_probe_task(const std::string& task_name,
                                  const std::map<int, ProbeDataset>& train_by_layer,
                                  const std::map<int, ProbeDataset>& test_by_layer,
                                  const ProbeRunConfig& cfg) {
    ProbeReport report;
    report.task = task_name;
    bool first_layer = true;
    for (const auto& [layer, train_ds] : train_by_layer) {
        const ProbeDataset& test_ds = test_by_layer.at(layer);
        std::vector<ProbeSample> train_samples = train_ds.samples;
        std::vector<ProbeSample> test_samples = test_ds.samples;
        if (train_ds.task == ProbeTask::classify && cfg.balance) {
            Rng rng_a(derive_seed(cfg.base_seed, 0xBA1u, static_cast<uint64_t>(layer)));
            Rng rng_b(derive_seed(cfg.base_seed, 0xBA2u, static_cast<uint64_t>(layer)));
            train_samples =
                balance_classes(train_samples, cfg.balance_percentile, cfg.balance_floor, rng_a);
            test_samples =
                balance_classes(test_samples, cfg.balance_percentile, cfg.balance_floor, rng_b);
        }
        std::vector<ProbeSample> tr, va;
        split_by_hand(train_samples, cfg.val_fraction, cfg.base_seed, tr, va);

        if (first_layer) {
            report.task_kind = train_ds.task;
            report.num_classes = train_ds.num_classes;
            report.class_names = train_ds.class_names;
            report.train_size = static_cast<int64_t>(train_samples.size());
            report.test_size = static_cast<int64_t>(test_samples.size());
            if (train_ds.task == ProbeTask::classify) {
                ProbeDataset tmp = train_ds;
                tmp.samples = train_samples;
                report.train_class_counts = tmp.class_counts();
                tmp.samples = test_samples;
                report.test_class_counts = tmp.class_counts();
            }
            first_layer = false;
        }

        for (ProbeKind kind : {ProbeKind::linear, ProbeKind::mlp}) {
            ProbeReportRow row;
            row.layer = layer;
            row.kind = kind;
            for (int s = 0; s < cfg.n_seeds; ++s) {
                uint64_t seed = derive_seed(cfg.base_seed, static_cast<uint64_t>(layer),
                                            static_cast<uint64_t>(s),
                                            kind == ProbeKind::mlp ? 2u : 1u);
                FittedProbe probe = train_probe(kind, train_ds.task, tr, va,
                                                train_ds.num_classes, seed, cfg.hyper);
                ProbeMetrics m = evaluate_probe(probe, test_samples, train_ds.num_classes);
                row.seed_metrics.push_back(train_ds.task == ProbeTask::classify ? m.accuracy
                                                                                : m.pearson_r);
                if (train_ds.task == ProbeTask::regress) row.seed_r2.push_back(m.r2);
                if (s == 0) row.first_seed = m;
            }
            double mean = 0.0;
            for (double v : row.seed_metrics) mean += v;
            mean /= static_cast<double>(row.seed_metrics.size());
            double var = 0.0;
            for (double v : row.seed_metrics) var += (v - mean) * (v - mean);
            row.mean = mean;
            if (row.seed_metrics.size() >= 2) {
                double sd = std::sqrt(var / static_cast<double>(row.seed_metrics.size() - 1));
                row.ci_half = t_critical_95(static_cast<int>(row.seed_metrics.size()) - 1) * sd /
                              std::sqrt(static_cast<double>(row.seed_metrics.size()));
            }
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

} // namespace pokerlab
