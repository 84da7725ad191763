#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <omp.h>

#include "pokerlab/model.hpp"
#include "pokerlab/tokenizer.hpp"

namespace pokerlab {

struct TrainConfig {
    int max_epochs = 20;
    int batch_size = 64;
    int grad_accum = 2; // effective batch = batch_size * grad_accum
    double lr = 3e-4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double mask_fraction = 0.15;
    uint64_t seed = 1;
    int val_every_steps = 250;   // 0 = validate only at epoch ends
    int checkpoint_every = 5000; // steps; epoch ends always checkpoint
    int early_stop_patience = 3; // consecutive epoch-level regressions
    double stop_at_val_loss = 0; // stop once validation reaches this (0 = off)
    int64_t max_val_examples = 2000;
    std::string precision = "f64"; // "f64" | "f32"
    int threads = 0;

    nlohmann::json to_json() const {
        return {{"max_epochs", max_epochs},
                {"batch_size", batch_size},
                {"grad_accum", grad_accum},
                {"lr", lr},
                {"weight_decay", weight_decay},
                {"beta1", beta1},
                {"beta2", beta2},
                {"eps", eps},
                {"mask_fraction", mask_fraction},
                {"seed", seed},
                {"val_every_steps", val_every_steps},
                {"checkpoint_every", checkpoint_every},
                {"early_stop_patience", early_stop_patience},
                {"stop_at_val_loss", stop_at_val_loss},
                {"max_val_examples", max_val_examples},
                {"precision", precision},
                {"threads", threads}};
    }
    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.grad_accum = j.value("grad_accum", c.grad_accum);
        c.lr = j.value("lr", c.lr);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.eps = j.value("eps", c.eps);
        c.mask_fraction = j.value("mask_fraction", c.mask_fraction);
        c.seed = j.value("seed", c.seed);
        c.val_every_steps = j.value("val_every_steps", c.val_every_steps);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
        c.stop_at_val_loss = j.value("stop_at_val_loss", c.stop_at_val_loss);
        c.max_val_examples = j.value("max_val_examples", c.max_val_examples);
        c.precision = j.value("precision", c.precision);
        c.threads = j.value("threads", c.threads);
        return c;
    }
};

struct TrainResult {
    double best_val = std::numeric_limits<double>::infinity();
    double final_val = std::numeric_limits<double>::infinity();
    int epochs_completed = 0;
    int64_t steps = 0;
    int64_t skipped_overlong = 0;
    bool early_stopped = false;
    bool hit_target = false;
    std::filesystem::path best_checkpoint, last_checkpoint, log_path;
};

// Early-stop rule: stop after `patience` consecutive epochs whose validation
// loss regressed relative to the epoch before.
inline bool should_early_stop(std::span<const double> epoch_vals, int patience) {
    if (static_cast<int>(epoch_vals.size()) <= patience) return false;
    for (size_t k = epoch_vals.size() - static_cast<size_t>(patience); k < epoch_vals.size(); ++k) {
        if (!(epoch_vals[k] > epoch_vals[k - 1])) return false;
    }
    return true;
}

namespace detail {

// Example stream: either fixed pre-masked examples, or raw id sequences that
// get a fresh deterministic gap mask each epoch.
struct ExampleSource {
    const std::vector<std::vector<int32_t>>* raw = nullptr;
    const std::vector<TokenizedExample>* fixed = nullptr;
    const Vocab* vocab = nullptr;
    double mask_fraction = 0.0;
    uint64_t seed = 0;
    uint64_t stream_tag = 0;

    size_t size() const { return raw ? raw->size() : fixed->size(); }

    int64_t length_of(size_t i) const {
        if (fixed) return static_cast<int64_t>((*fixed)[i].input_ids.size());
        const auto& ids = (*raw)[i];
        return static_cast<int64_t>(ids.size()) + 1 + gap_count(*vocab, ids, mask_fraction);
    }

    TokenizedExample get(int epoch, size_t i) const {
        if (fixed) return (*fixed)[i];
        Rng rng(derive_seed(seed, stream_tag, static_cast<uint64_t>(epoch),
                            static_cast<uint64_t>(i)));
        return mask_gaps(*vocab, (*raw)[i], mask_fraction, rng);
    }
};

// Flat padded batch with next-token targets. mask[n] marks rows whose logits
// are scored (the target there is a post-<ANS> answer token).
struct PackedBatch {
    std::vector<int32_t> ids, targets;
    std::vector<uint8_t> mask;
    int batch = 0, seq = 0;
    int64_t mask_count = 0;

    BatchView view() const { return {ids.data(), targets.data(), mask.data(), batch, seq}; }
};

inline void pack_batch(const std::vector<TokenizedExample>& examples, PackedBatch& out) {
    out.batch = static_cast<int>(examples.size());
    out.seq = 0;
    for (const auto& ex : examples)
        out.seq = std::max(out.seq, static_cast<int>(ex.input_ids.size()));
    const int64_t n = static_cast<int64_t>(out.batch) * out.seq;
    out.ids.assign(static_cast<size_t>(n), Vocab::kPad);
    out.targets.assign(static_cast<size_t>(n), Vocab::kPad);
    out.mask.assign(static_cast<size_t>(n), 0);
    out.mask_count = 0;
    for (int b = 0; b < out.batch; ++b) {
        const auto& ex = examples[static_cast<size_t>(b)];
        const int64_t base = static_cast<int64_t>(b) * out.seq;
        const size_t len = ex.input_ids.size();
        for (size_t t = 0; t < len; ++t) out.ids[static_cast<size_t>(base) + t] = ex.input_ids[t];
        for (size_t t = 0; t + 1 < len; ++t) {
            out.targets[static_cast<size_t>(base) + t] = ex.target_ids[t + 1];
            uint8_t m = ex.loss_mask[t + 1];
            out.mask[static_cast<size_t>(base) + t] = m;
            out.mask_count += m;
        }
    }
}

// Deterministic epoch order: seeded shuffle, then length-sorted within fixed
// windows so padding stays tight without destroying the shuffle.
inline std::vector<size_t> epoch_order(const ExampleSource& src,
                                       const std::vector<size_t>& usable, uint64_t seed,
                                       int epoch) {
    std::vector<size_t> order = usable;
    Rng rng(derive_seed(seed, 0x0EDE2u, static_cast<uint64_t>(epoch)));
    rng.shuffle(std::span<size_t>(order));
    const size_t window = 1024;
    for (size_t start = 0; start < order.size(); start += window) {
        size_t end = std::min(start + window, order.size());
        std::stable_sort(order.begin() + static_cast<long>(start),
                         order.begin() + static_cast<long>(end),
                         [&](size_t a, size_t b) { return src.length_of(a) < src.length_of(b); });
    }
    return order;
}

} // namespace detail

template <typename T>
struct TrainOutcome {
    TrainResult result;
    Model<T> model;
};

// Full training loop: gradient accumulation, periodic + best checkpointing,
// epoch-level early stopping, byte-reproducible log. Resumable from last.ckpt.
template <typename T>
TrainOutcome<T> train_examples(const detail::ExampleSource& train_src,
                               const detail::ExampleSource& val_src, ModelConfig mcfg,
                               const TrainConfig& tcfg, const std::filesystem::path& out_dir,
                               const std::filesystem::path& resume_from = {}) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    if (tcfg.threads > 0) {
        omp_set_num_threads(tcfg.threads);
        Eigen::setNbThreads(tcfg.threads);
    }

    // usable = fits the context after masking
    std::vector<size_t> usable;
    int64_t skipped = 0;
    for (size_t i = 0; i < train_src.size(); ++i) {
        if (train_src.length_of(i) <= mcfg.context_len) usable.push_back(i);
        else ++skipped;
    }
    if (usable.empty()) throw std::invalid_argument("train: no usable examples");

    std::vector<size_t> val_usable;
    for (size_t i = 0; i < val_src.size(); ++i) {
        if (static_cast<int64_t>(val_usable.size()) >= tcfg.max_val_examples) break;
        if (val_src.length_of(i) <= mcfg.context_len) val_usable.push_back(i);
    }
    if (val_usable.empty()) throw std::invalid_argument("train: no usable validation examples");

    // Pre-pack validation batches once (epoch 0 masks; fixed across epochs so
    // the validation series is comparable).
    std::vector<detail::PackedBatch> val_batches;
    {
        std::stable_sort(val_usable.begin(), val_usable.end(), [&](size_t a, size_t b) {
            return val_src.length_of(a) < val_src.length_of(b);
        });
        std::vector<TokenizedExample> group;
        for (size_t k = 0; k < val_usable.size(); k += static_cast<size_t>(tcfg.batch_size)) {
            group.clear();
            for (size_t j = k; j < std::min(k + static_cast<size_t>(tcfg.batch_size),
                                            val_usable.size());
                 ++j)
                group.push_back(val_src.get(0, val_usable[j]));
            val_batches.emplace_back();
            detail::pack_batch(group, val_batches.back());
        }
    }

    TrainResult result;
    result.skipped_overlong = skipped;
    result.log_path = out_dir / "log.csv";
    result.best_checkpoint = out_dir / "best.ckpt";
    result.last_checkpoint = out_dir / "last.ckpt";

    std::optional<Model<T>> model;
    std::optional<AdamW<T>> opt;
    int start_epoch = 0;
    int64_t start_batch = 0; // batch index within the starting epoch
    int64_t step = 0;
    std::vector<double> epoch_vals;
    std::ofstream log;

    if (!resume_from.empty()) {
        model.emplace(peek_checkpoint(resume_from).config);
        opt.emplace(model->params());
        nlohmann::json extra;
        load_into(resume_from, *model, &*opt, &extra);
        start_epoch = extra.at("epoch").get<int>();
        start_batch = extra.at("next_batch").get<int64_t>();
        step = extra.at("step").get<int64_t>();
        double best = extra.at("best_val").get<double>();
        result.best_val = best < 0 ? std::numeric_limits<double>::infinity() : best;
        epoch_vals = extra.at("epoch_vals").get<std::vector<double>>();
        log.open(result.log_path, std::ios::app);
    } else {
        model.emplace(mcfg);
        opt.emplace(model->params());
        log.open(result.log_path);
        log << "step,train_loss,val_loss,lr\n";
    }
    if (!log) throw std::runtime_error("train: cannot open log " + result.log_path.string());
    opt->lr = tcfg.lr;
    opt->beta1 = tcfg.beta1;
    opt->beta2 = tcfg.beta2;
    opt->eps = tcfg.eps;
    opt->weight_decay = tcfg.weight_decay;

    auto validate = [&]() {
        double sum = 0.0;
        int64_t count = 0;
        for (auto& vb : val_batches) {
            double l = model->forward_loss(vb.view());
            sum += l * static_cast<double>(vb.mask_count);
            count += vb.mask_count;
        }
        return count > 0 ? sum / static_cast<double>(count) : 0.0;
    };

    char buf[64];
    auto fmt = [&](double x) {
        std::snprintf(buf, sizeof buf, "%.17g", x);
        return std::string(buf);
    };
    auto log_row = [&](int64_t s, const double* train_loss, const double* val_loss) {
        log << s << ',' << (train_loss ? fmt(*train_loss) : "") << ','
            << (val_loss ? fmt(*val_loss) : "") << ',' << fmt(opt->lr) << '\n';
        log.flush();
    };

    auto save_state = [&](const fs::path& path, int epoch, int64_t next_batch) {
        // JSON has no infinity; -1 stands for "no validation yet".
        double best = std::isfinite(result.best_val) ? result.best_val : -1.0;
        nlohmann::json extra{{"epoch", epoch},
                             {"next_batch", next_batch},
                             {"step", step},
                             {"best_val", best},
                             {"epoch_vals", epoch_vals},
                             {"train_config", tcfg.to_json()}};
        save_checkpoint(path, *model, &*opt, extra);
    };

    const int64_t accum = std::max(1, tcfg.grad_accum);
    bool stop = false;
    std::vector<TokenizedExample> group;
    detail::PackedBatch packed;

    auto run_validation = [&](const double* train_loss, bool log_it) {
        double v = validate();
        if (log_it) log_row(step, train_loss, &v);
        if (v < result.best_val) {
            result.best_val = v;
            save_checkpoint(result.best_checkpoint, *model, static_cast<const AdamW<T>*>(nullptr),
                            {{"step", step}, {"val_loss", v}});
        }
        result.final_val = v;
        if (tcfg.stop_at_val_loss > 0 && v <= tcfg.stop_at_val_loss) {
            result.hit_target = true;
            stop = true;
        }
        return v;
    };

    for (int epoch = start_epoch; epoch < tcfg.max_epochs && !stop; ++epoch) {
        std::vector<size_t> order = detail::epoch_order(train_src, usable, tcfg.seed, epoch);
        const int64_t n_batches =
            (static_cast<int64_t>(order.size()) + tcfg.batch_size - 1) / tcfg.batch_size;

        int64_t micro_in_group = 0;
        double group_loss = 0.0;
        for (int64_t bi = epoch == start_epoch ? start_batch : 0; bi < n_batches && !stop; ++bi) {
            group.clear();
            for (int64_t j = bi * tcfg.batch_size;
                 j < std::min<int64_t>((bi + 1) * tcfg.batch_size,
                                       static_cast<int64_t>(order.size()));
                 ++j)
                group.push_back(train_src.get(epoch, order[static_cast<size_t>(j)]));
            detail::pack_batch(group, packed);

            if (micro_in_group == 0) model->zero_grads();
            double loss = model->forward_loss(packed.view());
            if (!std::isfinite(loss))
                throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                                         " (epoch " + std::to_string(epoch) + ", batch " +
                                         std::to_string(bi) + ")");
            model->backward(packed.view(), 1.0 / static_cast<double>(accum));
            group_loss += loss;
            ++micro_in_group;

            bool last_batch = bi + 1 == n_batches;
            if (micro_in_group == accum || last_batch) {
                opt->step(model->params());
                ++step;
                double train_loss = group_loss / static_cast<double>(micro_in_group);
                micro_in_group = 0;
                group_loss = 0.0;

                bool want_val = tcfg.val_every_steps > 0 && step % tcfg.val_every_steps == 0;
                if (want_val && !last_batch) {
                    run_validation(&train_loss, true);
                } else {
                    log_row(step, &train_loss, nullptr);
                }
                if (tcfg.checkpoint_every > 0 && step % tcfg.checkpoint_every == 0) {
                    char name[64];
                    std::snprintf(name, sizeof name, "step_%08lld.ckpt",
                                  static_cast<long long>(step));
                    save_state(out_dir / name, epoch, bi + 1);
                }
                if (stop) save_state(result.last_checkpoint, epoch, bi + 1);
            }
        }
        if (stop) break;

        // epoch-end validation drives early stopping
        double v = run_validation(nullptr, false);
        log_row(step, nullptr, &v);
        epoch_vals.push_back(v);
        result.epochs_completed = epoch + 1;
        save_state(result.last_checkpoint, epoch + 1, 0);
        if (should_early_stop(epoch_vals, tcfg.early_stop_patience)) {
            result.early_stopped = true;
            break;
        }
    }
    result.steps = step;
    return {result, std::move(*model)};
}

// Masked-LM training on raw id sequences (fresh gap masks each epoch).
template <typename T>
TrainOutcome<T> train_masked(const std::vector<std::vector<int32_t>>& train_ids,
                             const std::vector<std::vector<int32_t>>& val_ids, const Vocab& vocab,
                             const ModelConfig& mcfg, const TrainConfig& tcfg,
                             const std::filesystem::path& out_dir,
                             const std::filesystem::path& resume_from = {}) {
    detail::ExampleSource train_src;
    train_src.raw = &train_ids;
    train_src.vocab = &vocab;
    train_src.mask_fraction = tcfg.mask_fraction;
    train_src.seed = tcfg.seed;
    train_src.stream_tag = 0x7121u;
    detail::ExampleSource val_src = train_src;
    val_src.raw = &val_ids;
    val_src.stream_tag = 0x7A1u; // fixed masks: get() is only called with epoch 0
    return train_examples<T>(train_src, val_src, mcfg, tcfg, out_dir, resume_from);
}

// Training on pre-built examples (used by the coin-flip sequence task).
template <typename T>
TrainOutcome<T> train_fixed(const std::vector<TokenizedExample>& train,
                            const std::vector<TokenizedExample>& val, const ModelConfig& mcfg,
                            const TrainConfig& tcfg, const std::filesystem::path& out_dir) {
    detail::ExampleSource train_src;
    train_src.fixed = &train;
    detail::ExampleSource val_src;
    val_src.fixed = &val;
    return train_examples<T>(train_src, val_src, mcfg, tcfg, out_dir);
}

} // namespace pokerlab
