#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>
#include <omp.h>

#include "pokerlab/rng.hpp"
#include "pokerlab/tensor.hpp"

namespace pokerlab {

struct ModelConfig {
    int layers = 4;
    int heads = 4;
    int model_dim = 128;
    int mlp_dim = 512;
    int context_len = 256;
    int vocab_size = 0;
    uint64_t seed = 1;

    void validate() const {
        if (layers < 1 || heads < 1 || model_dim < 1 || mlp_dim < 1 || context_len < 1)
            throw std::invalid_argument("ModelConfig: dimensions must be positive");
        if (model_dim % heads != 0)
            throw std::invalid_argument("ModelConfig: model_dim must be divisible by heads");
        if (vocab_size < 1) throw std::invalid_argument("ModelConfig: vocab_size must be set");
    }

    int head_dim() const { return model_dim / heads; }

    nlohmann::json to_json() const {
        return {{"layers", layers},           {"heads", heads},
                {"model_dim", model_dim},     {"mlp_dim", mlp_dim},
                {"context_len", context_len}, {"vocab_size", vocab_size},
                {"seed", seed}};
    }
    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.layers = j.at("layers").get<int>();
        c.heads = j.at("heads").get<int>();
        c.model_dim = j.at("model_dim").get<int>();
        c.mlp_dim = j.at("mlp_dim").get<int>();
        c.context_len = j.at("context_len").get<int>();
        c.vocab_size = j.at("vocab_size").get<int>();
        c.seed = j.at("seed").get<uint64_t>();
        return c;
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// One padded minibatch. targets/mask are aligned to logits rows: mask[n] says
// position n's logits are scored against targets[n].
struct BatchView {
    const int32_t* ids = nullptr;
    const int32_t* targets = nullptr;
    const uint8_t* mask = nullptr;
    int batch = 0;
    int seq = 0;

    int64_t rows() const { return static_cast<int64_t>(batch) * seq; }
};

// Mean cross-entropy over masked rows; dlogits (optional) gets the gradient,
// zero at unmasked rows. All-false mask is defined as loss 0 with a warning.
template <typename T>
double masked_loss(Eigen::Map<const typename Tensor<T>::Mat> logits,
                   std::span<const int32_t> targets, std::span<const uint8_t> mask,
                   Eigen::Map<typename Tensor<T>::Mat>* dlogits = nullptr) {
    const int64_t rows = logits.rows();
    const int64_t vocab = logits.cols();
    if (static_cast<int64_t>(targets.size()) != rows || static_cast<int64_t>(mask.size()) != rows)
        throw std::invalid_argument("masked_loss: shape mismatch");
    int64_t n_mask = 0;
    for (uint8_t m : mask) n_mask += m != 0;
    if (dlogits) dlogits->setZero();
    if (n_mask == 0) {
        std::fprintf(stderr, "masked_loss: warning: empty mask, loss defined as 0\n");
        return 0.0;
    }
    std::vector<double> row_loss(static_cast<size_t>(rows), 0.0);
    const double inv = 1.0 / static_cast<double>(n_mask);
#pragma omp parallel for schedule(static)
    for (int64_t n = 0; n < rows; ++n) {
        if (!mask[static_cast<size_t>(n)]) continue;
        int32_t target = targets[static_cast<size_t>(n)];
        auto row = logits.row(n);
        double mx = static_cast<double>(row.maxCoeff());
        double sum = 0.0;
        for (int64_t v = 0; v < vocab; ++v) sum += std::exp(static_cast<double>(row[v]) - mx);
        double lse = mx + std::log(sum);
        row_loss[static_cast<size_t>(n)] = lse - static_cast<double>(row[target]);
        if (dlogits) {
            auto drow = dlogits->row(n);
            for (int64_t v = 0; v < vocab; ++v)
                drow[v] = static_cast<T>(std::exp(static_cast<double>(row[v]) - lse) * inv);
            drow[target] -= static_cast<T>(inv);
        }
    }
    double loss = 0.0;
    for (double l : row_loss) loss += l;
    return loss * inv;
}

namespace nn {

template <typename T>
using Mat = typename Tensor<T>::Mat;
template <typename T>
using MapM = Eigen::Map<Mat<T>>;
template <typename T>
using CMapM = Eigen::Map<const Mat<T>>;
template <typename T>
using StrideM = Eigen::Map<Mat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CStrideM = Eigen::Map<const Mat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
inline T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865476)));
}

template <typename T>
inline T gelu_grad(T x) {
    T cdf = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865476)));
    T pdf = std::exp(T(-0.5) * x * x) * T(0.3989422804014327);
    return cdf + x * pdf;
}

constexpr double kLnEps = 1e-5;

// y = norm(x) * g + b rowwise; saves per-row mean and reciprocal std.
template <typename T>
void layernorm_forward(CMapM<T> x, const Tensor<T>& g, const Tensor<T>& b, MapM<T> y, T* mean,
                       T* rstd) {
    const int64_t rows = x.rows(), dim = x.cols();
#pragma omp parallel for schedule(static)
    for (int64_t n = 0; n < rows; ++n) {
        T mu = x.row(n).mean();
        T var = (x.row(n).array() - mu).square().sum() / static_cast<T>(dim);
        T rs = T(1) / std::sqrt(var + static_cast<T>(kLnEps));
        mean[n] = mu;
        rstd[n] = rs;
        y.row(n) = (((x.row(n).array() - mu) * rs) * g.vec().transpose().array() +
                    b.vec().transpose().array())
                       .matrix();
    }
}

template <typename T>
void layernorm_backward(CMapM<T> x, const Tensor<T>& g, const T* mean, const T* rstd, CMapM<T> dy,
                        MapM<T> dx, Tensor<T>& dg, Tensor<T>& db) {
    const int64_t rows = x.rows(), dim = x.cols();
#pragma omp parallel for schedule(static)
    for (int64_t n = 0; n < rows; ++n) {
        auto xhat = ((x.row(n).array() - mean[n]) * rstd[n]).eval();
        auto dxhat = (dy.row(n).array() * g.vec().transpose().array()).eval();
        T m1 = dxhat.mean();
        T m2 = (dxhat * xhat).mean();
        dx.row(n) = (rstd[n] * (dxhat - m1 - xhat * m2)).matrix();
    }
    // Parameter reductions kept sequential so accumulation order is fixed.
    for (int64_t n = 0; n < rows; ++n) {
        auto xhat = ((x.row(n).array() - mean[n]) * rstd[n]).eval();
        dg.vec().array() += (dy.row(n).transpose().array() * xhat.transpose());
        db.vec().array() += dy.row(n).transpose().array();
    }
}

} // namespace nn

// GPT-style pre-norm causal transformer with explicit reverse-mode gradients.
// Templated on the float type: double for gradient-check fidelity, float for
// training throughput.
template <typename T>
class Model {
public:
    using Mat = nn::Mat<T>;
    using MapM = nn::MapM<T>;
    using CMapM = nn::CMapM<T>;

    explicit Model(ModelConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        const int64_t V = cfg_.vocab_size, D = cfg_.model_dim, M = cfg_.mlp_dim,
                      C = cfg_.context_len;
        params_.reserve(static_cast<size_t>(5 + 12 * cfg_.layers));
        params_.emplace_back("tok_emb", std::vector<int64_t>{V, D});
        params_.emplace_back("pos_emb", std::vector<int64_t>{C, D});
        for (int l = 0; l < cfg_.layers; ++l) {
            std::string p = "layer" + std::to_string(l) + ".";
            params_.emplace_back(p + "ln1.g", std::vector<int64_t>{D});
            params_.emplace_back(p + "ln1.b", std::vector<int64_t>{D});
            params_.emplace_back(p + "attn.w_qkv", std::vector<int64_t>{D, 3 * D});
            params_.emplace_back(p + "attn.b_qkv", std::vector<int64_t>{3 * D});
            params_.emplace_back(p + "attn.w_out", std::vector<int64_t>{D, D});
            params_.emplace_back(p + "attn.b_out", std::vector<int64_t>{D});
            params_.emplace_back(p + "ln2.g", std::vector<int64_t>{D});
            params_.emplace_back(p + "ln2.b", std::vector<int64_t>{D});
            params_.emplace_back(p + "mlp.w_fc", std::vector<int64_t>{D, M});
            params_.emplace_back(p + "mlp.b_fc", std::vector<int64_t>{M});
            params_.emplace_back(p + "mlp.w_proj", std::vector<int64_t>{M, D});
            params_.emplace_back(p + "mlp.b_proj", std::vector<int64_t>{D});
        }
        params_.emplace_back("ln_f.g", std::vector<int64_t>{D});
        params_.emplace_back("ln_f.b", std::vector<int64_t>{D});
        params_.emplace_back("unembed", std::vector<int64_t>{D, V});
        init_weights();
    }

    const ModelConfig& config() const { return cfg_; }
    std::vector<ParamBlock<T>>& params() { return params_; }
    const std::vector<ParamBlock<T>>& params() const { return params_; }

    ParamBlock<T>& param(const std::string& name) {
        for (auto& p : params_) {
            if (p.name == name) return p;
        }
        throw std::out_of_range("Model: no parameter named " + name);
    }

    int64_t num_params() const {
        int64_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    void zero_grads() {
        for (auto& p : params_) p.grad.set_zero();
    }

    // Forward pass plus masked loss; caches everything backward() needs.
    double forward_loss(const BatchView& batch) {
        run_forward(batch);
        Eigen::Map<const Mat> logits(ws_.logits.data(), rows_, cfg_.vocab_size);
        Eigen::Map<Mat> dlogits(ws_.d_logits.data(), rows_, cfg_.vocab_size);
        return masked_loss<T>(logits, {batch.targets, static_cast<size_t>(rows_)},
                              {batch.mask, static_cast<size_t>(rows_)}, &dlogits);
    }

    // Accumulates parameter gradients (scaled by grad_scale) for the batch
    // last passed to forward_loss.
    void backward(const BatchView& batch, double grad_scale = 1.0) {
        const int64_t D = cfg_.model_dim, M = cfg_.mlp_dim, V = cfg_.vocab_size;
        const int64_t N = rows_;
        const int B = batch.batch, S = batch.seq;

        Eigen::Map<Mat> dlogits(ws_.d_logits.data(), N, V);
        if (grad_scale != 1.0) dlogits *= static_cast<T>(grad_scale);

        // unembed and final layernorm
        Mat lnf_out(N, D);
        {
            CMapM x(layer_out(cfg_.layers - 1), N, D);
            nn::layernorm_forward<T>(x, param_ref(lnf_g_).value, param_ref(lnf_b_).value,
                                     MapM(lnf_out.data(), N, D), ws_.lnf_mean.data(),
                                     ws_.lnf_rstd.data());
        }
        param_ref(unembed_).grad.mat().noalias() += lnf_out.transpose() * dlogits;
        Mat d_lnf = dlogits * param_ref(unembed_).value.mat().transpose();
        Mat d_res(N, D);
        {
            CMapM x(layer_out(cfg_.layers - 1), N, D);
            nn::layernorm_backward<T>(x, param_ref(lnf_g_).value, ws_.lnf_mean.data(),
                                      ws_.lnf_rstd.data(), CMapM(d_lnf.data(), N, D),
                                      MapM(d_res.data(), N, D), param_ref(lnf_g_).grad,
                                      param_ref(lnf_b_).grad);
        }

        Mat d_mid(N, M), d_dn(N, D), d_qkv(N, 3 * D), d_mix(N, D);
        for (int l = cfg_.layers - 1; l >= 0; --l) {
            auto& lw = layer_ws_[static_cast<size_t>(l)];
            const T* res_in = l == 0 ? ws_.x0.data() : layer_out(l - 1);

            // MLP branch: res2 = res1 + gelu(ln2(res1) @ w_fc + b_fc) @ w_proj + b_proj
            {
                CMapM fc(lw.fc.data(), N, M);
                Mat gelu_out =
                    fc.unaryExpr([](T v) { return nn::gelu(v); }); // recomputed, not stored
                param_ref(p_idx(l, 10)).grad.mat().noalias() +=
                    gelu_out.transpose() * d_res; // w_proj
                param_ref(p_idx(l, 11)).grad.vec() += d_res.colwise().sum(); // b_proj
                d_mid.noalias() = d_res * param_ref(p_idx(l, 10)).value.mat().transpose();
                d_mid.array() *= fc.unaryExpr([](T v) { return nn::gelu_grad(v); }).array();

                // back through fc linear
                Mat ln2_out(N, D);
                CMapM res1(lw.res1.data(), N, D);
                nn::layernorm_forward<T>(res1, param_ref(p_idx(l, 6)).value, param_ref(p_idx(l, 7)).value,
                                         MapM(ln2_out.data(), N, D), lw.ln2_mean.data(),
                                         lw.ln2_rstd.data());
                param_ref(p_idx(l, 8)).grad.mat().noalias() += ln2_out.transpose() * d_mid; // w_fc
                param_ref(p_idx(l, 9)).grad.vec() += d_mid.colwise().sum();                 // b_fc
                d_dn.noalias() = d_mid * param_ref(p_idx(l, 8)).value.mat().transpose();
                Mat d_res1(N, D);
                nn::layernorm_backward<T>(res1, param_ref(p_idx(l, 6)).value, lw.ln2_mean.data(),
                                          lw.ln2_rstd.data(), CMapM(d_dn.data(), N, D),
                                          MapM(d_res1.data(), N, D), param_ref(p_idx(l, 6)).grad,
                                          param_ref(p_idx(l, 7)).grad);
                d_res += d_res1; // residual add
            }

            // Attention branch: res1 = x + (heads(ln1(x)) concat) @ w_out + b_out
            {
                CMapM mix(lw.att_mix.data(), N, D);
                param_ref(p_idx(l, 4)).grad.mat().noalias() += mix.transpose() * d_res; // w_out
                param_ref(p_idx(l, 5)).grad.vec() += d_res.colwise().sum();             // b_out
                d_mix.noalias() = d_res * param_ref(p_idx(l, 4)).value.mat().transpose();

                attention_backward(l, B, S, d_mix, d_qkv);

                Mat ln1_out(N, D);
                CMapM x(res_in, N, D);
                nn::layernorm_forward<T>(x, param_ref(p_idx(l, 0)).value, param_ref(p_idx(l, 1)).value,
                                         MapM(ln1_out.data(), N, D), lw.ln1_mean.data(),
                                         lw.ln1_rstd.data());
                param_ref(p_idx(l, 2)).grad.mat().noalias() +=
                    ln1_out.transpose() * d_qkv;                                // w_qkv
                param_ref(p_idx(l, 3)).grad.vec() += d_qkv.colwise().sum();     // b_qkv
                d_dn.noalias() = d_qkv * param_ref(p_idx(l, 2)).value.mat().transpose();
                Mat d_x(N, D);
                nn::layernorm_backward<T>(x, param_ref(p_idx(l, 0)).value, lw.ln1_mean.data(),
                                          lw.ln1_rstd.data(), CMapM(d_dn.data(), N, D),
                                          MapM(d_x.data(), N, D), param_ref(p_idx(l, 0)).grad,
                                          param_ref(p_idx(l, 1)).grad);
                d_res += d_x;
            }
        }

        // Embedding scatter (sequential: multiple rows share a token id).
        auto& tok_grad = param_ref(tok_emb_).grad;
        auto& pos_grad = param_ref(pos_emb_).grad;
        for (int64_t n = 0; n < N; ++n) {
            int32_t id = batch.ids[n];
            tok_grad.mat().row(id) += d_res.row(n);
            pos_grad.mat().row(n % S) += d_res.row(n);
        }
    }

    // Single-sequence logits, shape [len, vocab].
    Tensor<T> forward(std::span<const int32_t> ids) {
        BatchView b = single_view(ids);
        run_forward(b);
        Tensor<T> out = Tensor<T>::zeros({static_cast<int64_t>(ids.size()), cfg_.vocab_size});
        std::copy(ws_.logits.begin(),
                  ws_.logits.begin() + out.size(), out.data.begin());
        return out;
    }

    // Post-block residual vectors for one sequence: out[k] is layer
    // layers_req[k] as a [len, D] matrix.
    std::vector<Mat> residual_streams(std::span<const int32_t> ids,
                                      std::span<const int> layers_req) {
        BatchView b = single_view(ids);
        run_forward(b);
        std::vector<Mat> out;
        for (int l : layers_req) {
            if (l < 0 || l >= cfg_.layers) throw std::out_of_range("residual_streams: bad layer");
            out.emplace_back(CMapM(layer_out(l), static_cast<int64_t>(ids.size()), cfg_.model_dim));
        }
        return out;
    }

    // Residual streams for a whole padded batch (ids only; targets/mask may be
    // null). One [B*S, D] matrix per requested layer.
    std::vector<Mat> capture_batch(const BatchView& batch, std::span<const int> layers_req) {
        run_forward(batch);
        std::vector<Mat> out;
        for (int l : layers_req) {
            if (l < 0 || l >= cfg_.layers) throw std::out_of_range("capture_batch: bad layer");
            out.emplace_back(CMapM(layer_out(l), rows_, cfg_.model_dim));
        }
        return out;
    }

    // Resume the stack from a captured layer-l state. Bitwise-identical to the
    // tail of a normal single-sequence forward.
    Tensor<T> forward_from_layer(int layer, const Mat& state) {
        if (layer < 0 || layer >= cfg_.layers) throw std::out_of_range("forward_from_layer");
        const int64_t N = state.rows(), D = cfg_.model_dim;
        if (state.cols() != D) throw std::invalid_argument("forward_from_layer: bad state width");
        ensure_workspace(1, static_cast<int>(N));
        rows_ = N;
        std::copy(state.data(), state.data() + N * D, layer_out_mut(layer));
        for (int l = layer + 1; l < cfg_.layers; ++l) block_forward(l, 1, static_cast<int>(N));
        final_logits();
        Tensor<T> out = Tensor<T>::zeros({N, cfg_.vocab_size});
        std::copy(ws_.logits.begin(), ws_.logits.begin() + out.size(), out.data.begin());
        return out;
    }

    bool grads_finite() const {
        for (const auto& p : params_) {
            if (!p.grad.all_finite()) return false;
        }
        return true;
    }

private:
    ModelConfig cfg_;
    std::vector<ParamBlock<T>> params_;

    // fixed parameter indices
    static constexpr int tok_emb_ = 0;
    static constexpr int pos_emb_ = 1;
    int p_idx(int layer, int off) const { return 2 + layer * 12 + off; }
    int lnf_g_ = 0, lnf_b_ = 0, unembed_ = 0; // set in init_weights

    ParamBlock<T>& param_ref(int idx) { return params_[static_cast<size_t>(idx)]; }
    const ParamBlock<T>& param_ref(int idx) const { return params_[static_cast<size_t>(idx)]; }

    struct LayerWs {
        AlignedVec<T> ln1_mean, ln1_rstd, ln2_mean, ln2_rstd;
        AlignedVec<T> qkv;     // [N, 3D]
        AlignedVec<T> att;     // [B*H, T, T] softmax probabilities
        AlignedVec<T> att_mix; // [N, D] concatenated head outputs
        AlignedVec<T> res1;    // [N, D]
        AlignedVec<T> fc;      // [N, M] pre-activation
        AlignedVec<T> res2;    // [N, D] block output
    };
    struct Ws {
        AlignedVec<T> x0; // [N, D] embeddings
        AlignedVec<T> ln_buf;
        AlignedVec<T> lnf_mean, lnf_rstd;
        AlignedVec<T> logits, d_logits;
        AlignedVec<T> d_att;
        std::vector<int32_t> ids1; // single-sequence scratch
    };
    std::vector<LayerWs> layer_ws_;
    Ws ws_;
    int64_t rows_ = 0;

    const T* layer_out(int l) const { return layer_ws_[static_cast<size_t>(l)].res2.data(); }
    T* layer_out_mut(int l) { return layer_ws_[static_cast<size_t>(l)].res2.data(); }

    void init_weights() {
        lnf_g_ = 2 + cfg_.layers * 12;
        lnf_b_ = lnf_g_ + 1;
        unembed_ = lnf_b_ + 1;
        Rng rng(derive_seed(cfg_.seed, 0x1417u));
        const T base_std = T(0.02);
        const T resid_std = static_cast<T>(0.02 / std::sqrt(2.0 * cfg_.layers));
        for (auto& p : params_) {
            bool is_ln_gain = p.name.ends_with("ln1.g") || p.name.ends_with("ln2.g") ||
                              p.name.ends_with("ln_f.g");
            bool is_bias = p.name.ends_with(".b") || p.name.ends_with("b_qkv") ||
                           p.name.ends_with("b_out") || p.name.ends_with("b_fc") ||
                           p.name.ends_with("b_proj");
            bool is_resid_proj =
                p.name.ends_with("attn.w_out") || p.name.ends_with("mlp.w_proj");
            if (is_ln_gain) {
                std::fill(p.value.data.begin(), p.value.data.end(), T(1));
            } else if (is_bias) {
                // leave zero
            } else {
                T std = is_resid_proj ? resid_std : base_std;
                for (T& v : p.value.data) v = static_cast<T>(rng.normal()) * std;
            }
        }
    }

    BatchView single_view(std::span<const int32_t> ids) {
        if (ids.empty()) throw std::invalid_argument("forward: empty sequence");
        ws_.ids1.assign(ids.begin(), ids.end());
        BatchView b;
        b.ids = ws_.ids1.data();
        b.batch = 1;
        b.seq = static_cast<int>(ids.size());
        return b;
    }

    void ensure_workspace(int B, int S) {
        if (S > cfg_.context_len)
            throw std::invalid_argument("forward: sequence length " + std::to_string(S) +
                                        " exceeds context_len " +
                                        std::to_string(cfg_.context_len));
        const int64_t N = static_cast<int64_t>(B) * S;
        const int64_t D = cfg_.model_dim, M = cfg_.mlp_dim, V = cfg_.vocab_size;
        const int64_t att = static_cast<int64_t>(B) * cfg_.heads * S * S;
        layer_ws_.resize(static_cast<size_t>(cfg_.layers));
        for (auto& lw : layer_ws_) {
            lw.ln1_mean.resize(static_cast<size_t>(N));
            lw.ln1_rstd.resize(static_cast<size_t>(N));
            lw.ln2_mean.resize(static_cast<size_t>(N));
            lw.ln2_rstd.resize(static_cast<size_t>(N));
            lw.qkv.resize(static_cast<size_t>(N * 3 * D));
            lw.att.resize(static_cast<size_t>(att));
            lw.att_mix.resize(static_cast<size_t>(N * D));
            lw.res1.resize(static_cast<size_t>(N * D));
            lw.fc.resize(static_cast<size_t>(N * M));
            lw.res2.resize(static_cast<size_t>(N * D));
        }
        ws_.x0.resize(static_cast<size_t>(N * D));
        ws_.ln_buf.resize(static_cast<size_t>(N * D));
        ws_.lnf_mean.resize(static_cast<size_t>(N));
        ws_.lnf_rstd.resize(static_cast<size_t>(N));
        ws_.logits.resize(static_cast<size_t>(N * V));
        ws_.d_logits.resize(static_cast<size_t>(N * V));
        ws_.d_att.resize(static_cast<size_t>(att));
    }

    void run_forward(const BatchView& batch) {
        const int B = batch.batch, S = batch.seq;
        ensure_workspace(B, S);
        const int64_t N = static_cast<int64_t>(B) * S;
        rows_ = N;
        const int64_t D = cfg_.model_dim;

        MapM x0(ws_.x0.data(), N, D);
        auto tok = param_ref(tok_emb_).value.mat();
        auto pos = param_ref(pos_emb_).value.mat();
        for (int64_t n = 0; n < N; ++n) {
            int32_t id = batch.ids[n];
            if (id < 0 || id >= cfg_.vocab_size)
                throw std::invalid_argument("forward: token id out of range");
            x0.row(n) = tok.row(id) + pos.row(n % S);
        }
        for (int l = 0; l < cfg_.layers; ++l) block_forward(l, B, S);
        final_logits();
    }

    void block_forward(int l, int B, int S) {
        const int64_t N = static_cast<int64_t>(B) * S;
        const int64_t D = cfg_.model_dim, M = cfg_.mlp_dim;
        auto& lw = layer_ws_[static_cast<size_t>(l)];
        const T* res_in = l == 0 ? ws_.x0.data() : layer_out(l - 1);
        CMapM x(res_in, N, D);

        MapM ln1_out(ws_.ln_buf.data(), N, D);
        nn::layernorm_forward<T>(x, param_ref(p_idx(l, 0)).value, param_ref(p_idx(l, 1)).value, ln1_out,
                                 lw.ln1_mean.data(), lw.ln1_rstd.data());
        MapM qkv(lw.qkv.data(), N, 3 * D);
        qkv.noalias() = ln1_out * param_ref(p_idx(l, 2)).value.mat();
        qkv.rowwise() += param_ref(p_idx(l, 3)).value.vec().transpose();

        attention_forward(l, B, S);

        CMapM mix(lw.att_mix.data(), N, D);
        MapM res1(lw.res1.data(), N, D);
        res1.noalias() = mix * param_ref(p_idx(l, 4)).value.mat();
        res1.rowwise() += param_ref(p_idx(l, 5)).value.vec().transpose();
        res1 += x;

        MapM ln2_out(ws_.ln_buf.data(), N, D);
        nn::layernorm_forward<T>(CMapM(lw.res1.data(), N, D), param_ref(p_idx(l, 6)).value,
                                 param_ref(p_idx(l, 7)).value, ln2_out, lw.ln2_mean.data(),
                                 lw.ln2_rstd.data());
        MapM fc(lw.fc.data(), N, M);
        fc.noalias() = ln2_out * param_ref(p_idx(l, 8)).value.mat();
        fc.rowwise() += param_ref(p_idx(l, 9)).value.vec().transpose();

        MapM res2(lw.res2.data(), N, D);
        // gelu computed on the fly; fc keeps pre-activation values for backward
        res2.noalias() =
            fc.unaryExpr([](T v) { return nn::gelu(v); }) * param_ref(p_idx(l, 10)).value.mat();
        res2.rowwise() += param_ref(p_idx(l, 11)).value.vec().transpose();
        res2 += CMapM(lw.res1.data(), N, D);
    }

    void attention_forward(int l, int B, int S) {
        const int64_t D = cfg_.model_dim;
        const int H = cfg_.heads;
        const int64_t hd = cfg_.head_dim();
        const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));
        auto& lw = layer_ws_[static_cast<size_t>(l)];

#pragma omp parallel for collapse(2) schedule(static)
        for (int b = 0; b < B; ++b) {
            for (int h = 0; h < H; ++h) {
                const T* base = lw.qkv.data() + static_cast<int64_t>(b) * S * 3 * D;
                nn::CStrideM<T> Q(base + static_cast<int64_t>(h) * hd, S, hd,
                                  Eigen::OuterStride<>(3 * D));
                nn::CStrideM<T> K(base + D + static_cast<int64_t>(h) * hd, S, hd,
                                  Eigen::OuterStride<>(3 * D));
                nn::CStrideM<T> V(base + 2 * D + static_cast<int64_t>(h) * hd, S, hd,
                                  Eigen::OuterStride<>(3 * D));
                MapM P(lw.att.data() + (static_cast<int64_t>(b) * H + h) * S * S, S, S);
                P.noalias() = Q * K.transpose() * scale;
                for (int i = 0; i < S; ++i) {
                    auto row = P.row(i).head(i + 1);
                    T mx = row.maxCoeff();
                    row = (row.array() - mx).exp();
                    row /= row.sum();
                    if (i + 1 < S) P.row(i).tail(S - i - 1).setZero();
                }
                nn::StrideM<T> O(lw.att_mix.data() + static_cast<int64_t>(b) * S * D +
                                     static_cast<int64_t>(h) * hd,
                                 S, hd, Eigen::OuterStride<>(D));
                O.noalias() = P * V;
            }
        }
    }

    void attention_backward(int l, int B, int S, const Mat& d_mix, Mat& d_qkv) {
        const int64_t D = cfg_.model_dim;
        const int H = cfg_.heads;
        const int64_t hd = cfg_.head_dim();
        const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));
        auto& lw = layer_ws_[static_cast<size_t>(l)];

#pragma omp parallel for collapse(2) schedule(static)
        for (int b = 0; b < B; ++b) {
            for (int h = 0; h < H; ++h) {
                const T* base = lw.qkv.data() + static_cast<int64_t>(b) * S * 3 * D;
                T* dbase = d_qkv.data() + static_cast<int64_t>(b) * S * 3 * D;
                nn::CStrideM<T> Q(base + static_cast<int64_t>(h) * hd, S, hd,
                                  Eigen::OuterStride<>(3 * D));
                nn::CStrideM<T> K(base + D + static_cast<int64_t>(h) * hd, S, hd,
                                  Eigen::OuterStride<>(3 * D));
                nn::CStrideM<T> V(base + 2 * D + static_cast<int64_t>(h) * hd, S, hd,
                                  Eigen::OuterStride<>(3 * D));
                nn::StrideM<T> dQ(dbase + static_cast<int64_t>(h) * hd, S, hd,
                                  Eigen::OuterStride<>(3 * D));
                nn::StrideM<T> dK(dbase + D + static_cast<int64_t>(h) * hd, S, hd,
                                  Eigen::OuterStride<>(3 * D));
                nn::StrideM<T> dV(dbase + 2 * D + static_cast<int64_t>(h) * hd, S, hd,
                                  Eigen::OuterStride<>(3 * D));
                CMapM P(lw.att.data() + (static_cast<int64_t>(b) * H + h) * S * S, S, S);
                MapM dP(ws_.d_att.data() + (static_cast<int64_t>(b) * H + h) * S * S, S, S);
                nn::CStrideM<T> dO(d_mix.data() + static_cast<int64_t>(b) * S * D +
                                       static_cast<int64_t>(h) * hd,
                                   S, hd, Eigen::OuterStride<>(D));
                dP.noalias() = dO * V.transpose();
                for (int i = 0; i < S; ++i) {
                    auto p = P.row(i).array();
                    auto dp = dP.row(i).array();
                    T dot = (p * dp).sum();
                    dP.row(i) = (p * (dp - dot) * scale).matrix();
                }
                dQ.noalias() = dP * K;
                dK.noalias() = dP.transpose() * Q;
                dV.noalias() = P.transpose() * dO;
            }
        }
    }

    void final_logits() {
        const int64_t N = rows_, D = cfg_.model_dim, V = cfg_.vocab_size;
        MapM lnf_out(ws_.ln_buf.data(), N, D);
        nn::layernorm_forward<T>(CMapM(layer_out(cfg_.layers - 1), N, D), param_ref(lnf_g_).value,
                                 param_ref(lnf_b_).value, lnf_out, ws_.lnf_mean.data(),
                                 ws_.lnf_rstd.data());
        MapM logits(ws_.logits.data(), N, V);
        logits.noalias() = lnf_out * param_ref(unembed_).value.mat();
    }
};

// Bias-corrected AdamW with decoupled weight decay.
template <typename T>
class AdamW {
public:
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.0;

    explicit AdamW(std::vector<ParamBlock<T>>& params) {
        for (auto& p : params) {
            m_.push_back(Tensor<T>::zeros(p.value.shape));
            v_.push_back(Tensor<T>::zeros(p.value.shape));
        }
    }

    int64_t step_count() const { return step_; }
    std::vector<Tensor<T>>& moments_m() { return m_; }
    std::vector<Tensor<T>>& moments_v() { return v_; }
    const std::vector<Tensor<T>>& moments_m() const { return m_; }
    const std::vector<Tensor<T>>& moments_v() const { return v_; }
    void set_step_count(int64_t s) { step_ = s; }

    void step(std::vector<ParamBlock<T>>& params) {
        if (params.size() != m_.size()) throw std::invalid_argument("AdamW: parameter set changed");
        ++step_;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
        for (size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i];
            T* w = p.value.data.data();
            const T* g = p.grad.data.data();
            T* m = m_[i].data.data();
            T* v = v_[i].data.data();
            const int64_t n = p.value.size();
#pragma omp parallel for schedule(static)
            for (int64_t k = 0; k < n; ++k) {
                double gk = static_cast<double>(g[k]);
                double mk = beta1 * static_cast<double>(m[k]) + (1.0 - beta1) * gk;
                double vk = beta2 * static_cast<double>(v[k]) + (1.0 - beta2) * gk * gk;
                m[k] = static_cast<T>(mk);
                v[k] = static_cast<T>(vk);
                double update = (mk / bc1) / (std::sqrt(vk / bc2) + eps);
                double wk = static_cast<double>(w[k]);
                w[k] = static_cast<T>(wk - lr * (update + weight_decay * wk));
            }
        }
    }

private:
    int64_t step_ = 0;
    std::vector<Tensor<T>> m_;
    std::vector<Tensor<T>> v_;
};

// --- checkpoint files --------------------------------------------------------
//
// Layout: magic "PLABCKPT" | u32 version | u32 scalar bytes | u64 header length
// | header JSON | raw little-endian tensor payload. The header indexes every
// tensor by name/shape/offset; optimizer moments ride along as "opt.m.<name>"
// and "opt.v.<name>".

inline constexpr char kCkptMagic[8] = {'P', 'L', 'A', 'B', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCkptVersion = 1;

struct CheckpointInfo {
    ModelConfig config;
    int scalar_bytes = 0;
    nlohmann::json extra;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model,
                     const AdamW<T>* opt = nullptr,
                     const nlohmann::json& extra = nlohmann::json::object()) {
    nlohmann::json header;
    header["version"] = kCkptVersion;
    header["config"] = model.config().to_json();
    header["extra"] = extra;
    nlohmann::json tensors = nlohmann::json::array();
    uint64_t offset = 0;
    auto add = [&](const std::string& name, const Tensor<T>& t) {
        tensors.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
        offset += static_cast<uint64_t>(t.size()) * sizeof(T);
    };
    for (const auto& p : model.params()) add(p.name, p.value);
    if (opt) {
        const auto& m = opt->moments_m();
        const auto& v = opt->moments_v();
        for (size_t i = 0; i < model.params().size(); ++i) {
            add("opt.m." + model.params()[i].name, m[i]);
            add("opt.v." + model.params()[i].name, v[i]);
        }
        header["extra"]["opt_step"] = opt->step_count();
    }
    header["tensors"] = tensors;
    std::string hjson = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
    out.write(kCkptMagic, 8);
    uint32_t version = kCkptVersion, sb = sizeof(T);
    uint64_t hlen = hjson.size();
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&sb), 4);
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(hjson.data(), static_cast<std::streamsize>(hjson.size()));
    for (const auto& p : model.params())
        out.write(reinterpret_cast<const char*>(p.value.data.data()),
                  static_cast<std::streamsize>(p.value.size() * sizeof(T)));
    if (opt) {
        const auto& m = opt->moments_m();
        const auto& v = opt->moments_v();
        for (size_t i = 0; i < model.params().size(); ++i) {
            out.write(reinterpret_cast<const char*>(m[i].data.data()),
                      static_cast<std::streamsize>(m[i].size() * sizeof(T)));
            out.write(reinterpret_cast<const char*>(v[i].data.data()),
                      static_cast<std::streamsize>(v[i].size() * sizeof(T)));
        }
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

namespace detail {

struct RawCheckpoint {
    nlohmann::json header;
    std::vector<char> payload;
    int scalar_bytes = 0;
};

inline RawCheckpoint read_checkpoint_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
    char magic[8];
    uint32_t version = 0, sb = 0;
    uint64_t hlen = 0;
    in.read(magic, 8);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&sb), 4);
    in.read(reinterpret_cast<char*>(&hlen), 8);
    if (!in || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw std::runtime_error("load_checkpoint: not a checkpoint file: " + path.string());
    if (version != kCkptVersion)
        throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version));
    if (sb != 4 && sb != 8)
        throw std::runtime_error("load_checkpoint: unsupported scalar width");
    std::string hjson(hlen, '\0');
    in.read(hjson.data(), static_cast<std::streamsize>(hlen));
    RawCheckpoint raw;
    raw.header = nlohmann::json::parse(hjson);
    raw.scalar_bytes = static_cast<int>(sb);
    raw.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return raw;
}

} // namespace detail

inline CheckpointInfo peek_checkpoint(const std::filesystem::path& path) {
    auto raw = detail::read_checkpoint_file(path);
    CheckpointInfo info;
    info.config = ModelConfig::from_json(raw.header.at("config"));
    info.scalar_bytes = raw.scalar_bytes;
    info.extra = raw.header.value("extra", nlohmann::json::object());
    return info;
}

// Fills an already-constructed model (and optionally optimizer moments) from
// a checkpoint whose config must match the model's.
template <typename T>
void load_into(const std::filesystem::path& path, Model<T>& model, AdamW<T>* opt = nullptr,
               nlohmann::json* extra_out = nullptr) {
    auto raw = detail::read_checkpoint_file(path);
    ModelConfig cfg = ModelConfig::from_json(raw.header.at("config"));
    if (!(cfg == model.config()))
        throw std::runtime_error("load_checkpoint: config mismatch for " + path.string());

    std::map<std::string, std::pair<uint64_t, std::vector<int64_t>>> index;
    for (const auto& t : raw.header.at("tensors"))
        index[t.at("name").get<std::string>()] = {t.at("offset").get<uint64_t>(),
                                                  t.at("shape").get<std::vector<int64_t>>()};

    auto fill = [&](const std::string& name, Tensor<T>& dst) {
        auto it = index.find(name);
        if (it == index.end())
            throw std::runtime_error("load_checkpoint: missing tensor " + name);
        if (it->second.second != dst.shape)
            throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
        const char* src = raw.payload.data() + it->second.first;
        const int64_t n = dst.size();
        if (it->second.first + static_cast<uint64_t>(n) * raw.scalar_bytes > raw.payload.size())
            throw std::runtime_error("load_checkpoint: truncated payload at " + name);
        if (raw.scalar_bytes == static_cast<int>(sizeof(T))) {
            std::memcpy(dst.data.data(), src, static_cast<size_t>(n) * sizeof(T));
        } else if (raw.scalar_bytes == 4) {
            const float* f = reinterpret_cast<const float*>(src);
            for (int64_t i = 0; i < n; ++i) dst.data[static_cast<size_t>(i)] = static_cast<T>(f[i]);
        } else {
            const double* d = reinterpret_cast<const double*>(src);
            for (int64_t i = 0; i < n; ++i) dst.data[static_cast<size_t>(i)] = static_cast<T>(d[i]);
        }
    };

    for (auto& p : model.params()) fill(p.name, p.value);
    if (opt) {
        for (size_t i = 0; i < model.params().size(); ++i) {
            fill("opt.m." + model.params()[i].name, opt->moments_m()[i]);
            fill("opt.v." + model.params()[i].name, opt->moments_v()[i]);
        }
        auto extra = raw.header.value("extra", nlohmann::json::object());
        opt->set_step_count(extra.value("opt_step", int64_t{0}));
    }
    if (extra_out) *extra_out = raw.header.value("extra", nlohmann::json::object());
}

template <typename T>
Model<T> load_model(const std::filesystem::path& path, AdamW<T>* opt = nullptr,
                    nlohmann::json* extra_out = nullptr) {
    auto raw = detail::read_checkpoint_file(path);
    Model<T> model(ModelConfig::from_json(raw.header.at("config")));
    load_into(path, model, opt, extra_out);
    return model;
}

} // namespace pokerlab
