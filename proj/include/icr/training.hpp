#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "icr/classifier.hpp"
#include "icr/dataset.hpp"
#include "icr/embedding_store.hpp"
#include "icr/error.hpp"
#include "icr/evaluation.hpp"
#include "icr/util.hpp"

namespace icr {

struct TrainConfig {
    double learning_rate = 0.003;
    int batch_size = 128;
    int grad_accumulation = 25;
    double grad_clip = 1.0;
    double gamma = 0.99;
    /// Searched alongside the other values but has no effect under the exponential scheduler.
    int lr_step = 2;
    double positive_class_weight = 2.6125454767515217;
    double weight_decay = 1e-4;
    int max_epochs = 20;
    std::uint64_t seed = 35466;
    double decision_threshold = 0.5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void check() const {
        if (!(learning_rate > 0) || batch_size <= 0 || grad_accumulation <= 0 || !(grad_clip > 0) || !(gamma > 0) ||
            !(positive_class_weight > 0) || weight_decay < 0 || max_epochs <= 0)
            throw Error("training configuration values must be positive");
        if (!(decision_threshold > 0 && decision_threshold < 1)) throw Error("decision threshold must lie in (0,1)");
    }

    nlohmann::json to_json() const {
        return {{"learning_rate", learning_rate},
                {"batch_size", batch_size},
                {"grad_accumulation", grad_accumulation},
                {"grad_clip", grad_clip},
                {"gamma", gamma},
                {"lr_step", lr_step},
                {"positive_class_weight", positive_class_weight},
                {"weight_decay", weight_decay},
                {"max_epochs", max_epochs},
                {"seed", seed},
                {"decision_threshold", decision_threshold},
                {"adam_beta1", adam_beta1},
                {"adam_beta2", adam_beta2},
                {"adam_eps", adam_eps}};
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.grad_accumulation = j.value("grad_accumulation", c.grad_accumulation);
        c.grad_clip = j.value("grad_clip", c.grad_clip);
        c.gamma = j.value("gamma", c.gamma);
        c.lr_step = j.value("lr_step", c.lr_step);
        c.positive_class_weight = j.value("positive_class_weight", c.positive_class_weight);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.seed = j.value("seed", c.seed);
        c.decision_threshold = j.value("decision_threshold", c.decision_threshold);
        c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
        c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
        c.adam_eps = j.value("adam_eps", c.adam_eps);
        return c;
    }
};

/// Stores for each input; the image store is keyed by Datapoint::scene_key, the text stores
/// by Datapoint::key("msg") and Datapoint::key("ctx").
struct InputStores {
    const EmbeddingStore* image = nullptr;
    const EmbeddingStore* message = nullptr;
    const EmbeddingStore* context = nullptr;
};

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    int optimizer_steps = 0;
    double learning_rate = 0.0;
    std::optional<double> val_ap;
    double val_macro_f1 = 0.0;
};

inline nlohmann::json to_json(const EpochMetrics& m) {
    return {{"epoch", m.epoch},
            {"train_loss", m.train_loss},
            {"optimizer_steps", m.optimizer_steps},
            {"learning_rate", m.learning_rate},
            {"val_ap", m.val_ap ? nlohmann::json(*m.val_ap) : nlohmann::json(nullptr)},
            {"val_macro_f1", m.val_macro_f1}};
}

struct Checkpoint {
    Classifier<float> model;
    TrainConfig train;
    int epoch = 0;
    std::optional<double> val_ap;
};

struct TrainResult {
    Checkpoint best;
    std::vector<EpochMetrics> history;
};

namespace detail {

/// Per-datapoint embedding rows for each enabled input.
struct ResolvedInputs {
    std::vector<Input> inputs;
    std::vector<std::vector<const float*>> rows;  // rows[input][datapoint]
    std::vector<int> dims;
    std::size_t size = 0;
};

inline const EmbeddingStore* store_for(const InputStores& s, Input i) {
    switch (i) {
        case Input::Image: return s.image;
        case Input::Message: return s.message;
        case Input::Context: return s.context;
    }
    return nullptr;
}

inline std::string key_for(const Datapoint& dp, Input i) {
    switch (i) {
        case Input::Image: return dp.scene_key;
        case Input::Message: return dp.key("msg");
        case Input::Context: return dp.key("ctx");
    }
    return {};
}

inline ResolvedInputs resolve_inputs(const std::vector<Datapoint>& dps, const InputStores& stores,
                                     const ClassifierConfig& cfg) {
    ResolvedInputs r;
    r.inputs = cfg.inputs();
    r.size = dps.size();
    std::vector<std::string> missing;
    std::set<std::string> seen;
    for (auto in : r.inputs) {
        const EmbeddingStore* store = store_for(stores, in);
        if (!store) throw Error("no embedding store given for input '" + std::string(input_name(in)) + "'");
        if (store->dim() != static_cast<std::size_t>(cfg.input_dim(in)))
            throw DimMismatch("store for input '" + std::string(input_name(in)) + "' has dim " +
                              std::to_string(store->dim()) + ", model expects " + std::to_string(cfg.input_dim(in)));
        std::vector<const float*> rows(dps.size(), nullptr);
        for (std::size_t k = 0; k < dps.size(); ++k) {
            std::string key = key_for(dps[k], in);
            auto v = store->find(key);
            if (v.empty()) {
                if (seen.insert(key).second) missing.push_back(std::move(key));
            } else {
                rows[k] = v.data();
            }
        }
        r.rows.push_back(std::move(rows));
        r.dims.push_back(cfg.input_dim(in));
    }
    if (!missing.empty()) throw MissingEmbedding(std::move(missing));
    return r;
}

template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> gather(const ResolvedInputs& r, std::size_t input,
                                                             std::span<const std::size_t> idx) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> m(r.dims[input], static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
        const float* row = r.rows[input][idx[j]];
        for (int i = 0; i < r.dims[input]; ++i) m(i, static_cast<Eigen::Index>(j)) = static_cast<Scalar>(row[i]);
    }
    return m;
}

/// Batch matrices plus the Inputs view over them.
template <class Scalar>
struct Batch {
    std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> mats;
    typename Classifier<Scalar>::Inputs view;

    Batch(const ResolvedInputs& r, std::span<const std::size_t> idx) {
        mats.reserve(r.inputs.size());
        for (std::size_t k = 0; k < r.inputs.size(); ++k) mats.push_back(gather<Scalar>(r, k, idx));
        for (std::size_t k = 0; k < r.inputs.size(); ++k) {
            switch (r.inputs[k]) {
                case Input::Image: view.image = &mats[k]; break;
                case Input::Message: view.message = &mats[k]; break;
                case Input::Context: view.context = &mats[k]; break;
            }
        }
    }
};

inline std::vector<double> predict_resolved(Classifier<float>& model, const ResolvedInputs& r, int batch_size) {
    std::vector<double> scores;
    scores.reserve(r.size);
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < r.size; start += static_cast<std::size_t>(batch_size)) {
        idx.resize(std::min(static_cast<std::size_t>(batch_size), r.size - start));
        std::iota(idx.begin(), idx.end(), start);
        Batch<float> b(r, idx);
        auto p = model.predict_proba(b.view);
        scores.insert(scores.end(), p.begin(), p.end());
    }
    return scores;
}

/// Adam with coupled weight decay (added to the gradient) and bias-corrected moments.
class Adam {
public:
    using Matrix = Eigen::MatrixXf;

    Adam(const std::vector<Matrix>& params, const TrainConfig& cfg) : cfg_(cfg) {
        for (const auto& p : params) {
            m_.push_back(Matrix::Zero(p.rows(), p.cols()));
            v_.push_back(Matrix::Zero(p.rows(), p.cols()));
        }
    }

    void step(std::vector<Matrix>& params, std::vector<Matrix>& grads, double lr) {
        ++t_;
        const float b1 = static_cast<float>(cfg_.adam_beta1), b2 = static_cast<float>(cfg_.adam_beta2);
        const double c1 = 1.0 - std::pow(cfg_.adam_beta1, t_);
        const double c2 = 1.0 - std::pow(cfg_.adam_beta2, t_);
        const float step_size = static_cast<float>(lr / c1);
        const float sqrt_c2 = static_cast<float>(std::sqrt(c2));
        const float eps = static_cast<float>(cfg_.adam_eps);
        const float wd = static_cast<float>(cfg_.weight_decay);
        for (std::size_t k = 0; k < params.size(); ++k) {
            if (wd != 0.0f) grads[k] += wd * params[k];
            m_[k] = b1 * m_[k] + (1.0f - b1) * grads[k];
            v_[k] = b2 * v_[k] + (1.0f - b2) * grads[k].cwiseProduct(grads[k]);
            params[k].array() -= step_size * m_[k].array() / (v_[k].array().sqrt() / sqrt_c2 + eps);
        }
    }

    long steps() const noexcept { return t_; }

private:
    TrainConfig cfg_;
    std::vector<Matrix> m_, v_;
    long t_ = 0;
};

/// Scales gradients in place so their global L2 norm is at most `max_norm`; returns the norm before clipping.
inline double clip_global_norm(std::vector<Eigen::MatrixXf>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& g : grads) sq += g.cast<double>().squaredNorm();
    const double norm = std::sqrt(sq);
    const double coef = max_norm / (norm + 1e-6);
    if (coef < 1.0)
        for (auto& g : grads) g *= static_cast<float>(coef);
    return norm;
}

}  // namespace detail

/// Trains a fresh classifier and returns the checkpoint with the highest validation AP
/// (the last epoch if the validation set has no positives).
inline TrainResult train(const ClassifierConfig& cfg, const std::vector<Datapoint>& train_dps,
                         const std::vector<Datapoint>& val_dps, const InputStores& stores, const TrainConfig& tcfg,
                         const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
    cfg.check();
    tcfg.check();
    const auto train_in = detail::resolve_inputs(train_dps, stores, cfg);
    const auto val_in = detail::resolve_inputs(val_dps, stores, cfg);
    std::vector<int> train_labels, val_labels;
    for (const auto& d : train_dps) train_labels.push_back(d.positive() ? 1 : 0);
    for (const auto& d : val_dps) val_labels.push_back(d.positive() ? 1 : 0);

    Classifier<float> model(cfg, derive_seed(tcfg.seed, "init"));
    detail::Adam adam(model.params(), tcfg);
    std::mt19937_64 shuffle_rng(derive_seed(tcfg.seed, "shuffle"));
    const std::uint64_t dropout_base = derive_seed(tcfg.seed, "dropout");
    std::uint64_t forward_count = 0;

    std::vector<Eigen::MatrixXf> accum;
    auto reset_accum = [&] {
        accum.clear();
        for (const auto& p : model.params()) accum.push_back(Eigen::MatrixXf::Zero(p.rows(), p.cols()));
    };
    reset_accum();

    TrainResult result;
    result.best.train = tcfg;
    bool have_best = false;
    std::vector<std::size_t> order(train_dps.size());
    const auto bs = static_cast<std::size_t>(tcfg.batch_size);

    for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
        const double lr = tcfg.learning_rate * std::pow(tcfg.gamma, epoch - 1);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        int loss_batches = 0, pending = 0, steps = 0;
        auto apply_step = [&] {
            for (auto& g : accum) g /= static_cast<float>(tcfg.grad_accumulation);
            detail::clip_global_norm(accum, tcfg.grad_clip);
            adam.step(model.params(), accum, lr);
            reset_accum();
            pending = 0;
            ++steps;
        };

        int batch_no = 0;
        for (std::size_t start = 0; start < order.size(); start += bs, ++batch_no) {
            const std::size_t n = std::min(bs, order.size() - start);
            if (n < 2) continue;
            std::span<const std::size_t> idx(order.data() + start, n);
            detail::Batch<float> b(train_in, idx);
            std::vector<int> y(n);
            for (std::size_t j = 0; j < n; ++j) y[j] = train_labels[idx[j]];

            Classifier<float>::Cache cache;
            auto logits = model.forward(b.view, Mode::Train, splitmix64(dropout_base + forward_count++), &cache);
            Eigen::RowVectorXf dlogits;
            const float loss = weighted_bce_with_logits<float>(logits, y, static_cast<float>(tcfg.positive_class_weight),
                                                               &dlogits);
            if (!std::isfinite(loss)) throw NonFiniteLoss(epoch, batch_no);
            loss_sum += loss;
            ++loss_batches;
            auto grads = model.backward(cache, dlogits);
            for (std::size_t k = 0; k < grads.size(); ++k) accum[k] += grads[k];
            if (++pending == tcfg.grad_accumulation) apply_step();
        }
        if (pending > 0) apply_step();

        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = loss_batches ? loss_sum / loss_batches : 0.0;
        m.optimizer_steps = steps;
        m.learning_rate = lr;
        const auto scores = detail::predict_resolved(model, val_in, tcfg.batch_size);
        if (std::count(val_labels.begin(), val_labels.end(), 1) > 0) m.val_ap = average_precision(scores, val_labels);
        m.val_macro_f1 = macro_f1(scores, val_labels, tcfg.decision_threshold);
        result.history.push_back(m);

        const bool better = !have_best || !m.val_ap || (result.best.val_ap && *m.val_ap > *result.best.val_ap);
        if (better) {
            result.best.model = model;
            result.best.epoch = epoch;
            result.best.val_ap = m.val_ap;
            have_best = true;
        }
        if (on_epoch) on_epoch(m);
    }
    return result;
}

/// Eval-mode probabilities in datapoint order.
inline std::vector<double> predict(const Checkpoint& ckpt, const std::vector<Datapoint>& dps, const InputStores& stores,
                                   int batch_size = 128) {
    if (batch_size <= 0) throw Error("batch size must be positive");
    const auto in = detail::resolve_inputs(dps, stores, ckpt.model.config());
    Classifier<float> model = ckpt.model;
    return detail::predict_resolved(model, in, batch_size);
}

/// Row-per-datapoint concatenation of the enabled inputs' embeddings (for the linear baseline).
inline Eigen::MatrixXd concat_embeddings(const std::vector<Datapoint>& dps, const InputStores& stores,
                                         const ClassifierConfig& cfg) {
    const auto r = detail::resolve_inputs(dps, stores, cfg);
    int total = 0;
    for (int d : r.dims) total += d;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(dps.size()), total);
    for (std::size_t k = 0; k < dps.size(); ++k) {
        Eigen::Index col = 0;
        for (std::size_t in = 0; in < r.inputs.size(); ++in)
            for (int i = 0; i < r.dims[in]; ++i) x(static_cast<Eigen::Index>(k), col++) = r.rows[in][k][i];
    }
    return x;
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

struct AblationVariant {
    std::string name;
    ClassifierConfig config;
    ContextFilter context_filter = ContextFilter::Both;
};

/// The two context-filtered variants keep the full architecture; their context embeddings
/// must be rebuilt from the filtered context text.
inline std::vector<AblationVariant> ablate(const ClassifierConfig& base) {
    std::vector<AblationVariant> v;
    auto with = [&](std::string name, auto edit, ContextFilter f = ContextFilter::Both) {
        ClassifierConfig c = base;
        edit(c);
        v.push_back({std::move(name), c, f});
    };
    with("no_image", [](ClassifierConfig& c) { c.use_image = false; });
    with("no_message", [](ClassifierConfig& c) { c.use_message = false; });
    with("no_context", [](ClassifierConfig& c) { c.use_context = false; });
    with("context_without_teller", [](ClassifierConfig&) {}, ContextFilter::DrawerOnly);
    with("context_without_drawer", [](ClassifierConfig&) {}, ContextFilter::TellerOnly);
    return v;
}

// ---------------------------------------------------------------------------
// Checkpoint files
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[4] = {'I', 'C', 'R', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout (little-endian): "ICRM", u32 version, u64 header length, UTF-8 JSON header
/// (classifier config, training config, epoch, val AP, tensor table), then each tensor as
/// row-major f32 at the offset (in floats) its table entry gives.
inline std::string encode_checkpoint(const Checkpoint& ckpt) {
    const auto& model = ckpt.model;
    std::vector<std::pair<std::string, Eigen::MatrixXf>> tensors;
    for (std::size_t k = 0; k < model.params().size(); ++k) tensors.emplace_back(model.param_names()[k], model.params()[k]);
    tensors.emplace_back("classifier.3.running_mean", model.running_mean());
    tensors.emplace_back("classifier.3.running_var", model.running_var());

    nlohmann::json header{{"classifier", model.config().to_json()},
                          {"train", ckpt.train.to_json()},
                          {"epoch", ckpt.epoch},
                          {"val_ap", ckpt.val_ap ? nlohmann::json(*ckpt.val_ap) : nlohmann::json(nullptr)}};
    std::size_t offset = 0;
    for (const auto& [name, t] : tensors) {
        header["tensors"].push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}, {"offset", offset}});
        offset += static_cast<std::size_t>(t.size());
    }
    const std::string h = header.dump();
    std::string out(kCheckpointMagic, 4);
    detail::put_le<std::uint32_t>(out, kCheckpointVersion);
    detail::put_le<std::uint64_t>(out, h.size());
    out += h;
    for (const auto& [name, t] : tensors)
        for (Eigen::Index r = 0; r < t.rows(); ++r)
            for (Eigen::Index c = 0; c < t.cols(); ++c) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(t(r, c)));
    return out;
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
    if (bytes.size() < 4) throw TruncatedFile("checkpoint shorter than its magic");
    if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw BadMagic("not a checkpoint (bad magic)");
    detail::ByteReader in(bytes);
    in.take(4, "magic");
    const auto version = in.get_le<std::uint32_t>("version");
    if (version != kCheckpointVersion)
        throw VersionMismatch("checkpoint version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
    const auto hlen = in.get_le<std::uint64_t>("header length");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(in.take(hlen, "header"));
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("checkpoint header is not valid JSON: ") + e.what());
    }
    const std::size_t data_start = in.position();
    const std::size_t n_floats = (bytes.size() - data_start) / 4;

    Checkpoint ckpt;
    ckpt.model = Classifier<float>(ClassifierConfig::from_json(header.at("classifier")), 0);
    ckpt.train = TrainConfig::from_json(header.at("train"));
    ckpt.epoch = header.value("epoch", 0);
    if (header.contains("val_ap") && !header["val_ap"].is_null()) ckpt.val_ap = header["val_ap"].get<double>();

    auto read_tensor = [&](const nlohmann::json& entry, Eigen::Index rows, Eigen::Index cols) {
        const auto name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape");
        if (shape.at(0).get<Eigen::Index>() != rows || shape.at(1).get<Eigen::Index>() != cols)
            throw DimMismatch("checkpoint tensor '" + name + "' has an unexpected shape");
        const auto offset = entry.at("offset").get<std::size_t>();
        if (offset + static_cast<std::size_t>(rows * cols) > n_floats)
            throw TruncatedFile("checkpoint truncated inside tensor '" + name + "'");
        Eigen::MatrixXf t(rows, cols);
        detail::ByteReader data(bytes.substr(data_start + 4 * offset));
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) t(r, c) = std::bit_cast<float>(data.get_le<std::uint32_t>("tensor"));
        return t;
    };
    std::map<std::string, nlohmann::json> table;
    for (const auto& e : header.at("tensors")) table[e.at("name").get<std::string>()] = e;
    auto entry = [&](const std::string& name) -> const nlohmann::json& {
        auto it = table.find(name);
        if (it == table.end()) throw Error("checkpoint lacks tensor '" + name + "'");
        return it->second;
    };
    auto& model = ckpt.model;
    for (std::size_t k = 0; k < model.params().size(); ++k) {
        auto& p = model.params()[k];
        p = read_tensor(entry(model.param_names()[k]), p.rows(), p.cols());
    }
    const Eigen::Index h = model.config().hidden_dim;
    model.running_mean() = read_tensor(entry("classifier.3.running_mean"), h, 1);
    model.running_var() = read_tensor(entry("classifier.3.running_var"), h, 1);
    return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    write_file_atomic(path, encode_checkpoint(ckpt));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

inline std::string training_log_jsonl(const std::vector<EpochMetrics>& history) {
    std::string out;
    for (const auto& m : history) out += to_json(m).dump() + '\n';
    return out;
}

}  // namespace icr
