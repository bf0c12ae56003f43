#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "icr/error.hpp"

namespace icr {

enum class Input { Image, Message, Context };

inline std::string_view input_name(Input i) {
    switch (i) {
        case Input::Image: return "img";
        case Input::Message: return "msg";
        case Input::Context: return "ctx";
    }
    return "?";
}

/// Per-input linear encoders, concatenation, LeakyReLU, Dropout, Linear, BatchNorm,
/// LeakyReLU, Linear to a single logit.
struct ClassifierConfig {
    bool use_image = true;
    bool use_message = true;
    bool use_context = true;
    int image_dim = 2048;
    int message_dim = 768;
    int context_dim = 768;
    int internal_dim = 128;
    int hidden_dim = 256;
    double dropout = 0.1;
    double leaky_slope = 0.01;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;

    std::vector<Input> inputs() const {
        std::vector<Input> v;
        if (use_image) v.push_back(Input::Image);
        if (use_message) v.push_back(Input::Message);
        if (use_context) v.push_back(Input::Context);
        return v;
    }

    int input_dim(Input i) const {
        switch (i) {
            case Input::Image: return image_dim;
            case Input::Message: return message_dim;
            case Input::Context: return context_dim;
        }
        return 0;
    }

    /// Closed-form trainable parameter count (normalization running statistics excluded).
    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (auto i : inputs()) n += static_cast<std::size_t>(input_dim(i) + 1) * internal_dim;
        const std::size_t concat = inputs().size() * static_cast<std::size_t>(internal_dim);
        n += (concat + 1) * static_cast<std::size_t>(hidden_dim);  // linear
        n += 2 * static_cast<std::size_t>(hidden_dim);             // normalization scale and shift
        n += static_cast<std::size_t>(hidden_dim) + 1;             // output
        return n;
    }

    void check() const {
        if (inputs().empty()) throw Error("classifier needs at least one enabled input");
        if (internal_dim <= 0 || hidden_dim <= 0) throw Error("classifier dimensions must be positive");
        if (dropout < 0.0 || dropout >= 1.0) throw Error("dropout must lie in [0,1)");
    }

    nlohmann::json to_json() const {
        return {{"use_image", use_image},     {"use_message", use_message}, {"use_context", use_context},
                {"image_dim", image_dim},     {"message_dim", message_dim}, {"context_dim", context_dim},
                {"internal_dim", internal_dim}, {"hidden_dim", hidden_dim}, {"dropout", dropout},
                {"leaky_slope", leaky_slope}, {"bn_eps", bn_eps},           {"bn_momentum", bn_momentum}};
    }

    static ClassifierConfig from_json(const nlohmann::json& j) {
        ClassifierConfig c;
        c.use_image = j.value("use_image", c.use_image);
        c.use_message = j.value("use_message", c.use_message);
        c.use_context = j.value("use_context", c.use_context);
        c.image_dim = j.value("image_dim", c.image_dim);
        c.message_dim = j.value("message_dim", c.message_dim);
        c.context_dim = j.value("context_dim", c.context_dim);
        c.internal_dim = j.value("internal_dim", c.internal_dim);
        c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
        c.dropout = j.value("dropout", c.dropout);
        c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
        c.bn_eps = j.value("bn_eps", c.bn_eps);
        c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
        return c;
    }

    friend bool operator==(const ClassifierConfig&, const ClassifierConfig&) = default;
};

enum class Mode { Train, Eval };

/// Weighted binary cross entropy on logits, averaged over the batch:
/// mean of -[w y log p + (1 - y) log(1 - p)], p = sigmoid(logit). Returns the loss and
/// writes d(loss)/d(logit) into `grad`.
template <class Scalar>
Scalar weighted_bce_with_logits(const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>& logits, const std::vector<int>& labels,
                                Scalar pos_weight, Eigen::Matrix<Scalar, 1, Eigen::Dynamic>* grad = nullptr) {
    const Eigen::Index n = logits.size();
    auto softplus = [](Scalar z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); };
    Scalar loss = 0;
    if (grad) grad->resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Scalar x = logits[i];
        const Scalar y = labels[static_cast<std::size_t>(i)] == 1 ? Scalar(1) : Scalar(0);
        loss += pos_weight * y * softplus(-x) + (1 - y) * softplus(x);
        if (grad) {
            const Scalar p = Scalar(1) / (Scalar(1) + std::exp(-x));
            (*grad)[i] = (pos_weight * y * (p - 1) + (1 - y) * p) / static_cast<Scalar>(n);
        }
    }
    return loss / static_cast<Scalar>(n);
}

template <class Scalar>
class Classifier {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

    /// Batch inputs, one column per sample; entries for disabled inputs are ignored.
    struct Inputs {
        const Matrix* image = nullptr;
        const Matrix* message = nullptr;
        const Matrix* context = nullptr;

        const Matrix* get(Input i) const {
            switch (i) {
                case Input::Image: return image;
                case Input::Message: return message;
                case Input::Context: return context;
            }
            return nullptr;
        }
    };

    struct Cache {
        std::vector<const Matrix*> x;
        Matrix z, a, mask, d, u, xhat, v, w;
        Vector invstd;
        Mode mode = Mode::Eval;
    };

    Classifier() = default;

    /// Linear layers draw weights and biases from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    Classifier(const ClassifierConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.check();
        std::mt19937_64 rng(seed);
        auto linear = [&](const std::string& name, int out, int in) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(in));
            std::uniform_real_distribution<double> u(-bound, bound);
            Matrix w(out, in);
            for (Eigen::Index c = 0; c < w.cols(); ++c)
                for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = static_cast<Scalar>(u(rng));
            Matrix b(out, 1);
            for (Eigen::Index r = 0; r < b.rows(); ++r) b(r, 0) = static_cast<Scalar>(u(rng));
            add_param(name + ".weight", std::move(w));
            add_param(name + ".bias", std::move(b));
        };
        for (auto in : cfg_.inputs()) linear(encoder_name(in), cfg_.internal_dim, cfg_.input_dim(in));
        const int concat = static_cast<int>(cfg_.inputs().size()) * cfg_.internal_dim;
        linear("classifier.2", cfg_.hidden_dim, concat);
        add_param("classifier.3.weight", Matrix::Ones(cfg_.hidden_dim, 1));
        add_param("classifier.3.bias", Matrix::Zero(cfg_.hidden_dim, 1));
        linear("classifier.5", 1, cfg_.hidden_dim);
        running_mean_ = Vector::Zero(cfg_.hidden_dim);
        running_var_ = Vector::Ones(cfg_.hidden_dim);
    }

    const ClassifierConfig& config() const noexcept { return cfg_; }

    std::vector<Matrix>& params() noexcept { return params_; }
    const std::vector<Matrix>& params() const noexcept { return params_; }
    const std::vector<std::string>& param_names() const noexcept { return names_; }
    Vector& running_mean() noexcept { return running_mean_; }
    Vector& running_var() noexcept { return running_var_; }
    const Vector& running_mean() const noexcept { return running_mean_; }
    const Vector& running_var() const noexcept { return running_var_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
        return n;
    }

    /// Logits (1 x batch). Train mode uses batch statistics, updates the running
    /// statistics and applies dropout with a mask drawn from `dropout_seed`.
    RowVector forward(const Inputs& in, Mode mode, std::uint64_t dropout_seed = 0, Cache* cache = nullptr) {
        Cache local;
        Cache& c = cache ? *cache : local;
        c.mode = mode;
        c.x.clear();
        const auto inputs = cfg_.inputs();
        Eigen::Index batch = -1;
        for (auto i : inputs) {
            const Matrix* x = in.get(i);
            if (!x) throw DimMismatch(std::string("missing input '") + std::string(input_name(i)) + "'");
            if (x->rows() != cfg_.input_dim(i))
                throw DimMismatch(std::string("input '") + std::string(input_name(i)) + "' has dim " +
                                  std::to_string(x->rows()) + ", expected " + std::to_string(cfg_.input_dim(i)));
            if (batch >= 0 && x->cols() != batch) throw DimMismatch("inputs disagree on batch size");
            batch = x->cols();
            c.x.push_back(x);
        }
        const Eigen::Index k = cfg_.internal_dim;
        c.z.resize(k * static_cast<Eigen::Index>(inputs.size()), batch);
        for (std::size_t e = 0; e < inputs.size(); ++e) {
            const Matrix& w = params_[2 * e];
            const Matrix& b = params_[2 * e + 1];
            c.z.middleRows(static_cast<Eigen::Index>(e) * k, k).noalias() = w * (*c.x[e]);
            c.z.middleRows(static_cast<Eigen::Index>(e) * k, k).colwise() += b.col(0);
        }
        const Scalar slope = static_cast<Scalar>(cfg_.leaky_slope);
        c.a = c.z.unaryExpr([slope](Scalar v) { return v > 0 ? v : slope * v; });
        if (mode == Mode::Train && cfg_.dropout > 0.0) {
            std::mt19937_64 rng(dropout_seed);
            std::bernoulli_distribution keep(1.0 - cfg_.dropout);
            const Scalar scale = static_cast<Scalar>(1.0 / (1.0 - cfg_.dropout));
            c.mask.resize(c.a.rows(), c.a.cols());
            for (Eigen::Index j = 0; j < c.mask.cols(); ++j)
                for (Eigen::Index i = 0; i < c.mask.rows(); ++i) c.mask(i, j) = keep(rng) ? scale : Scalar(0);
            c.d = c.a.cwiseProduct(c.mask);
        } else {
            c.mask = Matrix::Ones(c.a.rows(), c.a.cols());
            c.d = c.a;
        }
        const std::size_t h = hidden_index();
        c.u.noalias() = params_[h] * c.d;
        c.u.colwise() += params_[h + 1].col(0);

        const Scalar eps = static_cast<Scalar>(cfg_.bn_eps);
        Vector mean, var;
        if (mode == Mode::Train) {
            if (batch < 2) throw Error("batch normalization in training mode needs at least 2 samples");
            mean = c.u.rowwise().mean();
            var = (c.u.colwise() - mean).array().square().rowwise().mean();
            const Scalar m = static_cast<Scalar>(cfg_.bn_momentum);
            const Scalar unbias = static_cast<Scalar>(batch) / static_cast<Scalar>(batch - 1);
            running_mean_ = (Scalar(1) - m) * running_mean_ + m * mean;
            running_var_ = (Scalar(1) - m) * running_var_ + m * unbias * var;
        } else {
            mean = running_mean_;
            var = running_var_;
        }
        c.invstd = (var.array() + eps).rsqrt();
        c.xhat = (c.u.colwise() - mean).array().colwise() * c.invstd.array();
        c.v = (c.xhat.array().colwise() * params_[h + 2].col(0).array()).colwise() + params_[h + 3].col(0).array();
        c.w = c.v.unaryExpr([slope](Scalar v) { return v > 0 ? v : slope * v; });
        RowVector logits = params_[h + 4] * c.w;
        logits.array() += params_[h + 5](0, 0);
        return logits;
    }

    /// Gradients of every parameter given d(loss)/d(logits) for the cached forward pass.
    std::vector<Matrix> backward(const Cache& c, const RowVector& dlogits) const {
        std::vector<Matrix> g(params_.size());
        const std::size_t h = hidden_index();
        const Scalar slope = static_cast<Scalar>(cfg_.leaky_slope);
        const auto batch = static_cast<Scalar>(dlogits.size());

        g[h + 4] = dlogits * c.w.transpose();
        g[h + 5] = Matrix::Constant(1, 1, dlogits.sum());
        Matrix dw = params_[h + 4].transpose() * dlogits;
        Matrix dv = dw.cwiseProduct(c.v.unaryExpr([slope](Scalar v) { return v > 0 ? Scalar(1) : slope; }));
        g[h + 2] = dv.cwiseProduct(c.xhat).rowwise().sum();
        g[h + 3] = dv.rowwise().sum();
        Matrix dxhat = dv.array().colwise() * params_[h + 2].col(0).array();
        Matrix du;
        if (c.mode == Mode::Train) {
            const Vector sum_dxhat = dxhat.rowwise().sum();
            const Vector sum_dxhat_xhat = dxhat.cwiseProduct(c.xhat).rowwise().sum();
            du = ((batch * dxhat).colwise() - sum_dxhat - (c.xhat.array().colwise() * sum_dxhat_xhat.array()).matrix());
            du = du.array().colwise() * (c.invstd.array() / batch);
        } else {
            du = dxhat.array().colwise() * c.invstd.array();
        }
        g[h] = du * c.d.transpose();
        g[h + 1] = du.rowwise().sum();
        Matrix dd = params_[h].transpose() * du;
        Matrix dz = dd.cwiseProduct(c.mask).cwiseProduct(c.z.unaryExpr([slope](Scalar v) { return v > 0 ? Scalar(1) : slope; }));
        const Eigen::Index k = cfg_.internal_dim;
        for (std::size_t e = 0; e < c.x.size(); ++e) {
            auto block = dz.middleRows(static_cast<Eigen::Index>(e) * k, k);
            g[2 * e] = block * c.x[e]->transpose();
            g[2 * e + 1] = block.rowwise().sum();
        }
        return g;
    }

    /// Eval-mode probabilities.
    std::vector<double> predict_proba(const Inputs& in) {
        RowVector logits = forward(in, Mode::Eval);
        std::vector<double> p(static_cast<std::size_t>(logits.size()));
        for (Eigen::Index i = 0; i < logits.size(); ++i)
            p[static_cast<std::size_t>(i)] = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[i])));
        return p;
    }

private:
    static std::string encoder_name(Input i) {
        switch (i) {
            case Input::Image: return "img_encoder.encoder";
            case Input::Message: return "msg_encoder.encoder";
            case Input::Context: return "context_encoder.encoder";
        }
        return "?";
    }
    std::size_t hidden_index() const { return 2 * cfg_.inputs().size(); }
    void add_param(std::string name, Matrix m) {
        names_.push_back(std::move(name));
        params_.push_back(std::move(m));
    }

    ClassifierConfig cfg_;
    std::vector<std::string> names_;
    std::vector<Matrix> params_;
    Vector running_mean_;
    Vector running_var_;
};

}  // namespace icr
