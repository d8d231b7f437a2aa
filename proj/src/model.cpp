#include "flsim/model.hpp"

#include "flsim/errors.hpp"
#include "flsim/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace flsim {

namespace {

struct LayerDims {
    std::uint32_t in;
    std::uint32_t out;
};

std::vector<LayerDims> layer_dims(const ModelSpec& spec) {
    std::vector<LayerDims> layers;
    std::uint32_t prev = spec.input_dim;
    if (spec.kind == ModelKind::Mlp) {
        for (auto h : spec.hidden_dims) {
            layers.push_back({prev, h});
            prev = h;
        }
    }
    layers.push_back({prev, spec.n_classes});
    return layers;
}

void validate_spec(const ModelSpec& spec) {
    if (spec.input_dim < 1) throw invalid_value("model.input_dim", "must be >= 1");
    if (spec.n_classes < 1) throw invalid_value("model.n_classes", "must be >= 1");
    if (spec.kind == ModelKind::Mlp && spec.hidden_dims.empty()) {
        throw invalid_value("model.hidden_dims", "mlp requires at least one hidden layer");
    }
    for (auto h : spec.hidden_dims) {
        if (h < 1) throw invalid_value("model.hidden_dims", "dims must be >= 1");
    }
}

// Offsets of each tensor inside the flat value array.
std::vector<std::size_t> tensor_offsets(const Layout& layout) {
    std::vector<std::size_t> offs;
    offs.reserve(layout.size());
    std::size_t at = 0;
    for (const auto& t : layout) {
        offs.push_back(at);
        at += t.count();
    }
    return offs;
}

// Forward pass storing pre-activation tanh outputs per hidden layer.
// logits go to `logits`; activations[l] is the output of hidden layer l.
void forward(const ModelSpec& spec, const ParamVector& params, std::span<const double> x,
             std::vector<std::vector<double>>& activations, std::vector<double>& logits) {
    auto layers = layer_dims(spec);
    auto offs = tensor_offsets(params.layout);
    const double* v = params.values.data();

    std::vector<double> cur(x.begin(), x.end());
    activations.clear();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto [in, out] = layers[l];
        const double* W = v + offs[2 * l];
        const double* b = v + offs[2 * l + 1];
        std::vector<double> next(out);
        for (std::uint32_t o = 0; o < out; ++o) {
            double acc = 0.0;
            const double* wrow = W + std::size_t(o) * in;
            for (std::uint32_t i = 0; i < in; ++i) acc += wrow[i] * cur[i];
            next[o] = acc + b[o];
        }
        if (l + 1 < layers.size()) {
            for (auto& z : next) z = std::tanh(z);
            activations.push_back(next);
        } else {
            logits = std::move(next);
        }
        if (l + 1 < layers.size()) cur = activations.back();
    }
}

// Stable softmax; probabilities sum to 1 up to rounding.
void softmax_inplace(std::vector<double>& z) {
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double sum = 0.0;
    for (auto& v : z) {
        v = std::exp(v - m);
        sum += v;
    }
    for (auto& v : z) v /= sum;
}

constexpr double kProbFloor = 1e-12;

} // namespace

Layout model_layout(const ModelSpec& spec) {
    validate_spec(spec);
    Layout layout;
    auto layers = layer_dims(spec);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        std::string idx = std::to_string(l + 1);
        layout.push_back({"W" + idx, {layers[l].out, layers[l].in}});
        layout.push_back({"b" + idx, {layers[l].out}});
    }
    return layout;
}

ParamVector init_params(const ModelSpec& spec) {
    Layout layout = model_layout(spec);
    ParamVector pv{layout, std::vector<double>(layout_count(layout), 0.0)};
    CounterRng rng(spec.init_seed, fnv1a64("init"));
    auto layers = layer_dims(spec);
    auto offs = tensor_offsets(layout);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto [in, out] = layers[l];
        double bound = 1.0 / std::sqrt(double(in));
        double* W = pv.values.data() + offs[2 * l];
        for (std::size_t i = 0; i < std::size_t(in) * out; ++i) {
            W[i] = (2.0 * rng.next_double() - 1.0) * bound;
        }
        // biases stay zero
    }
    return pv;
}

ParamVector gradient(const ModelSpec& spec, const ParamVector& params, const DataSet& data,
                     std::span<const std::size_t> rows) {
    if (rows.empty()) throw Error(ErrorCode::EmptyDataset, "gradient over empty batch");
    auto layers = layer_dims(spec);
    auto offs = tensor_offsets(params.layout);
    const double* v = params.values.data();

    ParamVector grad = zeros_like(params);
    double* g = grad.values.data();
    const double inv_n = 1.0 / double(rows.size());

    std::vector<std::vector<double>> acts;
    std::vector<double> logits;
    std::vector<double> delta, delta_prev;

    for (std::size_t r : rows) {
        auto x = data.row(r);
        forward(spec, params, x, acts, logits);
        softmax_inplace(logits);
        delta.assign(logits.begin(), logits.end());
        delta[data.labels[r]] -= 1.0; // dL/dlogits for one sample

        // backprop, output layer first
        for (std::size_t l = layers.size(); l-- > 0;) {
            const auto [in, out] = layers[l];
            const double* input = (l == 0) ? x.data() : acts[l - 1].data();
            double* gW = g + offs[2 * l];
            double* gb = g + offs[2 * l + 1];
            for (std::uint32_t o = 0; o < out; ++o) {
                const double dz = delta[o] * inv_n;
                double* grow = gW + std::size_t(o) * in;
                for (std::uint32_t i = 0; i < in; ++i) grow[i] += dz * input[i];
                gb[o] += dz;
            }
            if (l > 0) {
                const double* W = v + offs[2 * l];
                delta_prev.assign(in, 0.0);
                for (std::uint32_t i = 0; i < in; ++i) {
                    double acc = 0.0;
                    for (std::uint32_t o = 0; o < out; ++o) {
                        acc += W[std::size_t(o) * in + i] * delta[o];
                    }
                    const double a = acts[l - 1][i];
                    delta_prev[i] = acc * (1.0 - a * a); // tanh'
                }
                delta = delta_prev;
            }
        }
    }
    return grad;
}

double batch_loss(const ModelSpec& spec, const ParamVector& params, const DataSet& data,
                  std::span<const std::size_t> rows) {
    if (rows.empty()) throw Error(ErrorCode::EmptyDataset, "loss over empty batch");
    std::vector<std::vector<double>> acts;
    std::vector<double> logits;
    double total = 0.0;
    for (std::size_t r : rows) {
        forward(spec, params, data.row(r), acts, logits);
        softmax_inplace(logits);
        double p = std::max(logits[data.labels[r]], kProbFloor);
        total += -std::log(p);
    }
    return total / double(rows.size());
}

TrainResult train_local(const ModelSpec& spec, ParamVector params, const DataSet& data,
                        const TrainConfig& cfg, const ParamVector* correction,
                        std::size_t max_steps, const StepHook& hook) {
    if (data.n == 0) throw Error(ErrorCode::EmptyDataset, "train_local on empty dataset");
    if (cfg.batch_size < 1) throw invalid_value("train.batch_size", "must be >= 1");
    if (correction && !correction->same_layout(params)) throw layout_mismatch("train correction");

    const std::size_t batches_per_epoch = (data.n + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t target_steps =
        max_steps > 0 ? max_steps : std::size_t(cfg.local_epochs) * batches_per_epoch;

    std::size_t steps = 0;
    std::vector<std::size_t> order(data.n);
    for (std::uint64_t epoch = 0; steps < target_steps; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        CounterRng rng(cfg.shuffle_seed, combine_stream(fnv1a64("shuffle"), epoch));
        rng.shuffle(order);
        for (std::size_t b = 0; b < batches_per_epoch && steps < target_steps; ++b) {
            std::size_t lo = b * cfg.batch_size;
            std::size_t hi = std::min(lo + cfg.batch_size, data.n);
            std::span<const std::size_t> batch(order.data() + lo, hi - lo);
            ParamVector g = gradient(spec, params, data, batch);
            if (correction) {
                for (std::size_t i = 0; i < g.values.size(); ++i) {
                    g.values[i] += correction->values[i];
                }
            }
            for (std::size_t i = 0; i < params.values.size(); ++i) {
                params.values[i] -= cfg.learning_rate * g.values[i];
            }
            ++steps;
            if (hook) hook(steps, g, params);
        }
    }
    return {std::move(params), steps};
}

Metrics evaluate(const ModelSpec& spec, const ParamVector& params, const DataSet& data) {
    if (data.n == 0) throw Error(ErrorCode::EmptyDataset, "evaluate on empty dataset");
    std::vector<std::vector<double>> acts;
    std::vector<double> logits;
    std::size_t correct = 0;
    double loss_sum = 0.0;
    for (std::size_t r = 0; r < data.n; ++r) {
        forward(spec, params, data.row(r), acts, logits);
        std::size_t argmax = 0;
        for (std::size_t c = 1; c < logits.size(); ++c) {
            if (logits[c] > logits[argmax]) argmax = c;
        }
        if (argmax == data.labels[r]) ++correct;
        softmax_inplace(logits);
        loss_sum += -std::log(std::max(logits[data.labels[r]], kProbFloor));
    }
    return {double(correct) / double(data.n), loss_sum / double(data.n)};
}

} // namespace flsim
