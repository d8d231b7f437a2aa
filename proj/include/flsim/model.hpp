#pragma once

#include "flsim/param_vector.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace flsim {

// Dense sample matrix with integer class labels. Used both for root datasets
// and for materialized per-node train/test splits.
struct DataSet {
    std::vector<double> features; // n x d, row-major
    std::vector<std::uint32_t> labels;
    std::size_t n = 0;
    std::size_t d = 0;
    std::uint32_t n_classes = 0;

    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * d, d};
    }
};

enum class ModelKind { LogisticRegression, Mlp };

// Built-in deterministic models. hidden_dims applies to Mlp only (tanh
// activations, linear output layer feeding softmax cross-entropy).
struct ModelSpec {
    ModelKind kind = ModelKind::LogisticRegression;
    std::uint32_t input_dim = 0;
    std::uint32_t n_classes = 0;
    std::vector<std::uint32_t> hidden_dims;
    std::uint64_t init_seed = 0;
};

struct TrainConfig {
    double learning_rate = 0.01; // per-step
    std::uint32_t batch_size = 32;
    std::uint32_t local_epochs = 1;
    std::uint64_t shuffle_seed = 0;
};

struct Metrics {
    double accuracy = 0.0;
    double loss = 0.0;
};

struct TrainResult {
    ParamVector params;
    std::size_t steps = 0;
};

// Layout is [(W1,[out,in]),(b1,[out]),...] per layer; logistic regression is
// the single-layer case. Weights initialize from the framework generator
// (stream "init") as uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)], drawn in
// layout order, row-major; biases are zero.
Layout model_layout(const ModelSpec& spec);
ParamVector init_params(const ModelSpec& spec);

// Mean softmax cross-entropy gradient over the given rows. Summation is
// fixed left-to-right across rows in the order given.
ParamVector gradient(const ModelSpec& spec, const ParamVector& params, const DataSet& data,
                     std::span<const std::size_t> rows);

// Mean cross-entropy over the given rows (same clamping as evaluate()).
double batch_loss(const ModelSpec& spec, const ParamVector& params, const DataSet& data,
                  std::span<const std::size_t> rows);

using StepHook = std::function<void(std::size_t step, const ParamVector& grad,
                                    const ParamVector& params_after)>;

// Mini-batch SGD on softmax cross-entropy. Epoch e shuffles row indices with
// CounterRng(cfg.shuffle_seed, combine_stream(fnv1a64("shuffle"), e)) and
// walks consecutive batches of cfg.batch_size (final partial batch kept).
// When max_steps > 0 the loop runs exactly that many steps, continuing into
// additional epochs if needed; otherwise it runs local_epochs full epochs.
// `correction` (when non-null, same layout) is added to every step gradient.
TrainResult train_local(const ModelSpec& spec, ParamVector params, const DataSet& data,
                        const TrainConfig& cfg, const ParamVector* correction = nullptr,
                        std::size_t max_steps = 0, const StepHook& hook = {});

// Deterministic forward pass over the whole set; argmax ties resolve to the
// lowest class index; probabilities clamp at 1e-12 inside the log.
Metrics evaluate(const ModelSpec& spec, const ParamVector& params, const DataSet& data);

} // namespace flsim
