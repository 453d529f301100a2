#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lorasb/matrix.hpp"

namespace lorasb {

enum class Activation { identity, relu, tanh };
enum class LossKind { mse, softmax_cross_entropy };

const char* to_string(Activation a);
const char* to_string(LossKind l);
Activation activation_from_string(const std::string& s);
LossKind loss_from_string(const std::string& s);

struct LayerSpec {
    int in_dim = 0;
    int out_dim = 0;
    Activation act = Activation::identity;
    bool has_bias = false;
};

// Inputs are batch x in_dim, targets are batch x target_dim.
struct Batch {
    Matrix inputs;
    Matrix targets;
};

// A stack of dense layers y = act(x * W^T + b). Weights are out_dim x in_dim.
struct ModelStack {
    std::vector<LayerSpec> layers;
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;  // empty vector when has_bias is false
    LossKind loss = LossKind::mse;

    int in_dim() const { return layers.front().in_dim; }
    int out_dim() const { return layers.back().out_dim; }
    void validate() const;  // throws InvalidInputError on any inconsistency
};

// Single-layer bias-free model, the workhorse shape for adapter experiments.
ModelStack make_linear_model(const Matrix& w, Activation act = Activation::identity,
                             LossKind loss = LossKind::mse);

// Activations captured by forward, consumed by backward. backward rejects a
// cache whose weight checksums no longer match the model (stale cache).
struct ForwardCache {
    Matrix input;
    Matrix targets;
    std::vector<Matrix> pre;    // pre-activation, per layer
    std::vector<Matrix> post;   // post-activation, per layer
    std::vector<std::uint64_t> weight_hashes;
    double loss = 0.0;
};

// mse averages over batch and output coordinates; softmax_cross_entropy
// averages over the batch and needs rows of targets to be distributions.
double forward(const ModelStack& model, const Batch& batch, ForwardCache* cache = nullptr);

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
};

Gradients backward(const ModelStack& model, const ForwardCache& cache);

// Synthetic low-rank regression task: W_target = W0 + U V^T with U, V seeded
// Gaussian scaled by 1/sqrt(r_true), inputs Gaussian, targets
// act(X W_target^T) plus optional Gaussian noise.
struct TeacherStudentTask {
    Batch data;
    Matrix w0;
    Matrix w_target;
};

struct TaskOptions {
    Activation act = Activation::identity;
    LossKind loss = LossKind::mse;
    // Right-multiply inputs by (X^T X / b)^{-1/2} so the sample second moment
    // is exactly the identity. Applied only when num_samples >= n.
    bool whiten = true;
};

TeacherStudentTask make_teacher_student_task(int m, int n, int r_true, int num_samples,
                                             double noise_std, std::uint64_t seed,
                                             const TaskOptions& opts = {});

// Directory-based JSON + CSV serialization, diffable and exact.
void save_model(const ModelStack& model, const std::string& dir, const std::string& name);
ModelStack load_model(const std::string& dir, const std::string& name);
void save_batch(const Batch& batch, const std::string& dir, const std::string& name);
Batch load_batch(const std::string& dir, const std::string& name);

} // namespace lorasb
