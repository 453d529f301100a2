#include "lorasb/model.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "lorasb/error.hpp"
#include "lorasb/rng.hpp"
#include "lorasb/svd.hpp"

namespace lorasb {

namespace {

std::uint64_t fnv1a_bytes(const void* data, std::size_t len, std::uint64_t h = 1469598103934665603ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t weight_hash(const Matrix& w) {
    std::uint64_t h = fnv1a_bytes(w.data(), static_cast<std::size_t>(w.size()) * sizeof(double));
    const int dims[2] = {w.rows(), w.cols()};
    return fnv1a_bytes(dims, sizeof(dims), h);
}

// x * W^T + bias, row broadcast.
Matrix affine(const Matrix& x, const Matrix& w, const std::vector<double>& bias) {
    Matrix p = matmul(x, transpose(w));
    if (!bias.empty()) {
        for (int i = 0; i < p.rows(); ++i)
            for (int j = 0; j < p.cols(); ++j) p(i, j) += bias[j];
    }
    return p;
}

Matrix apply_activation(const Matrix& pre, Activation act) {
    if (act == Activation::identity) return pre;
    Matrix out = pre;
    if (act == Activation::relu) {
        for (long long i = 0; i < out.size(); ++i)
            if (out.data()[i] < 0.0) out.data()[i] = 0.0;
    } else {
        for (long long i = 0; i < out.size(); ++i) out.data()[i] = std::tanh(out.data()[i]);
    }
    return out;
}

// Derivative through the activation given pre- and post-activation values.
// relu uses the subgradient 0 at exactly 0.
void activation_backward(Matrix& dz, const Matrix& pre, const Matrix& post, Activation act) {
    if (act == Activation::identity) return;
    if (act == Activation::relu) {
        for (long long i = 0; i < dz.size(); ++i)
            if (pre.data()[i] <= 0.0) dz.data()[i] = 0.0;
    } else {
        for (long long i = 0; i < dz.size(); ++i) {
            const double t = post.data()[i];
            dz.data()[i] *= 1.0 - t * t;
        }
    }
}

void check_softmax_targets(const Matrix& t) {
    for (int i = 0; i < t.rows(); ++i) {
        double row_sum = 0.0;
        for (int j = 0; j < t.cols(); ++j) {
            if (t(i, j) < 0.0) {
                throw InvalidInputError("softmax_cross_entropy targets must be non-negative");
            }
            row_sum += t(i, j);
        }
        if (std::fabs(row_sum - 1.0) > 1e-9) {
            throw InvalidInputError("softmax_cross_entropy target rows must sum to 1");
        }
    }
}

} // namespace

const char* to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
    }
    return "?";
}

const char* to_string(LossKind l) {
    return l == LossKind::mse ? "mse" : "softmax_cross_entropy";
}

Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw InvalidInputError("unknown activation: " + s);
}

LossKind loss_from_string(const std::string& s) {
    if (s == "mse") return LossKind::mse;
    if (s == "softmax_cross_entropy") return LossKind::softmax_cross_entropy;
    throw InvalidInputError("unknown loss: " + s);
}

void ModelStack::validate() const {
    if (layers.empty()) throw InvalidInputError("model has no layers");
    if (weights.size() != layers.size() || biases.size() != layers.size()) {
        throw InvalidInputError("model layer/weight/bias count mismatch");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& spec = layers[i];
        if (spec.in_dim <= 0 || spec.out_dim <= 0) {
            throw InvalidInputError("layer " + std::to_string(i) + " has non-positive dims");
        }
        if (weights[i].rows() != spec.out_dim || weights[i].cols() != spec.in_dim) {
            throw InvalidInputError("layer " + std::to_string(i) + " weight shape mismatch");
        }
        if (i > 0 && layers[i - 1].out_dim != spec.in_dim) {
            throw InvalidInputError("layer " + std::to_string(i) + " does not chain");
        }
        if (spec.has_bias != !biases[i].empty() ||
            (spec.has_bias && biases[i].size() != static_cast<std::size_t>(spec.out_dim))) {
            throw InvalidInputError("layer " + std::to_string(i) + " bias length mismatch");
        }
        weights[i].check_finite("model weight");
        for (double b : biases[i]) {
            if (!std::isfinite(b)) throw NumericalFailure("non-finite bias entry", 0);
        }
    }
}

ModelStack make_linear_model(const Matrix& w, Activation act, LossKind loss) {
    ModelStack model;
    model.layers.push_back({w.cols(), w.rows(), act, false});
    model.weights.push_back(w);
    model.biases.emplace_back();
    model.loss = loss;
    return model;
}

double forward(const ModelStack& model, const Batch& batch, ForwardCache* cache) {
    model.validate();
    if (batch.inputs.cols() != model.in_dim()) {
        throw InvalidInputError("batch input dim " + std::to_string(batch.inputs.cols()) +
                                " does not match model in_dim " + std::to_string(model.in_dim()));
    }
    if (batch.targets.cols() != model.out_dim() || batch.targets.rows() != batch.inputs.rows()) {
        throw InvalidInputError("batch target shape does not match model head");
    }
    batch.inputs.check_finite("batch inputs");
    batch.targets.check_finite("batch targets");
    if (model.loss == LossKind::softmax_cross_entropy) check_softmax_targets(batch.targets);

    if (cache) {
        cache->input = batch.inputs;
        cache->targets = batch.targets;
        cache->pre.clear();
        cache->post.clear();
        cache->weight_hashes.clear();
    }

    Matrix x = batch.inputs;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        Matrix pre = affine(x, model.weights[i], model.biases[i]);
        Matrix post = apply_activation(pre, model.layers[i].act);
        if (cache) {
            cache->pre.push_back(pre);
            cache->post.push_back(post);
            cache->weight_hashes.push_back(weight_hash(model.weights[i]));
        }
        x = std::move(post);
    }

    const Matrix& t = batch.targets;
    const int b = x.rows();
    const int d = x.cols();
    double loss = 0.0;
    if (model.loss == LossKind::mse) {
        // Mean over batch rows and output coordinates.
        double acc = 0.0;
        for (long long i = 0; i < x.size(); ++i) {
            const double diff = x.data()[i] - t.data()[i];
            acc += diff * diff;
        }
        loss = acc / (static_cast<double>(b) * d);
    } else {
        double acc = 0.0;
        for (int i = 0; i < b; ++i) {
            double mx = x(i, 0);
            for (int j = 1; j < d; ++j) mx = std::max(mx, x(i, j));
            double lse = 0.0;
            for (int j = 0; j < d; ++j) lse += std::exp(x(i, j) - mx);
            lse = mx + std::log(lse);
            for (int j = 0; j < d; ++j) acc -= t(i, j) * (x(i, j) - lse);
        }
        loss = acc / b;
    }
    if (!std::isfinite(loss)) throw NumericalFailure("non-finite loss", 0);
    if (cache) cache->loss = loss;
    return loss;
}

Gradients backward(const ModelStack& model, const ForwardCache& cache) {
    model.validate();
    const std::size_t n_layers = model.layers.size();
    if (cache.pre.size() != n_layers || cache.weight_hashes.size() != n_layers) {
        throw InvalidInputError("forward cache does not match model layer count");
    }
    for (std::size_t i = 0; i < n_layers; ++i) {
        if (cache.weight_hashes[i] != weight_hash(model.weights[i])) {
            throw InvalidInputError("stale forward cache: weights changed since forward");
        }
    }

    const Matrix& out = cache.post.back();
    const Matrix& t = cache.targets;
    const int b = out.rows();
    const int d = out.cols();

    // dL/d(output activations).
    Matrix dz(b, d);
    if (model.loss == LossKind::mse) {
        const double scale = 2.0 / (static_cast<double>(b) * d);
        for (long long i = 0; i < dz.size(); ++i)
            dz.data()[i] = scale * (out.data()[i] - t.data()[i]);
    } else {
        for (int i = 0; i < b; ++i) {
            double mx = out(i, 0);
            for (int j = 1; j < d; ++j) mx = std::max(mx, out(i, j));
            double lse = 0.0;
            for (int j = 0; j < d; ++j) lse += std::exp(out(i, j) - mx);
            for (int j = 0; j < d; ++j) {
                const double p = std::exp(out(i, j) - mx) / lse;
                dz(i, j) = (p - t(i, j)) / b;
            }
        }
        // softmax gradient above is w.r.t. the pre-softmax logits, i.e. the
        // layer output itself; the loss head owns the softmax.
    }

    Gradients grads;
    grads.weights.resize(n_layers);
    grads.biases.resize(n_layers);

    for (int li = static_cast<int>(n_layers) - 1; li >= 0; --li) {
        const Matrix& x_in = li == 0 ? cache.input : cache.post[li - 1];
        activation_backward(dz, cache.pre[li], cache.post[li], model.layers[li].act);
        grads.weights[li] = matmul(transpose(dz), x_in);
        if (model.layers[li].has_bias) {
            std::vector<double> db(model.layers[li].out_dim, 0.0);
            for (int i = 0; i < dz.rows(); ++i)
                for (int j = 0; j < dz.cols(); ++j) db[j] += dz(i, j);
            grads.biases[li] = std::move(db);
        }
        if (li > 0) dz = matmul(dz, model.weights[li]);
    }
    return grads;
}

TeacherStudentTask make_teacher_student_task(int m, int n, int r_true, int num_samples,
                                             double noise_std, std::uint64_t seed,
                                             const TaskOptions& opts) {
    if (m <= 0 || n <= 0 || num_samples <= 0) {
        throw InvalidInputError("task dims and sample count must be positive");
    }
    if (r_true < 0 || r_true > std::min(m, n)) {
        throw InvalidInputError("r_true must lie in [0, min(m, n)]");
    }
    if (noise_std < 0.0) throw InvalidInputError("noise_std must be non-negative");

    Rng rng(seed);
    // Draw order is part of the contract: w0, U, V, inputs, noise.
    Matrix w0(m, n);
    const double w0_std = 1.0 / std::sqrt(static_cast<double>(n));
    for (long long i = 0; i < w0.size(); ++i) w0.data()[i] = rng.normal(0.0, w0_std);

    Matrix w_target = w0;
    if (r_true > 0) {
        const double fac_std = 1.0 / std::sqrt(static_cast<double>(r_true));
        Matrix u(m, r_true), v(n, r_true);
        for (long long i = 0; i < u.size(); ++i) u.data()[i] = rng.normal(0.0, fac_std);
        for (long long i = 0; i < v.size(); ++i) v.data()[i] = rng.normal(0.0, fac_std);
        w_target = w0 + matmul(u, transpose(v));
    }

    Matrix x(num_samples, n);
    for (long long i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    if (opts.whiten && num_samples >= n) {
        // S = X^T X / b is symmetric positive definite a.s.; X <- X S^{-1/2}
        // makes the sample second moment exactly I.
        Matrix s = (1.0 / num_samples) * matmul(transpose(x), x);
        SvdResult f = svd(s);
        Matrix half = transpose(f.vt);
        for (int j = 0; j < half.cols(); ++j) {
            const double inv = 1.0 / std::sqrt(f.s[j]);
            for (int i = 0; i < half.rows(); ++i) half(i, j) *= inv;
        }
        x = matmul(x, matmul(half, f.vt));
    }

    Matrix y = matmul(x, transpose(w_target));
    y = apply_activation(y, opts.act);
    if (noise_std > 0.0) {
        for (long long i = 0; i < y.size(); ++i) y.data()[i] += rng.normal(0.0, noise_std);
    }

    TeacherStudentTask task;
    task.data = Batch{std::move(x), std::move(y)};
    task.w0 = std::move(w0);
    task.w_target = std::move(w_target);
    return task;
}

// ---- serialization ----

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    if (!out) throw IoError("cannot open for writing: " + p.string());
    out << text;
    if (!out.good()) throw IoError("write failed: " + p.string());
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open for reading: " + p.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("bad JSON in " + p.string() + ": " + e.what());
    }
    return j;
}

} // namespace

void save_model(const ModelStack& model, const std::string& dir, const std::string& name) {
    model.validate();
    fs::create_directories(dir);
    json j;
    j["schema"] = "lorasb.model.v1";
    j["loss"] = to_string(model.loss);
    j["layers"] = json::array();
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const auto& spec = model.layers[i];
        const std::string wfile = name + "_w" + std::to_string(i) + ".csv";
        write_csv_file(model.weights[i], (fs::path(dir) / wfile).string());
        json layer;
        layer["in_dim"] = spec.in_dim;
        layer["out_dim"] = spec.out_dim;
        layer["activation"] = to_string(spec.act);
        layer["weights"] = wfile;
        if (spec.has_bias) layer["bias"] = model.biases[i];
        j["layers"].push_back(layer);
    }
    write_text(fs::path(dir) / (name + ".json"), j.dump(2) + "\n");
}

ModelStack load_model(const std::string& dir, const std::string& name) {
    const json j = read_json(fs::path(dir) / (name + ".json"));
    if (j.value("schema", "") != "lorasb.model.v1") {
        throw IoError("unexpected model schema in " + name);
    }
    ModelStack model;
    model.loss = loss_from_string(j.at("loss").get<std::string>());
    for (const auto& layer : j.at("layers")) {
        LayerSpec spec;
        spec.in_dim = layer.at("in_dim").get<int>();
        spec.out_dim = layer.at("out_dim").get<int>();
        spec.act = activation_from_string(layer.at("activation").get<std::string>());
        spec.has_bias = layer.contains("bias");
        model.layers.push_back(spec);
        model.weights.push_back(
            read_csv_file((fs::path(dir) / layer.at("weights").get<std::string>()).string()));
        model.biases.push_back(spec.has_bias ? layer.at("bias").get<std::vector<double>>()
                                             : std::vector<double>{});
    }
    model.validate();
    return model;
}

void save_batch(const Batch& batch, const std::string& dir, const std::string& name) {
    fs::create_directories(dir);
    write_csv_file(batch.inputs, (fs::path(dir) / (name + "_inputs.csv")).string());
    write_csv_file(batch.targets, (fs::path(dir) / (name + "_targets.csv")).string());
}

Batch load_batch(const std::string& dir, const std::string& name) {
    Batch b;
    b.inputs = read_csv_file((fs::path(dir) / (name + "_inputs.csv")).string());
    b.targets = read_csv_file((fs::path(dir) / (name + "_targets.csv")).string());
    return b;
}

} // namespace lorasb
