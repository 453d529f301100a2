#include "lorasb/adapter.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "lorasb/error.hpp"
#include "lorasb/svd.hpp"

namespace lorasb {

const char* to_string(AdapterMethod m) {
    switch (m) {
        case AdapterMethod::full_ft: return "full_ft";
        case AdapterMethod::lora: return "lora";
        case AdapterMethod::lora_xs: return "lora_xs";
        case AdapterMethod::lora_sb: return "lora_sb";
    }
    return "?";
}

AdapterMethod adapter_method_from_string(const std::string& s) {
    if (s == "full_ft") return AdapterMethod::full_ft;
    if (s == "lora") return AdapterMethod::lora;
    if (s == "lora_xs") return AdapterMethod::lora_xs;
    if (s == "lora_sb") return AdapterMethod::lora_sb;
    throw InvalidInputError("unknown adapter method: " + s);
}

int AdapterState::rank() const {
    switch (method) {
        case AdapterMethod::full_ft: return std::min(w0.rows(), w0.cols());
        case AdapterMethod::lora: return b.cols();
        case AdapterMethod::lora_xs:
        case AdapterMethod::lora_sb: return r_core.rows();
    }
    return 0;
}

void AdapterState::validate() const {
    if (w0.empty()) throw InvalidInputError("adapter has no base weight");
    w0.check_finite("adapter w0");
    if (!(s > 0.0)) throw InvalidInputError("adapter scale s must be positive");
    const int m = w0.rows();
    const int n = w0.cols();
    switch (method) {
        case AdapterMethod::full_ft:
            if (delta.rows() != m || delta.cols() != n) {
                throw InvalidInputError("full_ft delta shape mismatch");
            }
            delta.check_finite("adapter delta");
            return;
        case AdapterMethod::lora:
            if (b.rows() != m || a.cols() != n || b.cols() != a.rows()) {
                throw InvalidInputError("lora factor shape mismatch");
            }
            break;
        case AdapterMethod::lora_xs:
        case AdapterMethod::lora_sb:
            if (b.rows() != m || a.cols() != n || r_core.rows() != r_core.cols() ||
                b.cols() != r_core.rows() || r_core.cols() != a.rows()) {
                throw InvalidInputError("adapter factor shape mismatch");
            }
            r_core.check_finite("adapter R");
            break;
    }
    b.check_finite("adapter B");
    a.check_finite("adapter A");
    const int r = rank();
    if (r < 1 || r > std::min(m, n)) {
        throw InvalidInputError("adapter rank " + std::to_string(r) +
                                " out of range [1, min(m, n)]");
    }
}

Matrix update_matrix(const AdapterState& st) {
    st.validate();
    switch (st.method) {
        case AdapterMethod::full_ft: return st.delta;
        case AdapterMethod::lora: return st.s * matmul(st.b, st.a);
        case AdapterMethod::lora_xs:
        case AdapterMethod::lora_sb: return st.s * matmul(st.b, matmul(st.r_core, st.a));
    }
    throw InvalidInputError("unreachable adapter method");
}

Matrix effective_weight(const AdapterState& st) { return st.w0 + update_matrix(st); }

long long param_count(AdapterMethod method, const std::vector<std::pair<int, int>>& shapes,
                      int rank) {
    if (shapes.empty()) throw InvalidInputError("param_count needs at least one module shape");
    if (rank < 1) throw InvalidInputError("param_count rank must be >= 1");
    long long total = 0;
    for (const auto& [m, n] : shapes) {
        if (m <= 0 || n <= 0) throw InvalidInputError("module shapes must be positive");
        if (rank > std::min(m, n)) {
            throw InvalidInputError("rank " + std::to_string(rank) + " exceeds min(m, n) for " +
                                    std::to_string(m) + "x" + std::to_string(n));
        }
        switch (method) {
            case AdapterMethod::full_ft:
                total += static_cast<long long>(m) * n;
                break;
            case AdapterMethod::lora:
                total += static_cast<long long>(rank) * (m + n);
                break;
            case AdapterMethod::lora_xs:
            case AdapterMethod::lora_sb:
                total += static_cast<long long>(rank) * rank;
                break;
        }
    }
    return total;
}

bool subspace_membership(const Matrix& b, const Matrix& a, const Matrix& m, double tol) {
    if (b.rows() != m.rows() || a.cols() != m.cols()) {
        throw InvalidInputError("subspace_membership shape mismatch");
    }
    Matrix bgram_inv = inverse_small(matmul(transpose(b), b));
    Matrix agram_inv = inverse_small(matmul(a, transpose(a)));
    // P_B m P_A, assembled small-first.
    Matrix left = matmul(b, matmul(bgram_inv, matmul(transpose(b), m)));
    Matrix proj = matmul(matmul(left, transpose(a)), matmul(agram_inv, a));
    const double resid = frob_norm(proj - m);
    return resid <= tol * std::max(1.0, frob_norm(m));
}

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void maybe_write(const Matrix& m, const fs::path& p, json& j, const char* key,
                 const std::string& fname) {
    if (!m.empty()) {
        write_csv_file(m, (p / fname).string());
        j[key] = fname;
    }
}

Matrix maybe_read(const json& j, const fs::path& p, const char* key) {
    if (!j.contains(key)) return Matrix{};
    return read_csv_file((p / j.at(key).get<std::string>()).string());
}

} // namespace

void save_adapter(const AdapterState& st, const std::string& dir, const std::string& name) {
    st.validate();
    fs::create_directories(dir);
    const fs::path p(dir);
    json j;
    j["schema"] = "lorasb.adapter.v1";
    j["method"] = to_string(st.method);
    j["s"] = st.s;
    write_csv_file(st.w0, (p / (name + "_w0.csv")).string());
    j["w0"] = name + "_w0.csv";
    maybe_write(st.b, p, j, "b", name + "_b.csv");
    maybe_write(st.r_core, p, j, "r", name + "_r.csv");
    maybe_write(st.a, p, j, "a", name + "_a.csv");
    maybe_write(st.delta, p, j, "delta", name + "_delta.csv");
    std::ofstream out(p / (name + ".json"));
    if (!out) throw IoError("cannot open for writing: " + (p / (name + ".json")).string());
    out << j.dump(2) << "\n";
    if (!out.good()) throw IoError("write failed: " + (p / (name + ".json")).string());
}

AdapterState load_adapter(const std::string& dir, const std::string& name) {
    const fs::path p(dir);
    std::ifstream in(p / (name + ".json"));
    if (!in) throw IoError("cannot open for reading: " + (p / (name + ".json")).string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(std::string("bad adapter JSON: ") + e.what());
    }
    if (j.value("schema", "") != "lorasb.adapter.v1") {
        throw IoError("unexpected adapter schema in " + name);
    }
    AdapterState st;
    st.method = adapter_method_from_string(j.at("method").get<std::string>());
    st.s = j.at("s").get<double>();
    st.w0 = read_csv_file((p / j.at("w0").get<std::string>()).string());
    st.b = maybe_read(j, p, "b");
    st.r_core = maybe_read(j, p, "r");
    st.a = maybe_read(j, p, "a");
    st.delta = maybe_read(j, p, "delta");
    st.validate();
    return st;
}

} // namespace lorasb
