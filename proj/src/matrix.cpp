#include "lorasb/matrix.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>

#include "lorasb/error.hpp"

namespace lorasb {

namespace {

void require_shape(int rows, int cols) {
    if (rows <= 0 || cols <= 0) {
        throw InvalidInputError("matrix dimensions must be positive, got " +
                                std::to_string(rows) + "x" + std::to_string(cols));
    }
}

// Caller-supplied data is input, so a NaN here is the caller's bug, not a
// numerical breakdown mid-computation.
void require_finite_input(const std::vector<double>& data) {
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i])) {
            throw InvalidInputError("non-finite value at flat index " + std::to_string(i) +
                                    " in matrix data");
        }
    }
}

} // namespace

Matrix::Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
    require_shape(rows, cols);
    data_.assign(static_cast<std::size_t>(rows) * cols, 0.0);
}

Matrix::Matrix(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require_shape(rows, cols);
    if (data_.size() != static_cast<std::size_t>(rows) * cols) {
        throw InvalidInputError("matrix data length " + std::to_string(data_.size()) +
                                " does not match shape " + std::to_string(rows) + "x" +
                                std::to_string(cols));
    }
    require_finite_input(data_);
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = static_cast<int>(rows.size());
    cols_ = rows_ > 0 ? static_cast<int>(rows.begin()->size()) : 0;
    require_shape(rows_, cols_);
    data_.reserve(static_cast<std::size_t>(rows_) * cols_);
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != cols_) {
            throw InvalidInputError("ragged initializer: expected " + std::to_string(cols_) +
                                    " columns");
        }
        data_.insert(data_.end(), row.begin(), row.end());
    }
    require_finite_input(data_);
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool Matrix::bit_equal(const Matrix& other) const noexcept {
    if (!same_shape(other)) return false;
    if (data_.empty()) return true;
    return std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0;
}

void Matrix::check_finite(const char* context) const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            throw NumericalFailure(std::string("non-finite entry after ") + context, 0);
        }
    }
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw InvalidInputError("matmul shape mismatch: " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " * " + std::to_string(b.rows()) +
                                "x" + std::to_string(b.cols()));
    }
    Matrix c(a.rows(), b.cols());
    const int n = a.cols();
    const int p = b.cols();
    // i-k-j order keeps the inner loop contiguous in both b and c.
    for (int i = 0; i < a.rows(); ++i) {
        double* crow = c.data() + static_cast<std::size_t>(i) * p;
        for (int k = 0; k < n; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.data() + static_cast<std::size_t>(k) * p;
            for (int j = 0; j < p; ++j) crow[j] += aik * brow[j];
        }
    }
    c.check_finite("matmul");
    return c;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw InvalidInputError("matrix add shape mismatch");
    Matrix c = a;
    for (long long i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
    c.check_finite("add");
    return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw InvalidInputError("matrix subtract shape mismatch");
    Matrix c = a;
    for (long long i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
    c.check_finite("subtract");
    return c;
}

Matrix operator*(double c, const Matrix& m) {
    Matrix out = m;
    for (long long i = 0; i < out.size(); ++i) out.data()[i] *= c;
    out.check_finite("scale");
    return out;
}

double frob_inner(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw InvalidInputError("frob_inner shape mismatch");
    double acc = 0.0;
    for (long long i = 0; i < a.size(); ++i) acc += a.data()[i] * b.data()[i];
    if (!std::isfinite(acc)) throw NumericalFailure("non-finite frob_inner", 0);
    return acc;
}

double frob_norm(const Matrix& m) {
    double acc = 0.0;
    for (long long i = 0; i < m.size(); ++i) acc += m.data()[i] * m.data()[i];
    return std::sqrt(acc);
}

double max_abs(const Matrix& m) {
    double best = 0.0;
    for (long long i = 0; i < m.size(); ++i) best = std::max(best, std::fabs(m.data()[i]));
    return best;
}

Matrix sign_matrix(const Matrix& m) {
    Matrix out = m;
    for (long long i = 0; i < out.size(); ++i) {
        const double v = out.data()[i];
        out.data()[i] = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    }
    return out;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_csv(const Matrix& m, std::ostream& out) {
    for (int i = 0; i < m.rows(); ++i) {
        for (int j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
}

std::string to_csv(const Matrix& m) {
    std::ostringstream ss;
    write_csv(m, ss);
    return ss.str();
}

void write_csv_file(const Matrix& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    write_csv(m, out);
    if (!out.good()) throw IoError("write failed: " + path);
}

Matrix read_csv(std::istream& in) {
    std::vector<double> data;
    std::string line;
    int cols = -1;
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        int this_cols = 0;
        while (std::getline(ls, cell, ',')) {
            std::size_t pos = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &pos);
            } catch (const std::exception&) {
                throw IoError("bad CSV cell: '" + cell + "'");
            }
            while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
            if (pos != cell.size()) throw IoError("bad CSV cell: '" + cell + "'");
            data.push_back(v);
            ++this_cols;
        }
        if (cols == -1) cols = this_cols;
        if (this_cols != cols) throw IoError("ragged CSV: row " + std::to_string(rows));
        ++rows;
    }
    if (rows == 0) throw IoError("empty CSV");
    return Matrix(rows, cols, std::move(data));
}

Matrix read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    return read_csv(in);
}

} // namespace lorasb
