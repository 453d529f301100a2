#pragma once

#include <initializer_list>
#include <iosfwd>
#include <string>
#include <vector>

namespace lorasb {

// Dense row-major matrix of doubles. Small and boring on purpose: every
// routine in this library works on desk-scale problems (dims <= 512).
// All entries are finite by construction; kernel operations check their
// results and throw NumericalFailure if an overflow/NaN slips in.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols);                            // zero filled
    Matrix(int rows, int cols, std::vector<double> data);  // row major
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(int n);

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    long long size() const noexcept { return static_cast<long long>(rows_) * cols_; }
    bool empty() const noexcept { return rows_ == 0 || cols_ == 0; }

    double& operator()(int i, int j) noexcept { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const noexcept { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    // Bitwise equality, used by the frozen-factor and determinism checks.
    bool bit_equal(const Matrix& other) const noexcept;

    // Throws NumericalFailure if any entry is NaN or infinite.
    void check_finite(const char* context) const;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

Matrix transpose(const Matrix& m);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double c, const Matrix& m);

double frob_inner(const Matrix& a, const Matrix& b);
double frob_norm(const Matrix& m);
double max_abs(const Matrix& m);

// Elementwise sign with sign(0) = 0.
Matrix sign_matrix(const Matrix& m);

// CSV with 17 significant digits, enough to round-trip doubles exactly.
void write_csv(const Matrix& m, std::ostream& out);
void write_csv_file(const Matrix& m, const std::string& path);
std::string to_csv(const Matrix& m);
Matrix read_csv(std::istream& in);
Matrix read_csv_file(const std::string& path);

// %.17g formatting used by every CSV/report writer in the library.
std::string format_double(double v);

} // namespace lorasb
