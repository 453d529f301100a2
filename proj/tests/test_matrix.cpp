#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "lorasb/error.hpp"
#include "lorasb/matrix.hpp"
#include "lorasb/rng.hpp"

using namespace lorasb;

TEST_CASE("matmul on a worked example") {
    const Matrix a = {{1.0, 2.0}, {3.0, 4.0}};
    const Matrix x = {{0.0}, {1.0}};
    const Matrix y = matmul(a, x);
    CHECK(y.rows() == 2);
    CHECK(y.cols() == 1);
    CHECK(y(0, 0) == 2.0);
    CHECK(y(1, 0) == 4.0);
}

TEST_CASE("matmul rejects shape mismatches") {
    const Matrix a(2, 3);
    const Matrix b(2, 3);
    CHECK_THROWS_AS(matmul(a, b), InvalidInputError);
    CHECK_THROWS_AS(a + Matrix(3, 2), InvalidInputError);
    CHECK_THROWS_AS(a - Matrix(2, 2), InvalidInputError);
    CHECK_THROWS_AS(frob_inner(a, Matrix(3, 2)), InvalidInputError);
}

TEST_CASE("constructors reject non-finite data and bad dims") {
    CHECK_THROWS_AS(Matrix(0, 3), InvalidInputError);
    CHECK_THROWS_AS(Matrix(2, -1), InvalidInputError);
    CHECK_THROWS_AS(Matrix(1, 1, {std::nan("")}), InvalidInputError);
    CHECK_THROWS_AS(Matrix(1, 2, {1.0}), InvalidInputError);  // wrong element count
    Matrix m(2, 2);
    m.data()[3] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(m.check_finite("test"), NumericalFailure);
}

TEST_CASE("frobenius products and norms") {
    const Matrix a = {{3.0, 0.0}, {0.0, 4.0}};
    CHECK(frob_norm(a) == 5.0);
    CHECK(frob_inner(a, a) == 25.0);
    CHECK(max_abs(a) == 4.0);
    const Matrix b = {{1.0, 1.0}, {1.0, 1.0}};
    CHECK(frob_inner(a, b) == 7.0);
}

TEST_CASE("transpose and identity") {
    const Matrix a = {{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}};
    const Matrix at = transpose(a);
    CHECK(at.rows() == 3);
    CHECK(at(0, 1) == 4.0);
    CHECK(at(2, 0) == 3.0);
    CHECK(transpose(at).bit_equal(a));
    const Matrix i3 = Matrix::identity(3);
    CHECK(matmul(i3, at).bit_equal(at));
}

TEST_CASE("sign_matrix maps zero to zero") {
    const Matrix m = {{-2.5, 0.0, 7.0}};
    const Matrix s = sign_matrix(m);
    CHECK(s(0, 0) == -1.0);
    CHECK(s(0, 1) == 0.0);
    CHECK(s(0, 2) == 1.0);
}

TEST_CASE("csv round trip is bit exact") {
    Rng rng(31);
    Matrix m(7, 5);
    for (long long i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * 1e3;
    m(0, 0) = 1.0 / 3.0;
    m(6, 4) = 1e-300;
    std::stringstream buf(to_csv(m));
    const Matrix back = read_csv(buf);
    CHECK(back.bit_equal(m));
}

TEST_CASE("csv reader rejects ragged and malformed input") {
    std::stringstream ragged("1,2,3\n4,5\n");
    CHECK_THROWS_AS(read_csv(ragged), IoError);
    std::stringstream junk("1.0,2.0x\n");
    CHECK_THROWS_AS(read_csv(junk), IoError);
    std::stringstream empty("");
    CHECK_THROWS_AS(read_csv(empty), IoError);
}

TEST_CASE("format_double survives a stod round trip") {
    for (const double v : {1.0 / 3.0, 2.718281828459045, -1e-17, 6.02214076e23}) {
        CHECK(std::stod(format_double(v)) == v);
    }
}

TEST_CASE("bit_equal distinguishes negative zero") {
    const Matrix a = {{0.0}};
    const Matrix b = {{-0.0}};
    CHECK(a(0, 0) == b(0, 0));  // numerically equal
    CHECK_FALSE(a.bit_equal(b));
}

TEST_CASE("rng streams are deterministic and independent") {
    Rng a(99), b(99);
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
    CHECK(Rng::derive(7, 0) != Rng::derive(7, 1));
    CHECK(Rng::derive(7, 0) == Rng::derive(7, 0));
    Rng c(1);
    for (int i = 0; i < 1000; ++i) {
        const double u = c.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(c.below(10) < 10);
    }
}
