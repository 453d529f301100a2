#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lorasb/matrix.hpp"

namespace lorasb {

// How a weight matrix is parameterized during fine-tuning:
//   full_ft  W0 + Delta, every entry trainable
//   lora     W0 + s B A, B (m x r) and A (r x n) trainable
//   lora_xs  W0 + s B R A, only the r x r core R trainable, raw gradient
//   lora_sb  same parameterization as lora_xs, corrected gradient pathway
enum class AdapterMethod { full_ft, lora, lora_xs, lora_sb };

const char* to_string(AdapterMethod m);
AdapterMethod adapter_method_from_string(const std::string& s);

struct AdapterState {
    AdapterMethod method = AdapterMethod::lora_sb;
    Matrix w0;      // frozen base weight, m x n
    Matrix b;       // m x r   (lora, lora_xs, lora_sb)
    Matrix r_core;  // r x r   (lora_xs, lora_sb)
    Matrix a;       // r x n   (lora, lora_xs, lora_sb)
    Matrix delta;   // m x n   (full_ft)
    double s = 1.0;

    int rank() const;
    void validate() const;  // shape and finiteness checks per method
};

// W0 + update for the state's method.
Matrix effective_weight(const AdapterState& st);

// The update part alone (effective - W0, but computed directly).
Matrix update_matrix(const AdapterState& st);

// Trainable parameter count over a set of module shapes (m, n) at a given
// rank. full_ft: sum m*n; lora: sum r*(m+n); lora_xs/lora_sb: count * r^2.
long long param_count(AdapterMethod method, const std::vector<std::pair<int, int>>& shapes,
                      int rank);

// True when Col(m) is inside Col(B) and Row(m) is inside Row(A):
// || P_B m P_A - m ||_F <= tol * max(1, ||m||_F) with the orthogonal
// projectors P_B = B (B^T B)^{-1} B^T and P_A = A^T (A A^T)^{-1} A.
// Throws SingularityError when a Gram matrix is singular.
bool subspace_membership(const Matrix& b, const Matrix& a, const Matrix& m, double tol);

// JSON + CSV directory serialization (exact round trip).
void save_adapter(const AdapterState& st, const std::string& dir, const std::string& name);
AdapterState load_adapter(const std::string& dir, const std::string& name);

} // namespace lorasb
