#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lorasb/matrix.hpp"
#include "lorasb/rng.hpp"

namespace lorasb {

// Seeded property batteries behind `check` and large parts of the
// acceptance gate. Each battery runs a fixed-seed family of random
// instances against the independent oracles and reports worst-case
// deviations next to the bound they must stay under.

struct CheckItem {
    std::string name;
    bool pass = false;
    double measured = 0.0;  // worst observed value
    double bound = 0.0;     // what it must stay under (direction in name)
    std::string detail;     // first failing case, serialized for replay
};

struct CheckReport {
    std::string suite;
    std::vector<CheckItem> items;
    bool pass = false;

    std::string to_json() const;
};

// Known suites: lemma1, lemma2, thm1, thm2, thm3, thm4, eckart_young,
// gradcheck. run_check_suite throws InvalidInputError for anything else.
const std::vector<std::string>& check_suite_names();
CheckReport run_check_suite(const std::string& suite);

// A random frozen-factor instance shared by several batteries.
struct CoreInstance {
    Matrix b;  // m x r
    Matrix a;  // r x n
    Matrix g;  // m x n
    double s = 1.0;
};

CoreInstance sample_core_instance(Rng& rng, int max_dim, int max_rank, double s);

} // namespace lorasb
