#pragma once

#include <map>
#include <string>
#include <vector>

#include "lorasb/adapter.hpp"

namespace lorasb {

// A named group of identical adapted weight matrices, e.g. 32 q_proj
// matrices of shape 4096 x 4096 across the decoder layers.
struct ModuleGroup {
    std::string label;
    int m = 0;
    int n = 0;
    int count = 0;
};

// Which matrices of a transformer are adapted. Baseline methods are
// conventionally reported over different module sets, so a layout may carry
// explicit per-method overrides of the default set.
struct ArchLayout {
    std::string name;
    std::vector<ModuleGroup> default_set;
    std::map<std::string, std::vector<ModuleGroup>> method_overrides;
    std::string note;
    char display_unit = 'M';  // unit for human-readable counts, M or K

    const std::vector<ModuleGroup>& set_for(AdapterMethod method) const;
};

ArchLayout load_layout(const std::string& path);

long long layout_param_count(const ArchLayout& layout, AdapterMethod method, int rank);

// Human-readable count in the requested unit ('M' or 'K'), two decimals,
// round-half-away-from-zero.
std::string format_param_count(long long count, char unit);

} // namespace lorasb
