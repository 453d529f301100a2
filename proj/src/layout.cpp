#include "lorasb/layout.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "lorasb/error.hpp"

namespace lorasb {

namespace {

using nlohmann::json;

std::vector<ModuleGroup> parse_groups(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) {
        throw IoError("layout " + where + " must be a non-empty array");
    }
    std::vector<ModuleGroup> groups;
    for (const auto& g : j) {
        ModuleGroup group;
        group.label = g.at("label").get<std::string>();
        group.m = g.at("m").get<int>();
        group.n = g.at("n").get<int>();
        group.count = g.at("count").get<int>();
        if (group.m <= 0 || group.n <= 0 || group.count <= 0) {
            throw IoError("layout " + where + ": non-positive entry in group '" + group.label +
                          "'");
        }
        groups.push_back(group);
    }
    return groups;
}

} // namespace

const std::vector<ModuleGroup>& ArchLayout::set_for(AdapterMethod method) const {
    auto it = method_overrides.find(to_string(method));
    return it != method_overrides.end() ? it->second : default_set;
}

ArchLayout load_layout(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open layout file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("bad layout JSON in " + path + ": " + e.what());
    }
    if (j.value("schema", "") != "lorasb.layout.v1") {
        throw IoError("unexpected layout schema in " + path);
    }
    ArchLayout layout;
    layout.name = j.at("name").get<std::string>();
    layout.default_set = parse_groups(j.at("modules"), "modules");
    layout.note = j.value("note", "");
    const std::string unit = j.value("display_unit", "M");
    if (unit != "M" && unit != "K") throw IoError("layout display_unit must be 'M' or 'K'");
    layout.display_unit = unit[0];
    if (j.contains("method_overrides")) {
        for (const auto& [method, groups] : j.at("method_overrides").items()) {
            adapter_method_from_string(method);  // validates the key
            layout.method_overrides[method] =
                parse_groups(groups, "method_overrides." + method);
        }
    }
    return layout;
}

long long layout_param_count(const ArchLayout& layout, AdapterMethod method, int rank) {
    std::vector<std::pair<int, int>> shapes;
    for (const auto& g : layout.set_for(method)) {
        for (int i = 0; i < g.count; ++i) shapes.emplace_back(g.m, g.n);
    }
    return param_count(method, shapes, rank);
}

std::string format_param_count(long long count, char unit) {
    if (count < 0) throw InvalidInputError("negative parameter count");
    if (unit != 'M' && unit != 'K') throw InvalidInputError("unit must be 'M' or 'K'");
    const double divisor = unit == 'M' ? 1e4 : 1e1;  // two decimals after /1e6 or /1e3
    const long long scaled = std::llround(static_cast<double>(count) / divisor);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%lld.%02lld %c", scaled / 100, scaled % 100, unit);
    return buf;
}

} // namespace lorasb
