#include "trialign/rules.hpp"

#include <algorithm>
#include <map>

#include "trialign/errors.hpp"

namespace trialign {

using nlohmann::json;

bool Interval::contains(double x) const {
    if (lo && (lo_inclusive ? x < *lo : x <= *lo)) return false;
    if (hi && (hi_inclusive ? x > *hi : x >= *hi)) return false;
    return true;
}

bool Criterion::passes(const FruitSample& sample) const {
    const auto value = sample_attribute(sample, attribute);
    if (!value) throw NotFoundError("criterion on unknown attribute '" + attribute + "'");
    return std::any_of(any_of.begin(), any_of.end(), [&](const Interval& i) { return i.contains(*value); });
}

bool GradeRule::passes(const FruitSample& sample) const {
    return std::all_of(all_of.begin(), all_of.end(), [&](const Criterion& c) { return c.passes(sample); });
}

namespace {

// [lo, hi)
Interval half_open(double lo, double hi) { return Interval{lo, true, hi, false}; }
Interval closed(double lo, double hi) { return Interval{lo, true, hi, true}; }
Interval at_most(double hi) { return Interval{std::nullopt, true, hi, true}; }
Interval at_least(double lo) { return Interval{lo, true, std::nullopt, false}; }

GradingStandard korla_pear() {
    GradingStandard s;
    s.name = "korla-pear";
    s.grades = {
        {"A", {{"weight", "g", {closed(120.0, 160.0)}}, {"scar_area", "cm2", {closed(0.0, 0.0)}}}},
        {"B", {{"weight", "g", {half_open(100.0, 120.0)}}, {"scar_area", "cm2", {at_most(0.8)}}}},
        {"C", {{"weight", "g", {half_open(80.0, 100.0)}}, {"scar_area", "cm2", {at_most(1.0)}}}},
    };
    s.notes = {
        "Grade A weight prints both bounds inclusive; other bare ranges are [lo, hi).",
        "'No scarring' is scar_area == 0.",
    };
    return s;
}

GradingStandard clementine() {
    GradingStandard s;
    s.name = "clementine";
    s.grades = {
        {"A", {{"diameter", "mm", {half_open(45.0, 50.0)}}, {"stem_integrity", "fraction", {at_least(1.0)}}}},
        {"B",
         {{"diameter", "mm", {half_open(40.0, 45.0), half_open(50.0, 55.0)}},
          {"stem_integrity", "fraction", {at_least(0.95)}}}},
        {"C",
         {{"diameter", "mm", {half_open(35.0, 40.0), half_open(55.0, 60.0)}},
          {"stem_integrity", "fraction", {at_least(0.90)}}}},
    };
    s.notes = {
        "The source standard prints 'incomplete' for the Grade A stem; read as 100% complete so the "
        "requirement is monotone with B (95%) and C (90%).",
    };
    return s;
}

GradingStandard cherry_tomato() {
    GradingStandard s;
    s.name = "cherry-tomato";
    s.grades = {
        {"Premium", {{"weight", "g", {half_open(10.6, 20.6)}}, {"firmness", "fraction", {at_least(0.8)}}}},
        {"Grade1", {{"weight", "g", {half_open(13.0, 20.0)}}, {"firmness", "fraction", {at_least(0.6)}}}},
    };
    s.notes = {
        "Only two grades; Reject is the implicit third outcome.",
        "The weight bands overlap, so weight alone cannot separate the grades; firmness "
        "('firm, elastic' vs 'slightly firm') is encoded as >= 0.8 and >= 0.6.",
    };
    return s;
}

const std::map<std::string, GradingStandard, std::less<>>& registry() {
    static const std::map<std::string, GradingStandard, std::less<>> r = [] {
        std::map<std::string, GradingStandard, std::less<>> m;
        for (auto s : {korla_pear(), clementine(), cherry_tomato()}) m.emplace(s.name, std::move(s));
        return m;
    }();
    return r;
}

}  // namespace

std::vector<std::string> builtin_standard_names() {
    std::vector<std::string> out;
    for (const auto& [name, _] : registry()) out.push_back(name);
    return out;
}

const GradingStandard& builtin_standard(std::string_view name) {
    const auto it = registry().find(name);
    if (it == registry().end()) throw NotFoundError("unknown standard '" + std::string(name) + "'");
    return it->second;
}

std::string grade_by_rules(const FruitSample& sample, const GradingStandard& standard) {
    for (const auto& g : standard.grades) {
        if (g.passes(sample)) return g.label;
    }
    return std::string(kReject);
}

std::string grade_by_rules(const FruitSample& sample, std::string_view standard) {
    return grade_by_rules(sample, builtin_standard(standard));
}

json to_json(const GradingStandard& s) {
    json grades = json::array();
    for (const auto& g : s.grades) {
        json criteria = json::array();
        for (const auto& c : g.all_of) {
            json intervals = json::array();
            for (const auto& i : c.any_of) {
                json ji = json::object();
                if (i.lo) {
                    ji["min"] = *i.lo;
                    ji["min_inclusive"] = i.lo_inclusive;
                }
                if (i.hi) {
                    ji["max"] = *i.hi;
                    ji["max_inclusive"] = i.hi_inclusive;
                }
                intervals.push_back(std::move(ji));
            }
            criteria.push_back(json{{"attribute", c.attribute}, {"unit", c.unit}, {"any_of", std::move(intervals)}});
        }
        grades.push_back(json{{"label", g.label}, {"all_of", std::move(criteria)}});
    }
    return json{{"standard", s.name}, {"grades", std::move(grades)}, {"notes", s.notes}};
}

GradingStandard standard_from_json(const json& doc) {
    auto fail = [](const std::string& what) -> void { throw SchemaError("standard: " + what); };
    if (!doc.is_object() || !doc.contains("standard") || !doc["standard"].is_string()) fail("missing 'standard'");
    if (!doc.contains("grades") || !doc["grades"].is_array()) fail("missing 'grades'");
    GradingStandard s;
    s.name = doc["standard"].get<std::string>();
    for (const auto& g : doc["grades"]) {
        if (!g.contains("label") || !g["label"].is_string() || !g.contains("all_of") || !g["all_of"].is_array()) {
            fail("grade needs 'label' and 'all_of'");
        }
        GradeRule rule;
        rule.label = g["label"].get<std::string>();
        for (const auto& c : g["all_of"]) {
            if (!c.contains("attribute") || !c.contains("any_of") || !c["any_of"].is_array()) {
                fail("criterion needs 'attribute' and 'any_of'");
            }
            Criterion crit;
            crit.attribute = c["attribute"].get<std::string>();
            crit.unit = c.value("unit", std::string{});
            for (const auto& i : c["any_of"]) {
                Interval iv;
                if (i.contains("min")) {
                    iv.lo = i["min"].get<double>();
                    iv.lo_inclusive = i.value("min_inclusive", true);
                }
                if (i.contains("max")) {
                    iv.hi = i["max"].get<double>();
                    iv.hi_inclusive = i.value("max_inclusive", false);
                }
                crit.any_of.push_back(iv);
            }
            rule.all_of.push_back(std::move(crit));
        }
        s.grades.push_back(std::move(rule));
    }
    if (doc.contains("notes")) s.notes = doc["notes"].get<std::vector<std::string>>();
    return s;
}

}  // namespace trialign
