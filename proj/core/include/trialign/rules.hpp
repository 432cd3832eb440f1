#pragma once

// Rule-based reference graders transcribed from regional grading standards.
// Each standard is data: grades in descending order, each a conjunction of
// criteria, each criterion a union of intervals with explicit endpoint
// inclusivity. The shipped standards/*.json files hold the same data.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialign/features.hpp"

namespace trialign {

struct Interval {
    std::optional<double> lo;
    bool lo_inclusive = true;
    std::optional<double> hi;
    bool hi_inclusive = false;

    bool contains(double x) const;

    friend bool operator==(const Interval&, const Interval&) = default;
};

struct Criterion {
    std::string attribute;  // see sample_attribute()
    std::string unit;
    std::vector<Interval> any_of;

    bool passes(const FruitSample& sample) const;

    friend bool operator==(const Criterion&, const Criterion&) = default;
};

struct GradeRule {
    std::string label;
    std::vector<Criterion> all_of;

    bool passes(const FruitSample& sample) const;

    friend bool operator==(const GradeRule&, const GradeRule&) = default;
};

struct GradingStandard {
    std::string name;
    std::vector<GradeRule> grades;  // best first
    std::vector<std::string> notes;

    friend bool operator==(const GradingStandard&, const GradingStandard&) = default;
};

// Names of the built-in standards: korla-pear, clementine, cherry-tomato.
std::vector<std::string> builtin_standard_names();
// Throws NotFoundError("unknown standard ...").
const GradingStandard& builtin_standard(std::string_view name);

// Highest grade whose criteria all pass, or "Reject".
std::string grade_by_rules(const FruitSample& sample, const GradingStandard& standard);
std::string grade_by_rules(const FruitSample& sample, std::string_view standard);

nlohmann::json to_json(const GradingStandard& standard);
GradingStandard standard_from_json(const nlohmann::json& doc);

}  // namespace trialign
