#pragma once

// Top-layer adaptation of a dictionary entry to a new variety: only omega and
// the grade cuts may move, and never more than 5% of the entry's scalar
// parameters.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialign/features.hpp"
#include "trialign/rgid.hpp"

namespace trialign {

inline constexpr double kAdaptStep = 0.05;
inline constexpr double kAdaptBudgetRatio = 0.05;

struct CalibrationSample {
    FruitSample sample;
    std::string label;
};

struct AdaptResult {
    RgidEntry entry;
    std::size_t budget = 0;    // floor(5% of scalar parameters)
    std::size_t changed = 0;
    std::size_t misgraded_before = 0;
    std::size_t misgraded_after = 0;
};

// Samples whose full-depth grade differs from their label.
std::size_t misgraded(const RgidEntry& entry, const std::vector<std::vector<double>>& normalized,
                      const std::vector<std::string>& labels);

// Coordinate descent over omega in transfers of 0.05 between two features,
// then cuts re-fit to the midpoint between adjacent classes' score
// clusters. A move is taken only when it strictly lowers the misgrade count
// and stays within the budget. Throws NotFoundError for an unknown base and
// InfeasibleError for an empty calibration set or a label the entry lacks.
AdaptResult adapt_entry_report(const Repository& repo, const VarietyId& base_lambda, const VarietyId& new_lambda,
                               const std::vector<CalibrationSample>& calibration, const Extractor& extractor);
RgidEntry adapt_entry(const Repository& repo, const VarietyId& base_lambda, const VarietyId& new_lambda,
                      const std::vector<CalibrationSample>& calibration, const Extractor& extractor);

nlohmann::json to_json(const AdaptResult& result);

}  // namespace trialign
