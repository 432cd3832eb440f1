#include "trialign/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "trialign/errors.hpp"

namespace trialign {

using nlohmann::json;

std::size_t misgraded(const RgidEntry& entry, const std::vector<std::vector<double>>& normalized,
                      const std::vector<std::string>& labels) {
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < normalized.size(); ++i) {
        if (entry.thresholds.decide(composite_score(normalized[i], entry.omega)) != labels[i]) ++wrong;
    }
    return wrong;
}

AdaptResult adapt_entry_report(const Repository& repo, const VarietyId& base_lambda, const VarietyId& new_lambda,
                               const std::vector<CalibrationSample>& calibration, const Extractor& extractor) {
    const RgidEntry& base = repo.lookup(base_lambda);
    if (calibration.empty()) throw InfeasibleError("calibration set is empty");
    if (new_lambda.empty()) throw InfeasibleError("new variety identifier is empty");

    std::vector<std::vector<double>> x;
    std::vector<std::string> y;
    for (const auto& c : calibration) {
        if (c.label != kReject && !base.thresholds.has_label(c.label)) {
            throw InfeasibleError("calibration label '" + c.label + "' is not a grade of " + base_lambda.str());
        }
        x.push_back(normalized(extract_features(c.sample, base, extractor), base));
        y.push_back(c.label);
    }

    AdaptResult r;
    r.entry = base;
    r.entry.lambda = new_lambda;
    r.budget = static_cast<std::size_t>(std::floor(kAdaptBudgetRatio * static_cast<double>(scalar_parameter_count(base))));
    r.misgraded_before = misgraded(r.entry, x, y);
    std::size_t current = r.misgraded_before;

    auto admissible = [&](const RgidEntry& candidate) {
        return validate_entry(candidate).empty() && changed_parameter_count(base, candidate) <= r.budget;
    };

    // Omega: best strictly improving transfer per round.
    const std::size_t dims = base.omega.size();
    for (int round = 0; round < 1000 && current > 0; ++round) {
        std::optional<RgidEntry> best;
        std::size_t best_count = current;
        for (std::size_t to = 0; to < dims; ++to) {
            for (std::size_t from = 0; from < dims; ++from) {
                if (to == from || r.entry.omega[from] < kAdaptStep - 1e-12) continue;
                RgidEntry candidate = r.entry;
                candidate.omega[from] = std::max(candidate.omega[from] - kAdaptStep, 0.0);
                candidate.omega[to] += kAdaptStep;
                if (!admissible(candidate)) continue;
                const std::size_t count = misgraded(candidate, x, y);
                if (count < best_count) {
                    best_count = count;
                    best = std::move(candidate);
                }
            }
        }
        if (!best) break;
        r.entry = std::move(*best);
        current = best_count;
    }

    // Cuts: midpoint between the highest score labelled below a cut and the
    // lowest score labelled at or above it.
    auto& cuts = r.entry.thresholds.cuts;
    auto rank = [&](const std::string& label) -> long {
        for (std::size_t i = 0; i < cuts.size(); ++i) {
            if (cuts[i].label == label) return static_cast<long>(i);
        }
        return -1;
    };
    for (std::size_t c = 0; c < cuts.size() && current > 0; ++c) {
        double below = -std::numeric_limits<double>::infinity();
        double above = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double s = composite_score(x[i], r.entry.omega);
            if (rank(y[i]) < static_cast<long>(c)) {
                below = std::max(below, s);
            } else {
                above = std::min(above, s);
            }
        }
        if (!std::isfinite(below) || !std::isfinite(above) || !(below < above)) continue;
        RgidEntry candidate = r.entry;
        candidate.thresholds.cuts[c].score = (below + above) / 2.0;
        if (!admissible(candidate)) continue;
        const std::size_t count = misgraded(candidate, x, y);
        if (count < current) {
            r.entry = std::move(candidate);
            current = count;
        }
    }

    r.misgraded_after = misgraded(r.entry, x, y);
    r.changed = changed_parameter_count(base, r.entry);
    return r;
}

RgidEntry adapt_entry(const Repository& repo, const VarietyId& base_lambda, const VarietyId& new_lambda,
                      const std::vector<CalibrationSample>& calibration, const Extractor& extractor) {
    return adapt_entry_report(repo, base_lambda, new_lambda, calibration, extractor).entry;
}

json to_json(const AdaptResult& r) {
    return json{{"entry", to_json(r.entry)},
                {"budget", r.budget},
                {"changed", r.changed},
                {"misgraded_before", r.misgraded_before},
                {"misgraded_after", r.misgraded_after}};
}

}  // namespace trialign
