#pragma once

// Classification metrics over a confusion matrix, Cochran's Q for related
// binary responses, and the chi-square survival function behind its p-value.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace trialign {

struct ConfusionMatrix {
    std::vector<std::string> classes;
    std::vector<std::vector<std::uint64_t>> counts;  // rows actual, columns predicted

    std::uint64_t total() const;
    // Throws SchemaError unless square and matching the class list.
    void check() const;
};

enum class Averaging { weighted, macro };

struct ClassMetrics {
    std::string label;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t support = 0;  // actual count
};

struct ClassificationReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    Averaging averaging = Averaging::weighted;
    std::vector<ClassMetrics> per_class;
};

// Undefined ratios (no predicted or no actual positives) count as 0.
// Throws DomainError when the matrix is empty.
ClassificationReport classification_metrics(const ConfusionMatrix& m, Averaging averaging = Averaging::weighted);

struct CochranAggregates {
    std::vector<std::int64_t> g;   // selections per option
    std::int64_t sum_l = 0;        // sum over respondents of selections made
    std::int64_t sum_l2 = 0;       // sum of their squares
};

struct CochranResult {
    double q = 0.0;
    int df = 0;
    double p = 1.0;
    std::vector<std::size_t> ordering;  // options by selection count, most first
};

// Rows are respondents, columns options; entries 0 or 1.
CochranAggregates aggregate(const std::vector<std::vector<int>>& responses);

// Throws DegenerateInputError when k < 2 or k*sum_l - sum_l2 <= 0, and
// SchemaError when sum(g) != sum_l.
CochranResult cochran_q(const CochranAggregates& input);
CochranResult cochran_q(const std::vector<std::vector<int>>& responses);

// Upper tail of the chi-square distribution, Q(df/2, x/2). Throws
// DomainError for x < 0 or df < 1.
double chi2_sf(double x, int df);
// Regularized upper incomplete gamma Q(a, x).
double gamma_q(double a, double x);

std::string_view to_string(Averaging averaging);
nlohmann::json to_json(const ClassificationReport& report);
nlohmann::json to_json(const CochranResult& result);

}  // namespace trialign
