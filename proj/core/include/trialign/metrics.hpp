#pragma once

// Trust factors, information coverage quality (ICQ), processing efficiency
// (FE), cost share (FC) and the composite Triangular Trust Index (TTI).

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialign/rgid.hpp"

namespace trialign {

struct TrustFactor {
    std::string feature_id;
    std::string layer;
    double value = 0.0;
};

// T_e = s_i * t_e. Throws DomainError unless s_i > 0 and t_e >= 0.
double trust_factor(double layer_weight, double importance);

// Looks up s_i and t_e in the entry's trust parameters.
// Throws NotFoundError for an unknown layer or factor.
TrustFactor make_trust_factor(const RgidEntry& entry, const std::string& factor_id, const std::string& layer);

double sum_need(std::span<const TrustFactor> needs);          // ccq
double sum_provided(std::span<const TrustFactor> provided);   // scq

// min(scq / ccq, 1 + gamma). Throws DomainError unless ccq > 0.
double icq(double scq, double ccq, double gamma);
// AT / R. Throws DomainError unless R > 0.
double fe(double throughput, double spoilage_rate);
// TC / P_market. Throws DomainError unless P_market > 0.
double fc(double total_cost, double p_market);

struct TtiWeights {
    double w_i = 0.6;
    double w_e = 0.3;
    double w_c = 0.1;
};

inline constexpr double kDefaultFeCap = 2.0;

// Raw quantities a report was computed from. The optional ones are known
// only when the report is built from raw inputs rather than from ICQ/FE/FC.
struct TtiInputs {
    std::optional<double> scq;
    std::optional<double> ccq;
    std::optional<double> throughput;     // AT, samples per minute
    std::optional<double> spoilage_rate;  // R, samples per minute
    std::optional<double> total_cost;     // TC, currency per sample
    std::optional<double> p_market;
    double fc_max = 0.3;
    double gamma = 0.5;
    double fe_cap = kDefaultFeCap;
};

struct TtiReport {
    double icq = 0.0;
    double fe_raw = 0.0;
    double fe_term = 0.0;
    double fc = 0.0;  // after clamping into [0, fc_max]
    double tti = 0.0;
    TtiWeights weights;
    TtiInputs inputs;
    std::vector<std::string> warnings;

    // w_I*icq + w_E*fe_term + w_C*(1 - fc/fc_max) from the stored fields.
    double recompute() const;
    // Re-derives icq, fe and fc from the raw inputs when all are present;
    // otherwise falls back to recompute().
    double recompute_from_inputs() const;
};

// fe_term = min(fe_raw, fe_cap) / fe_cap; fc outside [0, fc_max] is clamped
// and a warning recorded. Throws DomainError when the weights do not sum to 1
// (within 1e-9) or fe_cap <= 0.
TtiReport tti(double icq_value, double fe_raw, double fc_value, const Economics& econ, const TtiWeights& weights,
              double fe_cap = kDefaultFeCap);
TtiReport tti(double icq_value, double fe_raw, double fc_value, const RgidEntry& entry, const TtiWeights& weights,
              double fe_cap = kDefaultFeCap);
// Computes ICQ, FE and FC from raw inputs, then TTI.
TtiReport tti_from_inputs(const TtiInputs& inputs, const TtiWeights& weights);

nlohmann::json to_json(const TtiReport& report);
// Accepts either {icq, fe, fc, ...} or raw {scq, ccq, throughput, ...} keys; see docs/cli.md.
TtiReport tti_from_json(const nlohmann::json& doc);

// ---------------------------------------------------------------------------
// Sign constraints of the trade-off model, checked by finite differences.

struct SensitivityScenario {
    // FC as a function of the (ICQ, FE) operating point.
    std::function<double(double icq, double fe)> cost;
    double fc_max = 0.3;
    double gamma = 0.5;
    double budget = 0.0;  // grid points must satisfy icq + fe <= budget
    TtiWeights weights;
    double fe_cap = kDefaultFeCap;
};

// FC = c0 + c1*icq^2 + c2*fe^2 + c3*icq*fe on the budget icq + fe <= 3.2.
// The bilinear term models both objectives drawing on one budget.
SensitivityScenario budget_coupled_scenario();
// FC constant; every cost-sign assertion should fail on it.
SensitivityScenario constant_cost_scenario(double fc_value = 0.1);

struct SensitivityGrid {
    std::vector<double> icq;
    std::vector<double> fe;

    static SensitivityGrid uniform(double icq_lo, double icq_hi, double fe_lo, double fe_hi, std::size_t n);
    // 5x5 grid over icq in [0.6, 1.4], fe in [0.4, 1.6].
    static SensitivityGrid standard();
};

struct GridPoint {
    double icq = 0.0;
    double fe = 0.0;
    double value = 0.0;  // the offending difference quotient
};

struct SignCheck {
    std::string name;
    std::vector<GridPoint> violations;
    std::size_t points_checked = 0;

    bool passed() const { return violations.empty() && points_checked > 0; }
};

struct SignReport {
    SignCheck fc_over_icq;    // dFC/dICQ > 0
    SignCheck fc_over_fe;     // dFC/dFE > 0
    SignCheck tti_over_fc;    // dTTI/dFC <= 0
    SignCheck tti_mixed;      // d2TTI/dICQ dFE < 0

    bool all_passed() const;
};

// Central differences with the given step at every interior grid point.
// Throws DomainError when an axis has fewer than 3 points, step <= 0, or a
// grid point exceeds the scenario budget.
SignReport tti_sensitivity(const SensitivityScenario& scenario, const SensitivityGrid& grid, double step);

nlohmann::json to_json(const SignReport& report);

}  // namespace trialign
