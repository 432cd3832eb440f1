#pragma once

// Cascaded grading: a high-speed screening stage over the features flagged
// `screening`, then layer-by-layer accumulation of weighted feature
// contributions with early Accept/Reject exits, falling through to the
// full-depth decision when no exit fires.
//
// Soundness: with every feature normalized to [0, 1], the contribution still
// missing after layer l is at most M_l = sum of omega over later layers. A
// reject threshold at or below tau_final - M_l therefore never rejects a
// sample the full evaluation would accept, and an accept threshold at or
// above tau_final never accepts one it would reject. The screening stage has
// analogous bounds over the screening weight mass m_s:
//   m_s * tau_low + (1 - m_s) <= tau_final   and   m_s * tau_high >= tau_final.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialign/features.hpp"
#include "trialign/rgid.hpp"

namespace trialign {

enum class Verdict { accept, reject, pending };
enum class ExitStage { screening, early, full };

std::string_view to_string(Verdict v);
std::string_view to_string(ExitStage s);

struct CascadeConfig {
    std::vector<std::size_t> layer_order;  // feature indices, screening features first
    double tau_low = 0.0;
    double tau_high = 1.0;
    double tau_accept = 1.0;
    std::vector<double> tau_reject;  // one per layer

    // Builds a config that passes check_threshold_soundness. Screening
    // features come first in feature order, then the rest by decreasing
    // weight (ties in feature order). tau_accept
    // defaults to the higher of tau_final and the top grade cut, so an early
    // accept also fixes the grade; the screening accept bound follows the
    // same threshold. Reject thresholds sit `slack` below their
    // bound to absorb floating-point rounding.
    static CascadeConfig sound(const RgidEntry& entry, std::optional<double> tau_accept = std::nullopt,
                               double slack = 1e-9);
};

nlohmann::json to_json(const CascadeConfig& config);
CascadeConfig cascade_config_from_json(const nlohmann::json& doc, const RgidEntry& entry);

// Screening weight mass m_s (sum of omega over screening features).
double screening_mass(const RgidEntry& entry);
// tau_final - M_l for each layer of the given order.
std::vector<double> max_sound_reject(const RgidEntry& entry, const std::vector<std::size_t>& layer_order);

// Structural problems (not a permutation, wrong threshold count, screening
// features not first, tau_low >= tau_high, values outside [0, 1]) and
// soundness violations, one finding each. Empty means early exits agree with
// full evaluation on every accept/reject outcome.
ValidationReport check_threshold_soundness(const RgidEntry& entry, const CascadeConfig& config);

struct ScreenResult {
    Verdict verdict = Verdict::pending;  // pending = Continue
    double score = 0.0;                  // S_early, renormalized by screening mass
    double mass = 0.0;
    std::vector<double> normalized;      // screening feature values, layer order
};

// Reject iff S_early < tau_low, Accept iff S_early > tau_high, Continue
// otherwise. With no screening features the result is always Continue.
ScreenResult screen(const FruitSample& sample, const RgidEntry& entry, const CascadeConfig& config,
                    const Extractor& extractor);

struct DecisionTrace {
    std::string sample_id;
    VarietyId lambda;
    std::optional<double> screening_score;
    std::vector<std::size_t> layers;     // feature index per evaluated layer
    std::vector<double> contributions;   // omega_k * f_k
    std::vector<double> cumulative;
    ExitStage exit_stage = ExitStage::full;
    std::size_t exit_layer = 0;          // 1-based; 0 for screening exits
    Verdict verdict = Verdict::pending;
    std::string grade;                   // "Reject" for rejects
    std::optional<double> composite;     // set when every layer was evaluated
    std::size_t layers_evaluated = 0;
    bool waived = false;

    // Cumulative score at exit, or the composite for full-depth decisions.
    double final_score() const;
};

nlohmann::json to_json(const DecisionTrace& trace);
DecisionTrace trace_from_json(const nlohmann::json& doc);

struct FullDecision {
    FeatureVector features;
    double composite = 0.0;
    Verdict verdict = Verdict::reject;
    std::string grade;
};

// Evaluates every feature; composite = dot(omega, normalized values).
FullDecision full_decide(const FruitSample& sample, const RgidEntry& entry, const Extractor& extractor);

// Throws ConfigError when the config is structurally broken, or unsound and
// not waived. A waived unsound run is flagged in the trace.
DecisionTrace cascade_decide(const FruitSample& sample, const RgidEntry& entry, const CascadeConfig& config,
                             const Extractor& extractor, bool waive_soundness = false);

}  // namespace trialign
