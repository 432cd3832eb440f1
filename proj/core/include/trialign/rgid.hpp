#pragma once

// Regional graded indicator dictionary: the per-variety parameter tuple that
// drives grading, trust scoring, data decay and economics, plus the three-level
// repository (base -> category -> variety) it is resolved from.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialign/types.hpp"

namespace trialign {

inline constexpr std::string_view kReject = "Reject";

enum class Plane { general, top, side, bottom };

// How a raw feature value maps onto the [0, 1] quality scale.
enum class Scoring {
    ascending,   // larger is better
    descending,  // smaller is better (defect areas)
    peaked,      // best at `target`, falling off linearly towards either bound
};

std::string_view to_string(Plane plane);
Plane plane_from_string(std::string_view text);
std::string_view to_string(Scoring scoring);
Scoring scoring_from_string(std::string_view text);

struct FeatureSpec {
    std::string id;
    Plane plane = Plane::general;
    // Sample attribute (general plane) or observation key (other planes)
    // read by the synthetic extractor.
    std::string source;
    double f_min = 0.0;
    double f_max = 1.0;
    std::string unit;
    bool screening = false;
    Scoring scoring = Scoring::ascending;
    double target = 0.0;

    // Min-max scales a value in feature units onto [0, 1] (clamped), then
    // applies the scoring direction.
    double normalize(double value) const;

    friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

struct GradeCut {
    double score = 0.0;
    std::string label;

    friend bool operator==(const GradeCut&, const GradeCut&) = default;
};

// Cuts are stored in increasing score order; a score maps to the label of the
// highest cut it reaches (cuts are inclusive upward). Scores below the lowest
// cut map to Reject.
struct GradeThresholds {
    std::vector<GradeCut> cuts;
    double tau_final = 0.0;

    std::string grade_for(double score) const;
    bool accepts(double score) const { return score >= tau_final; }
    // Grade of a fully evaluated sample: Reject unless accepted.
    std::string decide(double score) const;
    bool has_label(std::string_view label) const;

    friend bool operator==(const GradeThresholds&, const GradeThresholds&) = default;
};

enum class TriggerLevel { dictionary, model, rule };

std::string_view to_string(TriggerLevel level);
TriggerLevel trigger_level_from_string(std::string_view text);

// One entry of the update-rule set: which feedback statistic fires a
// trigger, at what threshold, and how large a correction it proposes.
struct UpdateRule {
    std::string id;
    TriggerLevel level = TriggerLevel::dictionary;
    double threshold = 0.0;
    double step = 0.0;

    friend bool operator==(const UpdateRule&, const UpdateRule&) = default;
};

struct Economics {
    double fc_max = 0.3;     // max acceptable cost share, (0, 1]
    double p_market = 1.0;   // currency per sample
    double eta_cost = 0.0;   // currency per sample, scales the expiry cost delta
    double gamma = 0.5;      // excess-supply gain capping ICQ at 1 + gamma

    friend bool operator==(const Economics&, const Economics&) = default;
};

struct Decay {
    Duration ttl = hours(72);
    double spoilage_rate = 100.0;  // samples per minute

    friend bool operator==(const Decay&, const Decay&) = default;
};

struct TrustParams {
    std::map<std::string, double> layer_weights;  // s_i per pyramid layer
    std::map<std::string, double> importance;     // t_e per trust factor

    friend bool operator==(const TrustParams&, const TrustParams&) = default;
};

struct RgidEntry {
    VarietyId lambda;
    std::string category;
    std::vector<FeatureSpec> phi;
    std::vector<double> omega;
    GradeThresholds thresholds;
    std::vector<UpdateRule> update_rules;
    Economics econ;
    Decay decay;
    TrustParams trust;

    std::optional<std::size_t> feature_index(std::string_view id) const;
    const UpdateRule* rule(std::string_view id) const;

    friend bool operator==(const RgidEntry&, const RgidEntry&) = default;
};

struct Finding {
    std::string path;
    std::string message;

    friend bool operator==(const Finding&, const Finding&) = default;
};
using ValidationReport = std::vector<Finding>;

ValidationReport validate_entry(const RgidEntry& entry);

// A partial entry. Every layer of the repository is an overlay; resolving a
// variety merges base, category and variety overlays field by field with the
// most specific layer winning. Maps merge key by key.
struct EntryOverlay {
    std::optional<std::vector<FeatureSpec>> phi;
    std::optional<std::vector<double>> omega;
    std::optional<std::vector<GradeCut>> cuts;
    std::optional<double> tau_final;
    std::optional<std::vector<UpdateRule>> update_rules;
    std::optional<double> fc_max;
    std::optional<double> p_market;
    std::optional<double> eta_cost;
    std::optional<double> gamma;
    std::optional<Duration> ttl;
    std::optional<double> spoilage_rate;
    std::map<std::string, double> layer_weights;
    std::map<std::string, double> importance;

    friend bool operator==(const EntryOverlay&, const EntryOverlay&) = default;
};

EntryOverlay merge(const EntryOverlay& lower, const EntryOverlay& upper);

// Overlay holding the built-in fallbacks (gamma, ttl, spoilage rate, fc_max)
// that sit underneath every document's base layer.
const EntryOverlay& builtin_defaults();

// Turns a fully merged overlay into an entry. Omega is normalized to sum 1.
// Throws SchemaError naming the first missing field, InvariantError when the
// result fails validate_entry.
RgidEntry finalize(const VarietyId& lambda, const std::string& category,
                   const EntryOverlay& merged);

class Repository {
public:
    struct VarietyRecord {
        std::string category;
        EntryOverlay overlay;

        friend bool operator==(const VarietyRecord&, const VarietyRecord&) = default;
    };

    Repository() = default;
    // Resolves and validates every variety.
    Repository(EntryOverlay base, std::map<std::string, EntryOverlay> categories,
               std::map<VarietyId, VarietyRecord> varieties);

    const EntryOverlay& base() const { return base_; }
    const std::map<std::string, EntryOverlay>& categories() const { return categories_; }
    const std::map<VarietyId, VarietyRecord>& varieties() const { return varieties_; }

    // Throws NotFoundError for an unknown identifier.
    const RgidEntry& lookup(const VarietyId& lambda) const;
    bool contains(const VarietyId& lambda) const { return resolved_.contains(lambda); }
    std::vector<VarietyId> ids() const;

    friend bool operator==(const Repository& a, const Repository& b) {
        return a.base_ == b.base_ && a.categories_ == b.categories_ &&
               a.varieties_ == b.varieties_;
    }

private:
    EntryOverlay base_;
    std::map<std::string, EntryOverlay> categories_;
    std::map<VarietyId, VarietyRecord> varieties_;
    std::map<VarietyId, RgidEntry> resolved_;
};

// Dictionary documents are JSON; the schema lives in docs/dictionary-schema.md.
Repository load_dictionary(std::string_view document);
Repository load_dictionary_file(const std::filesystem::path& path);
// Canonical form: sorted keys, two-space indent, trailing newline.
std::string serialize_dictionary(const Repository& repo);

nlohmann::json to_json(const RgidEntry& entry);
RgidEntry entry_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const EntryOverlay& overlay);
EntryOverlay overlay_from_json(const nlohmann::json& doc, const std::string& where);

// A proposed parameter change. Targets:
//   omega[i]                    dictionary level, additive
//   thresholds.cuts[i].score    rule level, additive
//   thresholds.tau_final        rule level, additive
//   model.<anything>            model level, a note; applying it is a no-op
struct ParameterDelta {
    TriggerLevel level = TriggerLevel::dictionary;
    std::string target;
    double delta = 0.0;
    std::string justification;  // id of the trigger that fired
    double statistic = 0.0;     // value of the statistic that fired it
    std::string note;

    friend bool operator==(const ParameterDelta&, const ParameterDelta&) = default;
};

nlohmann::json to_json(const ParameterDelta& delta);
ParameterDelta delta_from_json(const nlohmann::json& doc);

// Applies the deltas in order, then renormalizes omega. The input is not
// modified. Throws InvariantError if the result would break an invariant or
// a delta's level does not match its target.
RgidEntry apply_update(const RgidEntry& entry, std::span<const ParameterDelta> deltas);
RgidEntry apply_update(const RgidEntry& entry, const ParameterDelta& delta);

// Number of scalar parameters an entry carries, and how many differ between
// two entries of the same shape.
std::size_t scalar_parameter_count(const RgidEntry& entry);
std::size_t changed_parameter_count(const RgidEntry& before, const RgidEntry& after);

}  // namespace trialign
