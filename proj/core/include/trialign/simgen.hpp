#pragma once

// Seeded synthetic produce per variety and a virtual-time simulator that
// pushes it through capture, the lifecycle buffer and the grading cascade.
//
// Random streams: every attribute draws from its own mt19937_64 seeded with
// splitmix64(seed ^ fnv1a64(attribute name)), and the distributions come
// from Boost.Random, whose algorithms are fixed across platforms. Adding an
// attribute leaves the existing streams untouched.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialign/cascade.hpp"
#include "trialign/features.hpp"
#include "trialign/metrics.hpp"
#include "trialign/rgid.hpp"

namespace trialign {

struct TruncatedNormal {
    double mean = 0.0;
    double sd = 1.0;
    double min = 0.0;
    double max = 1.0;
};

// 0 with probability p_zero, otherwise exponential with the given mean.
struct ZeroInflatedExponential {
    double p_zero = 0.5;
    double mean = 1.0;
};

// 1 with probability p_one, otherwise Beta(alpha, beta).
struct BetaDist {
    double alpha = 1.0;
    double beta = 1.0;
    double p_one = 0.0;
};

struct VarietyProfile {
    VarietyId lambda;
    std::string standard;  // rule grader providing ground truth
    TruncatedNormal weight;
    TruncatedNormal diameter;
    ZeroInflatedExponential scar_area;
    BetaDist stem_integrity;
    BetaDist color_uniformity;
    BetaDist firmness;
};

// Throws ConfigError naming the first bad parameter.
void check_profile(const VarietyProfile& profile);

// Artifact defaults for the three shipped varieties; chosen so every rule
// grade, Reject included, has support. Not measured data.
const std::vector<VarietyProfile>& default_profiles();
// Throws NotFoundError.
const VarietyProfile& default_profile(const VarietyId& lambda);

nlohmann::json to_json(const VarietyProfile& profile);
VarietyProfile profile_from_json(const nlohmann::json& doc);

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text);
std::uint64_t stream_seed(std::uint64_t seed, std::string_view attribute);

struct LabeledSample {
    FruitSample sample;
    std::string label;  // rule grade
};

// Samples "<variety>-000000", ... collected at the epoch, with default plane
// observations attached. Throws ConfigError for n == 0 or a bad profile.
std::vector<LabeledSample> generate_samples(const VarietyProfile& profile, std::size_t n, std::uint64_t seed);

struct ClockConfig {
    Timestamp start{};
    Duration arrival_interval{100};  // between captures
    Duration base_latency{20};       // per sample, before any layer
    Duration layer_duration{40};     // per evaluated layer
    std::size_t buffer_capacity = 256;
    std::size_t drain_batch = 16;
};

struct CostConfig {
    double base_cost = 0.02;       // currency per sample
    double per_layer_cost = 0.005; // currency per evaluated layer
};

struct FactorRef {
    std::string factor;
    std::string layer;
};

struct SimulationConfig {
    VarietyProfile profile;
    std::size_t n = 1000;
    std::uint64_t seed = 1;
    ClockConfig clock;
    CostConfig cost;
    std::optional<CascadeConfig> cascade;  // sound default when absent
    bool early_exit = true;
    std::vector<FactorRef> need;
    std::vector<FactorRef> provided;
    TtiWeights weights;
    double fe_cap = kDefaultFeCap;
    std::string extractor = "synthetic";
};

struct TraceRow {
    std::string sample_id;
    std::string rule_grade;
    std::string grade;  // "Expired" when purged before grading
    std::string exit_stage;
    std::size_t layers_evaluated = 0;
    double score = 0.0;
    std::int64_t t_done_ms = 0;
};

struct SimulationReport {
    VarietyId lambda;
    std::uint64_t seed = 0;
    std::size_t n_samples = 0;
    bool early_exit = true;
    std::map<std::string, std::size_t> histogram;  // totals n_samples; purged under "Expired"
    std::size_t graded = 0;
    std::size_t layer_count = 0;
    double mean_layers_evaluated = 0.0;
    std::map<std::string, std::size_t> exits;      // by exit stage
    std::size_t oracle_mismatches = 0;             // accept/reject vs full evaluation
    std::size_t grade_mismatches = 0;
    double rule_accuracy = 0.0;                    // cascade grade vs rule grade
    std::int64_t elapsed_ms = 0;
    double throughput = 0.0;                       // AT, graded per virtual minute
    std::size_t backpressure_events = 0;
    std::size_t purged = 0;
    double fraction_invalid = 0.0;
    double delta_c = 0.0;
    double mean_total_cost = 0.0;                  // TC
    TtiReport tti;
    std::vector<TraceRow> traces;                  // not part of the JSON report
};

inline constexpr std::string_view kExpired = "Expired";

// Single-threaded discrete-event run over virtual time: a producer captures
// one sample per arrival interval into the bounded buffer (holding on
// backpressure), a consumer drains batches and grades them, charging
// base_latency + layer_duration * layers per sample. Throws NotFoundError
// when the repository lacks the profile's variety, ConfigError for a bad
// clock, cost or cascade configuration.
SimulationReport run_pipeline(const Repository& repo, const SimulationConfig& config);

nlohmann::json to_json(const SimulationReport& report);
// One line per sample with a header row.
void write_trace_csv(std::ostream& out, const SimulationReport& report);

struct Scenario {
    Repository repo;
    SimulationConfig config;
};

// Scenario documents name a dictionary file (relative paths resolve against
// base_dir), the variety, and optional profile, clock, cost, cascade, trust
// and tti sections; see docs/cli.md.
Scenario scenario_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
Scenario load_scenario(const std::filesystem::path& path);

}  // namespace trialign
