#pragma once

// Negative feedback loop: consumer feedback events become a
// confidence-weighted squared-error loss over the feature weights, which is
// minimized by projected gradient steps. Store statistics also raise
// dictionary-, model- and rule-level optimization triggers.

#include <array>
#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialign/features.hpp"
#include "trialign/rgid.hpp"

namespace trialign {

enum class Behavior : std::size_t { scan = 0, purchase = 1, ret = 2, review = 3, repurchase = 4 };
inline constexpr std::size_t kBehaviorCount = 5;

std::string_view to_string(Behavior b);
Behavior behavior_from_string(std::string_view text);

struct ImplicitMeasures {
    double view_seconds = 0.0;
    std::optional<double> repurchase_interval_days;
};

struct FeedbackEvent {
    std::array<int, kBehaviorCount> behavior{};  // one-hot
    std::optional<double> rating;                // explicit, in [1, 5]
    ImplicitMeasures implicit;
    std::string sample_ref;
    std::string grade_given;

    static FeedbackEvent of(Behavior b, std::string sample_ref, std::string grade);
    // Throws InvariantError unless behavior is one-hot.
    Behavior kind() const;
};

// Throws InvariantError on a non-one-hot behavior vector, a rating outside
// [1, 5] or negative implicit measures.
void check_event(const FeedbackEvent& event);

nlohmann::json to_json(const FeedbackEvent& event);
FeedbackEvent event_from_json(const nlohmann::json& doc);

// Append-only, safe for concurrent writers; readers take a snapshot.
class FeedbackStore {
public:
    void record(FeedbackEvent event);
    std::vector<FeedbackEvent> snapshot() const;
    std::size_t size() const;

private:
    mutable std::mutex mu_;
    std::vector<FeedbackEvent> events_;
};

// record_feedback(store, event): validates and appends.
void record_feedback(FeedbackStore& store, FeedbackEvent event);

// One row of the loss: normalized features, feedback-derived target, confidence.
struct TrainingExample {
    std::vector<double> features;
    double target = 0.0;
    double confidence = 1.0;
};

// Score attached to a grade label: the midpoint of the grade's band on the
// entry's cut scale. Reject maps to the midpoint below the lowest cut.
double grade_score(const RgidEntry& entry, std::string_view grade);
// Midpoint score of the band immediately below the given grade.
double grade_score_below(const RgidEntry& entry, std::string_view grade);

// Target: rating if present (affine [1,5] -> [0,1]); otherwise the given
// grade's score, one band lower for returns.
double feedback_target(const FeedbackEvent& event, const RgidEntry& entry);
// Confidence: base weight of the behavior scaled by viewing time,
// base * (0.5 + 0.5 * min(view_seconds / 30, 1)).
double feedback_confidence(const FeedbackEvent& event);

// Joins events with normalized feature vectors by sample id. Throws
// JoinError when an event's sample has no vector.
std::vector<TrainingExample> build_batch(const std::vector<FeedbackEvent>& events,
                                         const std::map<std::string, std::vector<double>>& features,
                                         const RgidEntry& entry);

// L = (1/|B|) sum c_i (theta . f_i - y_i)^2. Throws DomainError on an empty
// batch or mismatched dimensions.
double loss(const std::vector<double>& theta, const std::vector<TrainingExample>& batch);
// dL/dtheta = (2/|B|) sum c_i (theta . f_i - y_i) f_i.
std::vector<double> gradient(const std::vector<double>& theta, const std::vector<TrainingExample>& batch);

// Euclidean projection onto {x >= 0, sum x = 1}.
std::vector<double> project_to_simplex(const std::vector<double>& v);

// theta - eta * gradient, before projection.
std::vector<double> raw_step(const std::vector<double>& theta, const std::vector<TrainingExample>& batch,
                             double eta_learn);
// raw_step followed by simplex projection. Throws DomainError unless eta_learn > 0.
std::vector<double> update_step(const std::vector<double>& theta, const std::vector<TrainingExample>& batch,
                                double eta_learn);

// 1 / L where L = (2/|B|) sum c_i |f_i|^2 bounds the Hessian's largest
// eigenvalue; any eta_learn at or below this makes every projected step
// non-increasing in loss.
double safe_learning_rate(const std::vector<TrainingExample>& batch);

// Trigger statistics are read from the entry's update rules (by id), with
// the builtin defaults when a rule is absent:
//   dictionary.importance_underestimated  correlation share - omega > 0.2
//   model.unexplained_variance            residual MSE / target variance > 0.5
//   rule.return_rate_deviation            return rate ratio vs a lower grade >= 3
std::vector<ParameterDelta> optimization_triggers(const std::vector<FeedbackEvent>& events,
                                                  const std::map<std::string, std::vector<double>>& features,
                                                  const RgidEntry& entry);
std::vector<ParameterDelta> optimization_triggers(const FeedbackStore& store,
                                                  const std::map<std::string, std::vector<double>>& features,
                                                  const RgidEntry& entry);

}  // namespace trialign
