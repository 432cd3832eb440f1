#include "trialign/feedback.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trialign/errors.hpp"

namespace trialign {

using nlohmann::json;

std::string_view to_string(Behavior b) {
    switch (b) {
        case Behavior::scan: return "scan";
        case Behavior::purchase: return "purchase";
        case Behavior::ret: return "return";
        case Behavior::review: return "review";
        case Behavior::repurchase: return "repurchase";
    }
    return "scan";
}

Behavior behavior_from_string(std::string_view text) {
    for (std::size_t i = 0; i < kBehaviorCount; ++i) {
        if (to_string(static_cast<Behavior>(i)) == text) return static_cast<Behavior>(i);
    }
    throw SchemaError("unknown behavior '" + std::string(text) + "'");
}

FeedbackEvent FeedbackEvent::of(Behavior b, std::string sample_ref, std::string grade) {
    FeedbackEvent e;
    e.behavior[static_cast<std::size_t>(b)] = 1;
    e.sample_ref = std::move(sample_ref);
    e.grade_given = std::move(grade);
    return e;
}

Behavior FeedbackEvent::kind() const {
    std::size_t ones = 0;
    std::size_t at = 0;
    for (std::size_t i = 0; i < kBehaviorCount; ++i) {
        if (behavior[i] == 1) {
            ++ones;
            at = i;
        } else if (behavior[i] != 0) {
            throw InvariantError("behavior vector entries must be 0 or 1");
        }
    }
    if (ones != 1) throw InvariantError("behavior vector must be one-hot");
    return static_cast<Behavior>(at);
}

void check_event(const FeedbackEvent& e) {
    (void)e.kind();
    if (e.rating && !(*e.rating >= 1.0 && *e.rating <= 5.0)) throw InvariantError("rating must lie in [1, 5]");
    if (!(e.implicit.view_seconds >= 0.0)) throw InvariantError("view_seconds must be nonnegative");
    if (e.implicit.repurchase_interval_days && !(*e.implicit.repurchase_interval_days >= 0.0)) {
        throw InvariantError("repurchase interval must be nonnegative");
    }
}

json to_json(const FeedbackEvent& e) {
    return json{{"u", e.behavior},
                {"rating", e.rating ? json(*e.rating) : json(nullptr)},
                {"view_seconds", e.implicit.view_seconds},
                {"repurchase_interval_days",
                 e.implicit.repurchase_interval_days ? json(*e.implicit.repurchase_interval_days) : json(nullptr)},
                {"sample_ref", e.sample_ref},
                {"grade_given", e.grade_given}};
}

FeedbackEvent event_from_json(const json& j) {
    if (!j.is_object()) throw SchemaError("feedback event: expected an object");
    FeedbackEvent e;
    try {
        if (j.contains("u")) {
            const auto u = j["u"].get<std::vector<int>>();
            if (u.size() != kBehaviorCount) throw InvariantError("behavior vector must have 5 entries");
            std::copy(u.begin(), u.end(), e.behavior.begin());
        } else if (j.contains("behavior")) {
            e.behavior[static_cast<std::size_t>(behavior_from_string(j["behavior"].get<std::string>()))] = 1;
        } else {
            throw SchemaError("feedback event: missing 'u' or 'behavior'");
        }
        if (j.contains("rating") && !j["rating"].is_null()) e.rating = j["rating"].get<double>();
        e.implicit.view_seconds = j.value("view_seconds", 0.0);
        if (j.contains("repurchase_interval_days") && !j["repurchase_interval_days"].is_null()) {
            e.implicit.repurchase_interval_days = j["repurchase_interval_days"].get<double>();
        }
        e.sample_ref = j.at("sample_ref").get<std::string>();
        e.grade_given = j.value("grade_given", std::string{});
    } catch (const json::exception& ex) {
        throw SchemaError(std::string("feedback event: ") + ex.what());
    }
    check_event(e);
    return e;
}

void FeedbackStore::record(FeedbackEvent event) {
    check_event(event);
    std::lock_guard lock(mu_);
    events_.push_back(std::move(event));
}

std::vector<FeedbackEvent> FeedbackStore::snapshot() const {
    std::lock_guard lock(mu_);
    return events_;
}

std::size_t FeedbackStore::size() const {
    std::lock_guard lock(mu_);
    return events_.size();
}

void record_feedback(FeedbackStore& store, FeedbackEvent event) { store.record(std::move(event)); }

namespace {

// Index of a grade within the cuts, or -1 for Reject.
long grade_position(const RgidEntry& entry, std::string_view grade) {
    if (grade == kReject) return -1;
    const auto& cuts = entry.thresholds.cuts;
    for (std::size_t i = 0; i < cuts.size(); ++i) {
        if (cuts[i].label == grade) return static_cast<long>(i);
    }
    throw NotFoundError("grade '" + std::string(grade) + "' is not defined for " + entry.lambda.str());
}

double band_midpoint(const RgidEntry& entry, long pos) {
    const auto& cuts = entry.thresholds.cuts;
    if (pos < 0) return cuts.empty() ? 0.0 : cuts.front().score / 2.0;
    const double lo = cuts[static_cast<std::size_t>(pos)].score;
    const double hi = static_cast<std::size_t>(pos + 1) < cuts.size() ? cuts[static_cast<std::size_t>(pos + 1)].score : 1.0;
    return (lo + hi) / 2.0;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void check_batch(const std::vector<double>& theta, const std::vector<TrainingExample>& batch) {
    if (batch.empty()) throw DomainError("feedback batch is empty");
    for (const auto& ex : batch) {
        if (ex.features.size() != theta.size()) throw DomainError("feature/theta dimension mismatch");
    }
}

}  // namespace

double grade_score(const RgidEntry& entry, std::string_view grade) {
    return band_midpoint(entry, grade_position(entry, grade));
}

double grade_score_below(const RgidEntry& entry, std::string_view grade) {
    const long pos = grade_position(entry, grade);
    return pos < 0 ? 0.0 : band_midpoint(entry, pos - 1);
}

double feedback_target(const FeedbackEvent& e, const RgidEntry& entry) {
    if (e.rating) return (*e.rating - 1.0) / 4.0;
    if (e.kind() == Behavior::ret) return grade_score_below(entry, e.grade_given);
    return grade_score(entry, e.grade_given);
}

double feedback_confidence(const FeedbackEvent& e) {
    static constexpr std::array<double, kBehaviorCount> base{0.2, 0.7, 1.0, 0.5, 1.0};
    const double c = base[static_cast<std::size_t>(e.kind())];
    return c * (0.5 + 0.5 * std::min(e.implicit.view_seconds / 30.0, 1.0));
}

std::vector<TrainingExample> build_batch(const std::vector<FeedbackEvent>& events,
                                         const std::map<std::string, std::vector<double>>& features,
                                         const RgidEntry& entry) {
    std::vector<TrainingExample> out;
    out.reserve(events.size());
    for (const auto& e : events) {
        const auto it = features.find(e.sample_ref);
        if (it == features.end()) throw JoinError("no feature vector for sample '" + e.sample_ref + "'");
        out.push_back(TrainingExample{it->second, feedback_target(e, entry), feedback_confidence(e)});
    }
    return out;
}

double loss(const std::vector<double>& theta, const std::vector<TrainingExample>& batch) {
    check_batch(theta, batch);
    double s = 0.0;
    for (const auto& ex : batch) {
        const double r = dot(theta, ex.features) - ex.target;
        s += ex.confidence * r * r;
    }
    return s / static_cast<double>(batch.size());
}

std::vector<double> gradient(const std::vector<double>& theta, const std::vector<TrainingExample>& batch) {
    check_batch(theta, batch);
    std::vector<double> g(theta.size(), 0.0);
    for (const auto& ex : batch) {
        const double r = dot(theta, ex.features) - ex.target;
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += 2.0 * ex.confidence * r * ex.features[k];
    }
    for (double& v : g) v /= static_cast<double>(batch.size());
    return g;
}

std::vector<double> project_to_simplex(const std::vector<double>& v) {
    if (v.empty()) return {};
    std::vector<double> u = v;
    std::sort(u.begin(), u.end(), std::greater<>());
    double running = 0.0;
    double lambda = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        running += u[j];
        const double candidate = (running - 1.0) / static_cast<double>(j + 1);
        if (u[j] - candidate > 0.0) lambda = candidate;
    }
    std::vector<double> out(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) out[k] = std::max(v[k] - lambda, 0.0);
    return out;
}

std::vector<double> raw_step(const std::vector<double>& theta, const std::vector<TrainingExample>& batch,
                             double eta_learn) {
    if (!(eta_learn > 0.0)) throw DomainError("learning rate must be positive");
    const auto g = gradient(theta, batch);
    std::vector<double> out(theta.size());
    for (std::size_t k = 0; k < theta.size(); ++k) out[k] = theta[k] - eta_learn * g[k];
    return out;
}

std::vector<double> update_step(const std::vector<double>& theta, const std::vector<TrainingExample>& batch,
                                double eta_learn) {
    return project_to_simplex(raw_step(theta, batch, eta_learn));
}

double safe_learning_rate(const std::vector<TrainingExample>& batch) {
    if (batch.empty()) throw DomainError("feedback batch is empty");
    double l = 0.0;
    for (const auto& ex : batch) l += ex.confidence * dot(ex.features, ex.features);
    l *= 2.0 / static_cast<double>(batch.size());
    return l > 0.0 ? 1.0 / l : 1.0;
}

// ---------------------------------------------------------------------------
// Triggers

namespace {

double rule_threshold(const RgidEntry& entry, std::string_view id) {
    if (const auto* r = entry.rule(id)) return r->threshold;
    for (const auto& r : *builtin_defaults().update_rules) {
        if (r.id == id) return r.threshold;
    }
    return 0.0;
}

double rule_step(const RgidEntry& entry, std::string_view id) {
    if (const auto* r = entry.rule(id)) return r->step;
    for (const auto& r : *builtin_defaults().update_rules) {
        if (r.id == id) return r.step;
    }
    return 0.0;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    if (x.size() < 2) return 0.0;
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 1e-300 || syy <= 1e-300) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

constexpr std::size_t kMinGradeSupport = 5;
constexpr double kMinReturnRate = 0.05;
constexpr double kReturnRateFloor = 0.01;
constexpr std::size_t kMinModelEvents = 10;

}  // namespace

std::vector<ParameterDelta> optimization_triggers(const std::vector<FeedbackEvent>& events,
                                                  const std::map<std::string, std::vector<double>>& features,
                                                  const RgidEntry& entry) {
    std::vector<ParameterDelta> out;
    if (events.empty()) return out;
    const auto batch = build_batch(events, features, entry);
    const std::size_t dims = entry.omega.size();

    // Dictionary level: a feature's share of positive correlation with
    // purchase outcomes exceeds its weight by the margin.
    {
        const std::string id = "dictionary.importance_underestimated";
        std::vector<double> label;
        std::vector<std::vector<double>> columns(dims);
        for (std::size_t i = 0; i < events.size(); ++i) {
            const Behavior b = events[i].kind();
            if (b != Behavior::purchase && b != Behavior::repurchase && b != Behavior::ret) continue;
            label.push_back(b == Behavior::ret ? 0.0 : 1.0);
            for (std::size_t k = 0; k < dims; ++k) columns[k].push_back(batch[i].features.at(k));
        }
        std::vector<double> corr(dims, 0.0);
        double positive = 0.0;
        for (std::size_t k = 0; k < dims; ++k) {
            corr[k] = std::max(pearson(columns[k], label), 0.0);
            positive += corr[k];
        }
        if (positive > 0.0) {
            const double margin = rule_threshold(entry, id);
            for (std::size_t k = 0; k < dims; ++k) {
                const double gap = corr[k] / positive - entry.omega[k];
                if (gap > margin) {
                    out.push_back(ParameterDelta{TriggerLevel::dictionary, "omega[" + std::to_string(k) + "]",
                                                 rule_step(entry, id), id, gap,
                                                 "importance of '" + entry.phi[k].id + "' underestimated"});
                }
            }
        }
    }

    // Model level: the current weights leave most of the target variance unexplained.
    if (events.size() >= kMinModelEvents) {
        const std::string id = "model.unexplained_variance";
        double mean_y = 0.0;
        for (const auto& ex : batch) mean_y += ex.target;
        mean_y /= static_cast<double>(batch.size());
        double var_y = 0.0, mse = 0.0;
        for (const auto& ex : batch) {
            var_y += (ex.target - mean_y) * (ex.target - mean_y);
            const double r = ex.target - dot(entry.omega, ex.features);
            mse += r * r;
        }
        var_y /= static_cast<double>(batch.size());
        mse /= static_cast<double>(batch.size());
        if (var_y > 1e-12) {
            const double ratio = mse / var_y;
            if (ratio > rule_threshold(entry, id)) {
                out.push_back(ParameterDelta{TriggerLevel::model, "model.extractors", 0.0, id, ratio,
                                             "residual variance suggests defect patterns the features miss"});
            }
        }
    }

    // Rule level: a grade is returned far more often than a grade below it.
    {
        const std::string id = "rule.return_rate_deviation";
        const auto& cuts = entry.thresholds.cuts;
        std::vector<std::size_t> kept(cuts.size(), 0), returned(cuts.size(), 0);
        for (const auto& e : events) {
            const Behavior b = e.kind();
            if (b != Behavior::purchase && b != Behavior::repurchase && b != Behavior::ret) continue;
            const long pos = grade_position(entry, e.grade_given);
            if (pos < 0) continue;
            (b == Behavior::ret ? returned : kept)[static_cast<std::size_t>(pos)]++;
        }
        std::vector<std::optional<double>> rate(cuts.size());
        for (std::size_t g = 0; g < cuts.size(); ++g) {
            const std::size_t n = kept[g] + returned[g];
            if (n >= kMinGradeSupport) rate[g] = static_cast<double>(returned[g]) / static_cast<double>(n);
        }
        const double ratio_threshold = rule_threshold(entry, id);
        for (std::size_t g = 1; g < cuts.size(); ++g) {
            if (!rate[g] || *rate[g] < kMinReturnRate) continue;
            double worst = 0.0;
            for (std::size_t lower = 0; lower < g; ++lower) {
                if (!rate[lower]) continue;
                worst = std::max(worst, *rate[g] / std::max(*rate[lower], kReturnRateFloor));
            }
            if (worst >= ratio_threshold) {
                out.push_back(ParameterDelta{TriggerLevel::rule,
                                             "thresholds.cuts[" + std::to_string(g) + "].score",
                                             rule_step(entry, id), id, worst,
                                             "grade '" + cuts[g].label + "' returned more often than lower grades"});
            }
        }
    }
    return out;
}

std::vector<ParameterDelta> optimization_triggers(const FeedbackStore& store,
                                                  const std::map<std::string, std::vector<double>>& features,
                                                  const RgidEntry& entry) {
    return optimization_triggers(store.snapshot(), features, entry);
}

}  // namespace trialign
