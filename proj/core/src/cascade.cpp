#include "trialign/cascade.hpp"

#include <algorithm>
#include <cmath>

#include "trialign/errors.hpp"

namespace trialign {

using nlohmann::json;

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::accept: return "accept";
        case Verdict::reject: return "reject";
        case Verdict::pending: return "continue";
    }
    return "continue";
}

std::string_view to_string(ExitStage s) {
    switch (s) {
        case ExitStage::screening: return "screening";
        case ExitStage::early: return "early";
        case ExitStage::full: return "full";
    }
    return "full";
}

namespace {

Verdict verdict_from_string(std::string_view text) {
    if (text == "accept") return Verdict::accept;
    if (text == "reject") return Verdict::reject;
    if (text == "continue") return Verdict::pending;
    throw SchemaError("unknown verdict '" + std::string(text) + "'");
}

ExitStage exit_stage_from_string(std::string_view text) {
    if (text == "screening") return ExitStage::screening;
    if (text == "early") return ExitStage::early;
    if (text == "full") return ExitStage::full;
    throw SchemaError("unknown exit stage '" + std::string(text) + "'");
}

std::size_t screening_count(const RgidEntry& entry) {
    return static_cast<std::size_t>(
        std::count_if(entry.phi.begin(), entry.phi.end(), [](const FeatureSpec& f) { return f.screening; }));
}

ValidationReport structural_findings(const RgidEntry& entry, const CascadeConfig& c) {
    ValidationReport out;
    const std::size_t n = entry.phi.size();
    std::vector<bool> seen(n, false);
    bool permutation = c.layer_order.size() == n;
    for (std::size_t k : c.layer_order) {
        if (k >= n || seen[k]) {
            permutation = false;
            break;
        }
        seen[k] = true;
    }
    if (!permutation) {
        out.push_back({"layer_order", "layer order must be a permutation of the feature indices"});
    } else {
        const std::size_t ns = screening_count(entry);
        for (std::size_t l = 0; l < n; ++l) {
            if (entry.phi[c.layer_order[l]].screening != (l < ns)) {
                out.push_back({"layer_order", "screening features must come first"});
                break;
            }
        }
    }
    if (c.tau_reject.size() != n) {
        out.push_back({"tau_reject", "need one reject threshold per layer"});
    }
    for (std::size_t l = 0; l < c.tau_reject.size(); ++l) {
        if (!std::isfinite(c.tau_reject[l])) {
            out.push_back({"tau_reject[" + std::to_string(l) + "]", "threshold must be finite"});
        }
    }
    auto unit = [&](double v, const char* path) {
        if (!(v >= 0.0 && v <= 1.0)) out.push_back({path, "threshold must lie in [0, 1]"});
    };
    unit(c.tau_low, "tau_low");
    unit(c.tau_high, "tau_high");
    unit(c.tau_accept, "tau_accept");
    if (!(c.tau_low < c.tau_high)) out.push_back({"tau_low", "tau_low must be below tau_high"});
    return out;
}

// Hand-entered decimal thresholds (0.2 against a bound computed as 0.7 - 0.5)
// differ from their bound by a few ulps; allow that much.
constexpr double kSoundnessTolerance = 1e-12;

ValidationReport soundness_findings(const RgidEntry& entry, const CascadeConfig& c) {
    ValidationReport out;
    const double tau = entry.thresholds.tau_final;
    if (c.tau_accept < tau - kSoundnessTolerance) out.push_back({"tau_accept", "tau_accept is below tau_final"});

    const auto bound = max_sound_reject(entry, c.layer_order);
    for (std::size_t l = 0; l < bound.size() && l < c.tau_reject.size(); ++l) {
        if (c.tau_reject[l] > bound[l] + kSoundnessTolerance) {
            out.push_back({"tau_reject[" + std::to_string(l) + "]",
                           "layer " + std::to_string(l + 1) + " reject threshold exceeds tau_final - M_l"});
        }
    }

    const double ms = screening_mass(entry);
    if (ms > 0.0) {
        // A branch that can never fire (tau_low <= 0 or tau_high >= 1) is sound.
        if (c.tau_low > 0.0 && ms * c.tau_low + (1.0 - ms) > tau + kSoundnessTolerance) {
            out.push_back({"tau_low", "screening reject could drop a sample full evaluation accepts"});
        }
        if (c.tau_high < 1.0 && ms * c.tau_high < tau - kSoundnessTolerance) {
            out.push_back({"tau_high", "screening accept could pass a sample full evaluation rejects"});
        }
    }
    return out;
}

std::string join(const ValidationReport& r) {
    std::string s;
    for (const auto& f : r) {
        if (!s.empty()) s += "; ";
        s += f.path + ": " + f.message;
    }
    return s;
}

}  // namespace

double screening_mass(const RgidEntry& entry) {
    double m = 0.0;
    for (std::size_t k = 0; k < entry.phi.size() && k < entry.omega.size(); ++k) {
        if (entry.phi[k].screening) m += entry.omega[k];
    }
    return m;
}

std::vector<double> max_sound_reject(const RgidEntry& entry, const std::vector<std::size_t>& layer_order) {
    const std::size_t n = layer_order.size();
    std::vector<double> out(n, 0.0);
    // M_l accumulated from the back so each bound sums the same suffix.
    double remaining = 0.0;
    for (std::size_t l = n; l-- > 0;) {
        out[l] = entry.thresholds.tau_final - remaining;
        remaining += entry.omega.at(layer_order[l]);
    }
    return out;
}

CascadeConfig CascadeConfig::sound(const RgidEntry& entry, std::optional<double> tau_accept, double slack) {
    CascadeConfig c;
    for (std::size_t k = 0; k < entry.phi.size(); ++k) {
        if (entry.phi[k].screening) c.layer_order.push_back(k);
    }
    const std::size_t first_rest = c.layer_order.size();
    for (std::size_t k = 0; k < entry.phi.size(); ++k) {
        if (!entry.phi[k].screening) c.layer_order.push_back(k);
    }
    // Heaviest first, so the remaining mass M_l shrinks as fast as possible.
    std::stable_sort(c.layer_order.begin() + static_cast<std::ptrdiff_t>(first_rest), c.layer_order.end(),
                     [&](std::size_t a, std::size_t b) { return entry.omega[a] > entry.omega[b]; });

    const double tau = entry.thresholds.tau_final;
    const double top = entry.thresholds.cuts.empty() ? tau : entry.thresholds.cuts.back().score;
    c.tau_accept = tau_accept.value_or(std::max(tau, top));

    c.tau_reject = max_sound_reject(entry, c.layer_order);
    for (double& t : c.tau_reject) t -= slack;

    const double ms = screening_mass(entry);
    if (ms > 0.0) {
        c.tau_low = std::clamp((tau - (1.0 - ms)) / ms - slack, 0.0, 1.0);
        c.tau_high = std::clamp(c.tau_accept / ms + slack, 0.0, 1.0);
        if (!(c.tau_low < c.tau_high)) {
            c.tau_low = 0.0;
            c.tau_high = 1.0;
        }
    } else {
        c.tau_low = 0.0;
        c.tau_high = 1.0;
    }
    return c;
}

json to_json(const CascadeConfig& c) {
    return json{{"layer_order", c.layer_order},
                {"tau_low", c.tau_low},
                {"tau_high", c.tau_high},
                {"tau_accept", c.tau_accept},
                {"tau_reject", c.tau_reject}};
}

CascadeConfig cascade_config_from_json(const json& doc, const RgidEntry& entry) {
    if (doc.is_null()) return CascadeConfig::sound(entry);
    if (!doc.is_object()) throw SchemaError("cascade: expected an object");
    const std::string mode = doc.value("mode", std::string("sound"));
    if (mode == "sound") {
        std::optional<double> accept;
        if (doc.contains("tau_accept")) accept = doc["tau_accept"].get<double>();
        return CascadeConfig::sound(entry, accept, doc.value("slack", 1e-9));
    }
    if (mode != "explicit") throw SchemaError("cascade.mode: expected 'sound' or 'explicit'");

    CascadeConfig c;
    try {
        for (const char* key : {"layer_order", "tau_low", "tau_high", "tau_accept", "tau_reject"}) {
            if (!doc.contains(key)) throw SchemaError(std::string("cascade: missing required field '") + key + "'");
        }
        for (const auto& v : doc["layer_order"]) {
            if (v.is_string()) {
                const auto k = entry.feature_index(v.get<std::string>());
                if (!k) throw SchemaError("cascade.layer_order: unknown feature '" + v.get<std::string>() + "'");
                c.layer_order.push_back(*k);
            } else {
                c.layer_order.push_back(v.get<std::size_t>());
            }
        }
        c.tau_low = doc["tau_low"].get<double>();
        c.tau_high = doc["tau_high"].get<double>();
        c.tau_accept = doc["tau_accept"].get<double>();
        c.tau_reject = doc["tau_reject"].get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("cascade: ") + e.what());
    }
    return c;
}

ValidationReport check_threshold_soundness(const RgidEntry& entry, const CascadeConfig& config) {
    ValidationReport out = structural_findings(entry, config);
    if (out.empty()) {
        auto s = soundness_findings(entry, config);
        out.insert(out.end(), s.begin(), s.end());
    }
    return out;
}

ScreenResult screen(const FruitSample& sample, const RgidEntry& entry, const CascadeConfig& config,
                    const Extractor& extractor) {
    ScreenResult r;
    double weighted = 0.0;
    for (std::size_t k : config.layer_order) {
        const auto& spec = entry.phi.at(k);
        if (!spec.screening) continue;
        const double f = spec.normalize(extractor.extract(sample, spec));
        r.normalized.push_back(f);
        weighted += entry.omega.at(k) * f;
        r.mass += entry.omega.at(k);
    }
    if (!(r.mass > 0.0)) return r;
    r.score = weighted / r.mass;
    if (r.score < config.tau_low) {
        r.verdict = Verdict::reject;
    } else if (r.score > config.tau_high) {
        r.verdict = Verdict::accept;
    }
    return r;
}

double DecisionTrace::final_score() const {
    if (composite) return *composite;
    return cumulative.empty() ? 0.0 : cumulative.back();
}

json to_json(const DecisionTrace& t) {
    return json{{"sample_id", t.sample_id},
                {"origin", t.lambda.origin},
                {"variety", t.lambda.variety},
                {"screening_score", t.screening_score ? json(*t.screening_score) : json(nullptr)},
                {"layers", t.layers},
                {"contributions", t.contributions},
                {"cumulative", t.cumulative},
                {"exit_stage", to_string(t.exit_stage)},
                {"exit_layer", t.exit_layer},
                {"verdict", to_string(t.verdict)},
                {"grade", t.grade},
                {"composite", t.composite ? json(*t.composite) : json(nullptr)},
                {"layers_evaluated", t.layers_evaluated},
                {"waived", t.waived}};
}

DecisionTrace trace_from_json(const json& j) {
    if (!j.is_object()) throw SchemaError("trace: expected an object");
    try {
        DecisionTrace t;
        t.sample_id = j.at("sample_id").get<std::string>();
        t.lambda = VarietyId{j.at("origin").get<std::string>(), j.at("variety").get<std::string>()};
        if (j.contains("screening_score") && !j["screening_score"].is_null()) {
            t.screening_score = j["screening_score"].get<double>();
        }
        t.layers = j.at("layers").get<std::vector<std::size_t>>();
        t.contributions = j.at("contributions").get<std::vector<double>>();
        t.cumulative = j.at("cumulative").get<std::vector<double>>();
        t.exit_stage = exit_stage_from_string(j.at("exit_stage").get<std::string>());
        t.exit_layer = j.at("exit_layer").get<std::size_t>();
        t.verdict = verdict_from_string(j.at("verdict").get<std::string>());
        t.grade = j.at("grade").get<std::string>();
        if (j.contains("composite") && !j["composite"].is_null()) t.composite = j["composite"].get<double>();
        t.layers_evaluated = j.at("layers_evaluated").get<std::size_t>();
        t.waived = j.value("waived", false);
        return t;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("trace: ") + e.what());
    }
}

FullDecision full_decide(const FruitSample& sample, const RgidEntry& entry, const Extractor& extractor) {
    FullDecision d;
    d.features = extract_features(sample, entry, extractor);
    d.composite = composite_score(d.features, entry);
    d.verdict = entry.thresholds.accepts(d.composite) ? Verdict::accept : Verdict::reject;
    d.grade = entry.thresholds.decide(d.composite);
    return d;
}

DecisionTrace cascade_decide(const FruitSample& sample, const RgidEntry& entry, const CascadeConfig& config,
                             const Extractor& extractor, bool waive_soundness) {
    if (auto s = structural_findings(entry, config); !s.empty()) {
        throw ConfigError("cascade config: " + join(s));
    }
    DecisionTrace t;
    t.sample_id = sample.id;
    t.lambda = sample.lambda;
    if (auto s = soundness_findings(entry, config); !s.empty()) {
        if (!waive_soundness) throw ConfigError("cascade config is unsound: " + join(s));
        t.waived = true;
    }

    const auto& th = entry.thresholds;
    const std::size_t n = config.layer_order.size();
    std::vector<double> norm(n, 0.0);  // feature order
    double cum = 0.0;

    auto evaluate_layer = [&](std::size_t l, double f) {
        const std::size_t k = config.layer_order[l];
        norm[k] = f;
        const double c = entry.omega[k] * f;
        cum += c;
        t.layers.push_back(k);
        t.contributions.push_back(c);
        t.cumulative.push_back(cum);
        t.layers_evaluated = t.layers.size();
    };
    auto accept_with_lower_bound = [&](double lower) {
        t.verdict = Verdict::accept;
        t.grade = th.grade_for(std::max(lower, th.tau_final));
    };

    const auto scr = screen(sample, entry, config, extractor);
    for (std::size_t l = 0; l < scr.normalized.size(); ++l) evaluate_layer(l, scr.normalized[l]);
    if (scr.mass > 0.0) {
        t.screening_score = scr.score;
        if (scr.verdict != Verdict::pending) {
            t.exit_stage = ExitStage::screening;
            t.exit_layer = 0;
            if (scr.verdict == Verdict::accept) {
                accept_with_lower_bound(cum);
            } else {
                t.verdict = Verdict::reject;
                t.grade = std::string(kReject);
            }
            return t;
        }
    }

    for (std::size_t l = 0; l < n; ++l) {
        if (l >= t.layers.size()) {
            const auto& spec = entry.phi[config.layer_order[l]];
            evaluate_layer(l, spec.normalize(extractor.extract(sample, spec)));
        }
        if (l + 1 == n) break;  // the last layer is the full evaluation
        const double c = t.cumulative[l];
        if (c >= config.tau_accept) {
            t.exit_stage = ExitStage::early;
            t.exit_layer = l + 1;
            accept_with_lower_bound(c);
            return t;
        }
        if (c <= config.tau_reject[l]) {
            t.exit_stage = ExitStage::early;
            t.exit_layer = l + 1;
            t.verdict = Verdict::reject;
            t.grade = std::string(kReject);
            return t;
        }
    }

    t.exit_stage = ExitStage::full;
    t.exit_layer = n;
    t.composite = composite_score(norm, entry.omega);
    t.verdict = th.accepts(*t.composite) ? Verdict::accept : Verdict::reject;
    t.grade = th.decide(*t.composite);
    return t;
}

}  // namespace trialign
