#include "trialign/rgid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "trialign/errors.hpp"

namespace trialign {

using nlohmann::json;

VarietyId parse_variety_id(const std::string& text) {
    const auto slash = text.find('/');
    if (slash == std::string::npos || slash == 0 || slash + 1 >= text.size()) {
        throw ParseError("variety id must look like 'origin/variety', got '" + text + "'");
    }
    return VarietyId{text.substr(0, slash), text.substr(slash + 1)};
}

std::string_view to_string(Plane plane) {
    switch (plane) {
        case Plane::general: return "general";
        case Plane::top: return "top";
        case Plane::side: return "side";
        case Plane::bottom: return "bottom";
    }
    return "general";
}

Plane plane_from_string(std::string_view text) {
    if (text == "general") return Plane::general;
    if (text == "top") return Plane::top;
    if (text == "side") return Plane::side;
    if (text == "bottom") return Plane::bottom;
    throw SchemaError("unknown plane '" + std::string(text) + "'");
}

std::string_view to_string(Scoring scoring) {
    switch (scoring) {
        case Scoring::ascending: return "ascending";
        case Scoring::descending: return "descending";
        case Scoring::peaked: return "peaked";
    }
    return "ascending";
}

Scoring scoring_from_string(std::string_view text) {
    if (text == "ascending") return Scoring::ascending;
    if (text == "descending") return Scoring::descending;
    if (text == "peaked") return Scoring::peaked;
    throw SchemaError("unknown scoring '" + std::string(text) + "'");
}

std::string_view to_string(TriggerLevel level) {
    switch (level) {
        case TriggerLevel::dictionary: return "dictionary";
        case TriggerLevel::model: return "model";
        case TriggerLevel::rule: return "rule";
    }
    return "dictionary";
}

TriggerLevel trigger_level_from_string(std::string_view text) {
    if (text == "dictionary") return TriggerLevel::dictionary;
    if (text == "model") return TriggerLevel::model;
    if (text == "rule") return TriggerLevel::rule;
    throw SchemaError("unknown trigger level '" + std::string(text) + "'");
}

double FeatureSpec::normalize(double value) const {
    const double span = f_max - f_min;
    if (!(span > 0.0)) return 0.0;
    switch (scoring) {
        case Scoring::ascending:
            return std::clamp((value - f_min) / span, 0.0, 1.0);
        case Scoring::descending:
            return 1.0 - std::clamp((value - f_min) / span, 0.0, 1.0);
        case Scoring::peaked: {
            const double reach = std::max(target - f_min, f_max - target);
            if (!(reach > 0.0)) return 0.0;
            return 1.0 - std::min(std::abs(value - target) / reach, 1.0);
        }
    }
    return 0.0;
}

std::string GradeThresholds::grade_for(double score) const {
    std::string label(kReject);
    for (const auto& cut : cuts) {
        if (score >= cut.score) label = cut.label;
    }
    return label;
}

std::string GradeThresholds::decide(double score) const {
    return accepts(score) ? grade_for(score) : std::string(kReject);
}

bool GradeThresholds::has_label(std::string_view label) const {
    return std::any_of(cuts.begin(), cuts.end(),
                       [&](const GradeCut& c) { return c.label == label; });
}

std::optional<std::size_t> RgidEntry::feature_index(std::string_view id) const {
    for (std::size_t k = 0; k < phi.size(); ++k) {
        if (phi[k].id == id) return k;
    }
    return std::nullopt;
}

const UpdateRule* RgidEntry::rule(std::string_view id) const {
    for (const auto& r : update_rules) {
        if (r.id == id) return &r;
    }
    return nullptr;
}

ValidationReport validate_entry(const RgidEntry& e) {
    ValidationReport out;
    auto add = [&](std::string path, std::string message) {
        out.push_back(Finding{std::move(path), std::move(message)});
    };

    if (e.lambda.empty()) add("lambda", "origin and variety must be non-empty");

    if (e.phi.empty()) add("phi", "at least one feature is required");
    std::set<std::string> ids;
    for (std::size_t k = 0; k < e.phi.size(); ++k) {
        const auto& f = e.phi[k];
        const std::string path = "phi[" + std::to_string(k) + "]";
        if (f.id.empty()) add(path + ".id", "feature id must be non-empty");
        if (!ids.insert(f.id).second) add(path + ".id", "duplicate feature id '" + f.id + "'");
        if (!(f.f_max > 0.0)) add(path + ".max", "f_max must be positive");
        if (!(f.f_min >= 0.0)) add(path + ".min", "f_min must be nonnegative");
        if (!(f.f_min < f.f_max)) add(path + ".min", "f_min must be below f_max");
        if (f.scoring == Scoring::peaked && !(f.target >= f.f_min && f.target <= f.f_max)) {
            add(path + ".target", "peaked target must lie within [f_min, f_max]");
        }
    }

    if (e.omega.size() != e.phi.size()) add("omega", "omega/phi length mismatch");
    double sum = 0.0;
    for (std::size_t k = 0; k < e.omega.size(); ++k) {
        if (!(e.omega[k] >= 0.0) || !std::isfinite(e.omega[k])) {
            add("omega[" + std::to_string(k) + "]", "weight must be finite and nonnegative");
        }
        sum += e.omega[k];
    }
    if (!e.omega.empty() && std::abs(sum - 1.0) > 1e-9) add("omega", "weights must sum to 1");

    const auto& cuts = e.thresholds.cuts;
    if (cuts.empty()) add("thresholds.cuts", "at least one grade label is required");
    std::set<std::string> labels;
    for (std::size_t i = 0; i < cuts.size(); ++i) {
        const std::string path = "thresholds.cuts[" + std::to_string(i) + "]";
        if (!(cuts[i].score >= 0.0 && cuts[i].score <= 1.0)) add(path + ".score", "cut must lie in [0, 1]");
        if (i > 0 && !(cuts[i].score > cuts[i - 1].score)) add(path + ".score", "cuts must be strictly increasing");
        if (cuts[i].label.empty() || cuts[i].label == kReject) add(path + ".label", "invalid grade label");
        if (!labels.insert(cuts[i].label).second) add(path + ".label", "duplicate grade label");
    }
    const double tau = e.thresholds.tau_final;
    if (!(tau >= 0.0 && tau <= 1.0)) add("thresholds.tau_final", "tau_final must lie in [0, 1]");
    if (!cuts.empty() && tau < cuts.front().score) {
        add("thresholds.tau_final", "tau_final must not be below the lowest grade cut");
    }

    std::set<std::string> rule_ids;
    for (std::size_t i = 0; i < e.update_rules.size(); ++i) {
        if (!rule_ids.insert(e.update_rules[i].id).second) {
            add("update_rules[" + std::to_string(i) + "].id", "duplicate rule id");
        }
    }

    if (!(e.econ.fc_max > 0.0 && e.econ.fc_max <= 1.0)) add("econ.fc_max", "fc_max must lie in (0, 1]");
    if (!(e.econ.p_market > 0.0)) add("econ.p_market", "market price must be positive");
    if (!(e.econ.eta_cost >= 0.0)) add("econ.eta_cost", "eta_cost must be nonnegative");
    if (!(e.econ.gamma >= 0.0)) add("econ.gamma", "gamma must be nonnegative");

    if (!(e.decay.ttl.count() > 0)) add("decay.ttl", "ttl must be positive");
    if (!(e.decay.spoilage_rate > 0.0)) add("decay.spoilage_rate", "spoilage rate must be positive");

    if (e.trust.layer_weights.empty()) add("trust.layer_weights", "at least one layer weight is required");
    for (const auto& [layer, s] : e.trust.layer_weights) {
        if (!(s > 0.0)) add("trust.layer_weights." + layer, "layer weight must be positive");
    }
    for (const auto& [factor, t] : e.trust.importance) {
        if (!(t >= 0.0)) add("trust.importance." + factor, "importance must be nonnegative");
    }
    return out;
}

namespace {

template <typename T>
void take(std::optional<T>& dst, const std::optional<T>& upper) {
    if (upper) dst = upper;
}

std::string join_findings(const ValidationReport& report) {
    std::string msg;
    for (const auto& f : report) {
        if (!msg.empty()) msg += "; ";
        msg += f.path + ": " + f.message;
    }
    return msg;
}

}  // namespace

EntryOverlay merge(const EntryOverlay& lower, const EntryOverlay& upper) {
    EntryOverlay out = lower;
    take(out.phi, upper.phi);
    take(out.omega, upper.omega);
    take(out.cuts, upper.cuts);
    take(out.tau_final, upper.tau_final);
    take(out.update_rules, upper.update_rules);
    take(out.fc_max, upper.fc_max);
    take(out.p_market, upper.p_market);
    take(out.eta_cost, upper.eta_cost);
    take(out.gamma, upper.gamma);
    take(out.ttl, upper.ttl);
    take(out.spoilage_rate, upper.spoilage_rate);
    for (const auto& [k, v] : upper.layer_weights) out.layer_weights[k] = v;
    for (const auto& [k, v] : upper.importance) out.importance[k] = v;
    return out;
}

const EntryOverlay& builtin_defaults() {
    static const EntryOverlay defaults = [] {
        EntryOverlay o;
        o.gamma = 0.5;
        o.ttl = hours(72);
        o.spoilage_rate = 100.0;
        o.fc_max = 0.3;
        o.eta_cost = 0.0;
        o.update_rules = std::vector<UpdateRule>{
            {"dictionary.importance_underestimated", TriggerLevel::dictionary, 0.2, 0.05},
            {"model.unexplained_variance", TriggerLevel::model, 0.5, 0.0},
            {"rule.return_rate_deviation", TriggerLevel::rule, 3.0, 0.05},
        };
        return o;
    }();
    return defaults;
}

RgidEntry finalize(const VarietyId& lambda, const std::string& category, const EntryOverlay& m) {
    auto need = [&](bool present, const char* field) {
        if (!present) {
            throw SchemaError("variety " + lambda.str() + ": missing required field '" + field + "'");
        }
    };
    need(m.phi.has_value(), "features");
    need(m.omega.has_value(), "weights");
    need(m.cuts.has_value(), "grades.cuts");
    need(m.tau_final.has_value(), "grades.tau_final");
    need(m.p_market.has_value(), "economics.p_market");
    need(m.fc_max.has_value(), "economics.fc_max");
    need(m.gamma.has_value(), "economics.gamma");
    need(m.ttl.has_value(), "decay.ttl_hours");
    need(m.spoilage_rate.has_value(), "decay.spoilage_rate_per_min");

    RgidEntry e;
    e.lambda = lambda;
    e.category = category;
    e.phi = *m.phi;
    e.omega = *m.omega;
    e.thresholds.cuts = *m.cuts;
    e.thresholds.tau_final = *m.tau_final;
    e.update_rules = m.update_rules.value_or(std::vector<UpdateRule>{});
    e.econ = Economics{*m.fc_max, *m.p_market, m.eta_cost.value_or(0.0), *m.gamma};
    e.decay = Decay{*m.ttl, *m.spoilage_rate};
    e.trust = TrustParams{m.layer_weights, m.importance};

    const double sum = std::accumulate(e.omega.begin(), e.omega.end(), 0.0);
    if (sum > 0.0 && std::isfinite(sum)) {
        for (double& w : e.omega) w /= sum;
    } else if (!e.omega.empty()) {
        throw InvariantError("variety " + lambda.str() + ": weights must have a positive sum");
    }

    if (auto report = validate_entry(e); !report.empty()) {
        throw InvariantError("variety " + lambda.str() + ": " + join_findings(report));
    }
    return e;
}

Repository::Repository(EntryOverlay base, std::map<std::string, EntryOverlay> categories,
                       std::map<VarietyId, VarietyRecord> varieties)
    : base_(std::move(base)), categories_(std::move(categories)), varieties_(std::move(varieties)) {
    if (varieties_.empty()) throw SchemaError("no varieties");
    const EntryOverlay root = merge(builtin_defaults(), base_);
    for (const auto& [id, rec] : varieties_) {
        if (id.empty()) throw SchemaError("varieties: origin and variety must be non-empty");
        const auto cat = categories_.find(rec.category);
        if (cat == categories_.end()) {
            throw SchemaError("variety " + id.str() + ": unknown category '" + rec.category + "'");
        }
        resolved_.emplace(id, finalize(id, rec.category, merge(merge(root, cat->second), rec.overlay)));
    }
}

const RgidEntry& Repository::lookup(const VarietyId& lambda) const {
    const auto it = resolved_.find(lambda);
    if (it == resolved_.end()) throw NotFoundError("unknown variety " + lambda.str());
    return it->second;
}

std::vector<VarietyId> Repository::ids() const {
    std::vector<VarietyId> out;
    out.reserve(resolved_.size());
    for (const auto& [id, _] : resolved_) out.push_back(id);
    return out;
}

// ---------------------------------------------------------------------------
// JSON mapping

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                         const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw SchemaError(where + ": unknown field '" + key + "'");
        }
    }
}

const json& require(const json& obj, const char* key, const std::string& where) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError(where + ": missing required field '" + key + "'");
    return *it;
}

double number(const json& v, const std::string& where) {
    if (!v.is_number()) throw SchemaError(where + ": expected a number");
    return v.get<double>();
}

std::string text(const json& v, const std::string& where) {
    if (!v.is_string()) throw SchemaError(where + ": expected a string");
    return v.get<std::string>();
}

const json& object(const json& v, const std::string& where) {
    if (!v.is_object()) throw SchemaError(where + ": expected an object");
    return v;
}

const json& array(const json& v, const std::string& where) {
    if (!v.is_array()) throw SchemaError(where + ": expected an array");
    return v;
}

FeatureSpec feature_from_json(const json& j, const std::string& where) {
    object(j, where);
    reject_unknown_keys(j, {"id", "plane", "source", "min", "max", "unit", "screening", "scoring", "target"},
                        where);
    FeatureSpec f;
    f.id = text(require(j, "id", where), where + ".id");
    f.plane = plane_from_string(text(require(j, "plane", where), where + ".plane"));
    f.source = j.contains("source") ? text(j["source"], where + ".source") : f.id;
    f.f_min = j.contains("min") ? number(j["min"], where + ".min") : 0.0;
    f.f_max = number(require(j, "max", where), where + ".max");
    f.unit = j.contains("unit") ? text(j["unit"], where + ".unit") : std::string{};
    if (j.contains("screening")) {
        if (!j["screening"].is_boolean()) throw SchemaError(where + ".screening: expected a boolean");
        f.screening = j["screening"].get<bool>();
    }
    if (j.contains("scoring")) f.scoring = scoring_from_string(text(j["scoring"], where + ".scoring"));
    if (f.scoring == Scoring::peaked) {
        f.target = number(require(j, "target", where), where + ".target");
    } else if (j.contains("target")) {
        f.target = number(j["target"], where + ".target");
    }
    return f;
}

json feature_to_json(const FeatureSpec& f) {
    json j{{"id", f.id},   {"plane", to_string(f.plane)}, {"source", f.source},
           {"min", f.f_min}, {"max", f.f_max},             {"unit", f.unit},
           {"screening", f.screening}, {"scoring", to_string(f.scoring)}};
    if (f.scoring == Scoring::peaked) j["target"] = f.target;
    return j;
}

UpdateRule rule_from_json(const json& j, const std::string& where) {
    object(j, where);
    reject_unknown_keys(j, {"id", "level", "threshold", "step"}, where);
    UpdateRule r;
    r.id = text(require(j, "id", where), where + ".id");
    r.level = trigger_level_from_string(text(require(j, "level", where), where + ".level"));
    r.threshold = number(require(j, "threshold", where), where + ".threshold");
    r.step = j.contains("step") ? number(j["step"], where + ".step") : 0.0;
    return r;
}

json rule_to_json(const UpdateRule& r) {
    return json{{"id", r.id}, {"level", to_string(r.level)}, {"threshold", r.threshold}, {"step", r.step}};
}

std::map<std::string, double> number_map(const json& j, const std::string& where) {
    object(j, where);
    std::map<std::string, double> out;
    for (const auto& [k, v] : j.items()) out[k] = number(v, where + "." + k);
    return out;
}

const std::initializer_list<std::string_view> kOverlayKeys = {
    "features", "weights", "grades", "update_rules", "economics", "decay", "trust"};

}  // namespace

EntryOverlay overlay_from_json(const json& j, const std::string& where) {
    object(j, where);
    EntryOverlay o;
    if (j.contains("features")) {
        std::vector<FeatureSpec> phi;
        const auto& arr = array(j["features"], where + ".features");
        for (std::size_t k = 0; k < arr.size(); ++k) {
            phi.push_back(feature_from_json(arr[k], where + ".features[" + std::to_string(k) + "]"));
        }
        o.phi = std::move(phi);
    }
    if (j.contains("weights")) {
        std::vector<double> w;
        const auto& arr = array(j["weights"], where + ".weights");
        for (std::size_t k = 0; k < arr.size(); ++k) {
            w.push_back(number(arr[k], where + ".weights[" + std::to_string(k) + "]"));
        }
        o.omega = std::move(w);
    }
    if (j.contains("grades")) {
        const std::string g = where + ".grades";
        const auto& grades = object(j["grades"], g);
        reject_unknown_keys(grades, {"cuts", "tau_final"}, g);
        if (grades.contains("cuts")) {
            std::vector<GradeCut> cuts;
            const auto& arr = array(grades["cuts"], g + ".cuts");
            for (std::size_t i = 0; i < arr.size(); ++i) {
                const std::string c = g + ".cuts[" + std::to_string(i) + "]";
                object(arr[i], c);
                reject_unknown_keys(arr[i], {"score", "label"}, c);
                cuts.push_back(GradeCut{number(require(arr[i], "score", c), c + ".score"),
                                        text(require(arr[i], "label", c), c + ".label")});
            }
            o.cuts = std::move(cuts);
        }
        if (grades.contains("tau_final")) o.tau_final = number(grades["tau_final"], g + ".tau_final");
    }
    if (j.contains("update_rules")) {
        std::vector<UpdateRule> rules;
        const auto& arr = array(j["update_rules"], where + ".update_rules");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            rules.push_back(rule_from_json(arr[i], where + ".update_rules[" + std::to_string(i) + "]"));
        }
        o.update_rules = std::move(rules);
    }
    if (j.contains("economics")) {
        const std::string w = where + ".economics";
        const auto& ec = object(j["economics"], w);
        reject_unknown_keys(ec, {"fc_max", "p_market", "eta_cost", "gamma"}, w);
        if (ec.contains("fc_max")) o.fc_max = number(ec["fc_max"], w + ".fc_max");
        if (ec.contains("p_market")) o.p_market = number(ec["p_market"], w + ".p_market");
        if (ec.contains("eta_cost")) o.eta_cost = number(ec["eta_cost"], w + ".eta_cost");
        if (ec.contains("gamma")) o.gamma = number(ec["gamma"], w + ".gamma");
    }
    if (j.contains("decay")) {
        const std::string w = where + ".decay";
        const auto& d = object(j["decay"], w);
        reject_unknown_keys(d, {"ttl_hours", "spoilage_rate_per_min"}, w);
        if (d.contains("ttl_hours")) o.ttl = hours(number(d["ttl_hours"], w + ".ttl_hours"));
        if (d.contains("spoilage_rate_per_min")) {
            o.spoilage_rate = number(d["spoilage_rate_per_min"], w + ".spoilage_rate_per_min");
        }
    }
    if (j.contains("trust")) {
        const std::string w = where + ".trust";
        const auto& t = object(j["trust"], w);
        reject_unknown_keys(t, {"layer_weights", "importance"}, w);
        if (t.contains("layer_weights")) o.layer_weights = number_map(t["layer_weights"], w + ".layer_weights");
        if (t.contains("importance")) o.importance = number_map(t["importance"], w + ".importance");
    }
    return o;
}

json to_json(const EntryOverlay& o) {
    json j = json::object();
    if (o.phi) {
        json arr = json::array();
        for (const auto& f : *o.phi) arr.push_back(feature_to_json(f));
        j["features"] = std::move(arr);
    }
    if (o.omega) j["weights"] = *o.omega;
    if (o.cuts || o.tau_final) {
        json g = json::object();
        if (o.cuts) {
            json arr = json::array();
            for (const auto& c : *o.cuts) arr.push_back(json{{"score", c.score}, {"label", c.label}});
            g["cuts"] = std::move(arr);
        }
        if (o.tau_final) g["tau_final"] = *o.tau_final;
        j["grades"] = std::move(g);
    }
    if (o.update_rules) {
        json arr = json::array();
        for (const auto& r : *o.update_rules) arr.push_back(rule_to_json(r));
        j["update_rules"] = std::move(arr);
    }
    json ec = json::object();
    if (o.fc_max) ec["fc_max"] = *o.fc_max;
    if (o.p_market) ec["p_market"] = *o.p_market;
    if (o.eta_cost) ec["eta_cost"] = *o.eta_cost;
    if (o.gamma) ec["gamma"] = *o.gamma;
    if (!ec.empty()) j["economics"] = std::move(ec);
    json d = json::object();
    if (o.ttl) d["ttl_hours"] = to_hours(*o.ttl);
    if (o.spoilage_rate) d["spoilage_rate_per_min"] = *o.spoilage_rate;
    if (!d.empty()) j["decay"] = std::move(d);
    json t = json::object();
    if (!o.layer_weights.empty()) t["layer_weights"] = o.layer_weights;
    if (!o.importance.empty()) t["importance"] = o.importance;
    if (!t.empty()) j["trust"] = std::move(t);
    return j;
}

json to_json(const RgidEntry& e) {
    EntryOverlay o;
    o.phi = e.phi;
    o.omega = e.omega;
    o.cuts = e.thresholds.cuts;
    o.tau_final = e.thresholds.tau_final;
    o.update_rules = e.update_rules;
    o.fc_max = e.econ.fc_max;
    o.p_market = e.econ.p_market;
    o.eta_cost = e.econ.eta_cost;
    o.gamma = e.econ.gamma;
    o.ttl = e.decay.ttl;
    o.spoilage_rate = e.decay.spoilage_rate;
    o.layer_weights = e.trust.layer_weights;
    o.importance = e.trust.importance;
    json j = to_json(o);
    j["origin"] = e.lambda.origin;
    j["variety"] = e.lambda.variety;
    j["category"] = e.category;
    return j;
}

RgidEntry entry_from_json(const json& j) {
    object(j, "entry");
    const VarietyId id{text(require(j, "origin", "entry"), "entry.origin"),
                       text(require(j, "variety", "entry"), "entry.variety")};
    const std::string category = j.contains("category") ? text(j["category"], "entry.category") : "";
    json overlay = j;
    overlay.erase("origin");
    overlay.erase("variety");
    overlay.erase("category");
    reject_unknown_keys(overlay, kOverlayKeys, "entry");
    return finalize(id, category, merge(builtin_defaults(), overlay_from_json(overlay, "entry")));
}

Repository load_dictionary(std::string_view document) {
    const bool blank = std::all_of(document.begin(), document.end(),
                                   [](unsigned char c) { return std::isspace(c) != 0; });
    if (blank) throw SchemaError("no varieties");

    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("dictionary: ") + e.what());
    }
    object(doc, "dictionary");
    reject_unknown_keys(doc, {"base", "categories", "varieties"}, "dictionary");

    EntryOverlay base;
    if (doc.contains("base")) {
        reject_unknown_keys(object(doc["base"], "base"), kOverlayKeys, "base");
        base = overlay_from_json(doc["base"], "base");
    }

    std::map<std::string, EntryOverlay> categories;
    if (doc.contains("categories")) {
        for (const auto& [name, overlay] : object(doc["categories"], "categories").items()) {
            const std::string where = "categories." + name;
            reject_unknown_keys(object(overlay, where), kOverlayKeys, where);
            categories.emplace(name, overlay_from_json(overlay, where));
        }
    }

    std::map<VarietyId, Repository::VarietyRecord> varieties;
    if (doc.contains("varieties")) {
        const auto& arr = array(doc["varieties"], "varieties");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string where = "varieties[" + std::to_string(i) + "]";
            const auto& v = object(arr[i], where);
            VarietyId id{text(require(v, "origin", where), where + ".origin"),
                         text(require(v, "variety", where), where + ".variety")};
            std::string category = text(require(v, "category", where), where + ".category");
            json overlay = v;
            overlay.erase("origin");
            overlay.erase("variety");
            overlay.erase("category");
            reject_unknown_keys(overlay, kOverlayKeys, where);
            if (varieties.contains(id)) throw SchemaError(where + ": duplicate variety " + id.str());
            varieties.emplace(std::move(id), Repository::VarietyRecord{std::move(category),
                                                                       overlay_from_json(overlay, where)});
        }
    }
    return Repository(std::move(base), std::move(categories), std::move(varieties));
}

Repository load_dictionary_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open dictionary " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_dictionary(buf.str());
}

std::string serialize_dictionary(const Repository& repo) {
    json doc;
    doc["base"] = to_json(repo.base());
    json cats = json::object();
    for (const auto& [name, overlay] : repo.categories()) cats[name] = to_json(overlay);
    doc["categories"] = std::move(cats);
    json vars = json::array();
    for (const auto& [id, rec] : repo.varieties()) {
        json v = to_json(rec.overlay);
        v["origin"] = id.origin;
        v["variety"] = id.variety;
        v["category"] = rec.category;
        vars.push_back(std::move(v));
    }
    doc["varieties"] = std::move(vars);
    return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Updates

json to_json(const ParameterDelta& d) {
    json j{{"level", to_string(d.level)},
           {"target", d.target},
           {"delta", d.delta},
           {"justification", d.justification},
           {"statistic", d.statistic}};
    if (!d.note.empty()) j["note"] = d.note;
    return j;
}

ParameterDelta delta_from_json(const json& j) {
    const std::string where = "delta";
    object(j, where);
    reject_unknown_keys(j, {"level", "target", "delta", "justification", "statistic", "note"}, where);
    ParameterDelta d;
    d.level = trigger_level_from_string(text(require(j, "level", where), where + ".level"));
    d.target = text(require(j, "target", where), where + ".target");
    d.delta = j.contains("delta") ? number(j["delta"], where + ".delta") : 0.0;
    d.justification = j.contains("justification") ? text(j["justification"], where + ".justification") : "";
    d.statistic = j.contains("statistic") ? number(j["statistic"], where + ".statistic") : 0.0;
    d.note = j.contains("note") ? text(j["note"], where + ".note") : "";
    return d;
}

namespace {

// Parses "<prefix>[<index>]<suffix>" and returns the index.
std::optional<std::size_t> indexed_path(std::string_view path, std::string_view prefix,
                                        std::string_view suffix) {
    if (!path.starts_with(prefix) || !path.ends_with(suffix)) return std::nullopt;
    const std::string_view mid = path.substr(prefix.size(), path.size() - prefix.size() - suffix.size());
    if (mid.size() < 3 || mid.front() != '[' || mid.back() != ']') return std::nullopt;
    const std::string_view digits = mid.substr(1, mid.size() - 2);
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(std::stoull(std::string(digits)));
}

}  // namespace

RgidEntry apply_update(const RgidEntry& entry, std::span<const ParameterDelta> deltas) {
    RgidEntry out = entry;
    if (deltas.empty()) return out;

    bool touched_omega = false;
    for (const auto& d : deltas) {
        if (!std::isfinite(d.delta)) throw InvariantError("delta for " + d.target + " is not finite");
        if (auto k = indexed_path(d.target, "omega", "")) {
            if (d.level != TriggerLevel::dictionary) {
                throw InvariantError(d.target + ": omega changes must be dictionary-level");
            }
            if (*k >= out.omega.size()) throw InvariantError(d.target + ": no such weight");
            out.omega[*k] += d.delta;
            touched_omega = true;
        } else if (auto i = indexed_path(d.target, "thresholds.cuts", ".score")) {
            if (d.level != TriggerLevel::rule) throw InvariantError(d.target + ": cut changes must be rule-level");
            if (*i >= out.thresholds.cuts.size()) throw InvariantError(d.target + ": no such cut");
            out.thresholds.cuts[*i].score += d.delta;
        } else if (d.target == "thresholds.tau_final") {
            if (d.level != TriggerLevel::rule) throw InvariantError(d.target + ": must be rule-level");
            out.thresholds.tau_final += d.delta;
        } else if (d.target.starts_with("model.")) {
            if (d.level != TriggerLevel::model) throw InvariantError(d.target + ": must be model-level");
        } else {
            throw InvariantError("unknown update target '" + d.target + "'");
        }
    }

    if (touched_omega) {
        for (double w : out.omega) {
            if (w < 0.0) throw InvariantError("update would make a weight negative");
        }
        const double sum = std::accumulate(out.omega.begin(), out.omega.end(), 0.0);
        if (!(sum > 0.0)) throw InvariantError("update would zero every weight");
        for (double& w : out.omega) w /= sum;
    }
    if (auto report = validate_entry(out); !report.empty()) {
        throw InvariantError("update rejected: " + join_findings(report));
    }
    return out;
}

RgidEntry apply_update(const RgidEntry& entry, const ParameterDelta& delta) {
    return apply_update(entry, std::span<const ParameterDelta>(&delta, 1));
}

namespace {

// Flattens every scalar parameter in a fixed order; shape-sensitive.
std::vector<double> scalars(const RgidEntry& e) {
    std::vector<double> v;
    for (const auto& f : e.phi) {
        v.push_back(f.f_min);
        v.push_back(f.f_max);
        v.push_back(f.target);
        v.push_back(f.screening ? 1.0 : 0.0);
        v.push_back(static_cast<double>(f.scoring));
    }
    v.insert(v.end(), e.omega.begin(), e.omega.end());
    for (const auto& c : e.thresholds.cuts) v.push_back(c.score);
    v.push_back(e.thresholds.tau_final);
    for (const auto& r : e.update_rules) {
        v.push_back(r.threshold);
        v.push_back(r.step);
    }
    v.push_back(e.econ.fc_max);
    v.push_back(e.econ.p_market);
    v.push_back(e.econ.eta_cost);
    v.push_back(e.econ.gamma);
    v.push_back(static_cast<double>(e.decay.ttl.count()));
    v.push_back(e.decay.spoilage_rate);
    for (const auto& [_, s] : e.trust.layer_weights) v.push_back(s);
    for (const auto& [_, t] : e.trust.importance) v.push_back(t);
    return v;
}

}  // namespace

std::size_t scalar_parameter_count(const RgidEntry& entry) { return scalars(entry).size(); }

std::size_t changed_parameter_count(const RgidEntry& before, const RgidEntry& after) {
    const auto a = scalars(before);
    const auto b = scalars(after);
    if (a.size() != b.size() || before.trust.layer_weights.size() != after.trust.layer_weights.size()) {
        throw InvariantError("entries differ in shape");
    }
    std::size_t changed = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) ++changed;
    }
    return changed;
}

}  // namespace trialign
