#include "trialign/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "trialign/errors.hpp"

namespace trialign {

using nlohmann::json;

double trust_factor(double layer_weight, double importance) {
    if (!(layer_weight > 0.0)) throw DomainError("trust factor: layer weight must be positive");
    if (!(importance >= 0.0)) throw DomainError("trust factor: importance must be nonnegative");
    return layer_weight * importance;
}

TrustFactor make_trust_factor(const RgidEntry& entry, const std::string& factor_id, const std::string& layer) {
    const auto s = entry.trust.layer_weights.find(layer);
    if (s == entry.trust.layer_weights.end()) throw NotFoundError("no trust layer '" + layer + "'");
    const auto t = entry.trust.importance.find(factor_id);
    if (t == entry.trust.importance.end()) throw NotFoundError("no importance for factor '" + factor_id + "'");
    return TrustFactor{factor_id, layer, trust_factor(s->second, t->second)};
}

namespace {

double total(std::span<const TrustFactor> factors) {
    double s = 0.0;
    for (const auto& f : factors) s += f.value;
    return s;
}

}  // namespace

double sum_need(std::span<const TrustFactor> needs) { return total(needs); }
double sum_provided(std::span<const TrustFactor> provided) { return total(provided); }

double icq(double scq, double ccq, double gamma) {
    if (!(ccq > 0.0)) throw DomainError("icq: ccq must be positive");
    if (!(scq >= 0.0)) throw DomainError("icq: scq must be nonnegative");
    if (!(gamma >= 0.0)) throw DomainError("icq: gamma must be nonnegative");
    return std::min(scq / ccq, 1.0 + gamma);
}

double fe(double throughput, double spoilage_rate) {
    if (!(spoilage_rate > 0.0)) throw DomainError("fe: spoilage rate must be positive");
    if (!(throughput >= 0.0)) throw DomainError("fe: throughput must be nonnegative");
    return throughput / spoilage_rate;
}

double fc(double total_cost, double p_market) {
    if (!(p_market > 0.0)) throw DomainError("fc: market price must be positive");
    if (!(total_cost >= 0.0)) throw DomainError("fc: total cost must be nonnegative");
    return total_cost / p_market;
}

double TtiReport::recompute() const {
    return weights.w_i * icq + weights.w_e * fe_term + weights.w_c * (1.0 - fc / inputs.fc_max);
}

double TtiReport::recompute_from_inputs() const {
    const auto& in = inputs;
    if (!(in.scq && in.ccq && in.throughput && in.spoilage_rate && in.total_cost && in.p_market)) {
        return recompute();
    }
    const double i = trialign::icq(*in.scq, *in.ccq, in.gamma);
    const double e = std::min(trialign::fe(*in.throughput, *in.spoilage_rate), in.fe_cap) / in.fe_cap;
    const double c = std::clamp(trialign::fc(*in.total_cost, *in.p_market), 0.0, in.fc_max);
    return weights.w_i * i + weights.w_e * e + weights.w_c * (1.0 - c / in.fc_max);
}

TtiReport tti(double icq_value, double fe_raw, double fc_value, const Economics& econ, const TtiWeights& w,
              double fe_cap) {
    const double wsum = w.w_i + w.w_e + w.w_c;
    if (std::abs(wsum - 1.0) > 1e-9) throw DomainError("tti: weights must sum to 1");
    if (w.w_i < 0.0 || w.w_e < 0.0 || w.w_c < 0.0) throw DomainError("tti: weights must be nonnegative");
    if (!(fe_cap > 0.0)) throw DomainError("tti: fe_cap must be positive");
    if (!(econ.fc_max > 0.0)) throw DomainError("tti: fc_max must be positive");
    if (!(fe_raw >= 0.0)) throw DomainError("tti: fe must be nonnegative");

    TtiReport r;
    r.weights = w;
    r.inputs.fc_max = econ.fc_max;
    r.inputs.gamma = econ.gamma;
    r.inputs.fe_cap = fe_cap;
    r.icq = icq_value;
    r.fe_raw = fe_raw;
    r.fe_term = std::min(fe_raw, fe_cap) / fe_cap;
    r.fc = fc_value;
    if (fc_value > econ.fc_max) {
        r.warnings.push_back("fc " + std::to_string(fc_value) + " exceeds fc_max; clamped");
        r.fc = econ.fc_max;
    } else if (fc_value < 0.0) {
        r.warnings.push_back("fc is negative; clamped to 0");
        r.fc = 0.0;
    }
    r.tti = r.recompute();
    return r;
}

TtiReport tti(double icq_value, double fe_raw, double fc_value, const RgidEntry& entry, const TtiWeights& w,
              double fe_cap) {
    return tti(icq_value, fe_raw, fc_value, entry.econ, w, fe_cap);
}

TtiReport tti_from_inputs(const TtiInputs& in, const TtiWeights& w) {
    if (!(in.scq && in.ccq && in.throughput && in.spoilage_rate && in.total_cost && in.p_market)) {
        throw DomainError("tti: raw inputs need scq, ccq, throughput, spoilage_rate, total_cost, p_market");
    }
    Economics econ;
    econ.fc_max = in.fc_max;
    econ.gamma = in.gamma;
    econ.p_market = *in.p_market;
    TtiReport r = tti(icq(*in.scq, *in.ccq, in.gamma), fe(*in.throughput, *in.spoilage_rate),
                      fc(*in.total_cost, *in.p_market), econ, w, in.fe_cap);
    r.inputs = in;
    return r;
}

json to_json(const TtiReport& r) {
    json j{{"icq", r.icq},
           {"fe_raw", r.fe_raw},
           {"fe_term", r.fe_term},
           {"fc", r.fc},
           {"tti", r.tti},
           {"w_i", r.weights.w_i},
           {"w_e", r.weights.w_e},
           {"w_c", r.weights.w_c},
           {"fc_max", r.inputs.fc_max},
           {"gamma", r.inputs.gamma},
           {"fe_cap", r.inputs.fe_cap},
           {"warnings", r.warnings}};
    auto opt = [&](const char* key, const std::optional<double>& v) {
        j[key] = v ? json(*v) : json(nullptr);
    };
    opt("scq", r.inputs.scq);
    opt("ccq", r.inputs.ccq);
    opt("throughput", r.inputs.throughput);
    opt("spoilage_rate", r.inputs.spoilage_rate);
    opt("total_cost", r.inputs.total_cost);
    opt("p_market", r.inputs.p_market);
    return j;
}

TtiReport tti_from_json(const json& doc) {
    if (!doc.is_object()) throw SchemaError("tti inputs: expected an object");
    auto num = [&](const char* key) -> std::optional<double> {
        const auto it = doc.find(key);
        if (it == doc.end() || it->is_null()) return std::nullopt;
        if (!it->is_number()) throw SchemaError(std::string("tti inputs.") + key + ": expected a number");
        return it->get<double>();
    };
    TtiWeights w;
    w.w_i = num("w_i").value_or(w.w_i);
    w.w_e = num("w_e").value_or(w.w_e);
    w.w_c = num("w_c").value_or(w.w_c);

    TtiInputs in;
    in.fc_max = num("fc_max").value_or(in.fc_max);
    in.gamma = num("gamma").value_or(in.gamma);
    in.fe_cap = num("fe_cap").value_or(in.fe_cap);

    const auto i = num("icq");
    auto e = num("fe");
    if (!e) e = num("fe_raw");  // a report fed back in
    const auto c = num("fc");
    if (i || e || c) {
        if (!(i && e && c)) throw SchemaError("tti inputs: icq, fe and fc must be given together");
        Economics econ;
        econ.fc_max = in.fc_max;
        econ.gamma = in.gamma;
        return tti(*i, *e, *c, econ, w, in.fe_cap);
    }
    in.scq = num("scq");
    in.ccq = num("ccq");
    in.throughput = num("throughput");
    in.spoilage_rate = num("spoilage_rate");
    in.total_cost = num("total_cost");
    in.p_market = num("p_market");
    return tti_from_inputs(in, w);
}

// ---------------------------------------------------------------------------

SensitivityScenario budget_coupled_scenario() {
    constexpr double c0 = 0.02, c1 = 0.04, c2 = 0.03, c3 = 0.02;
    SensitivityScenario s;
    s.cost = [=](double i, double e) { return c0 + c1 * i * i + c2 * e * e + c3 * i * e; };
    s.fc_max = 0.3;
    s.gamma = 0.5;
    s.budget = 3.2;
    return s;
}

SensitivityScenario constant_cost_scenario(double fc_value) {
    SensitivityScenario s;
    s.cost = [=](double, double) { return fc_value; };
    s.fc_max = 0.3;
    s.gamma = 0.5;
    s.budget = 3.2;
    return s;
}

SensitivityGrid SensitivityGrid::uniform(double icq_lo, double icq_hi, double fe_lo, double fe_hi, std::size_t n) {
    SensitivityGrid g;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = n > 1 ? static_cast<double>(k) / static_cast<double>(n - 1) : 0.0;
        g.icq.push_back(icq_lo + t * (icq_hi - icq_lo));
        g.fe.push_back(fe_lo + t * (fe_hi - fe_lo));
    }
    return g;
}

SensitivityGrid SensitivityGrid::standard() { return uniform(0.6, 1.4, 0.4, 1.6, 5); }

bool SignReport::all_passed() const {
    return fc_over_icq.passed() && fc_over_fe.passed() && tti_over_fc.passed() && tti_mixed.passed();
}

SignReport tti_sensitivity(const SensitivityScenario& sc, const SensitivityGrid& grid, double h) {
    if (grid.icq.size() < 3 || grid.fe.size() < 3) {
        throw DomainError("sensitivity grid needs at least 3 points per axis");
    }
    if (!(h > 0.0)) throw DomainError("sensitivity step must be positive");
    if (!sc.cost) throw DomainError("sensitivity scenario has no cost model");
    for (double i : grid.icq) {
        for (double e : grid.fe) {
            if (i + e > sc.budget) throw DomainError("grid point exceeds the scenario budget");
        }
    }

    Economics econ;
    econ.fc_max = sc.fc_max;
    econ.gamma = sc.gamma;
    auto tti_at = [&](double i, double e, double c) {
        const double term_e = std::min(e, sc.fe_cap) / sc.fe_cap;
        const double cc = std::clamp(c, 0.0, sc.fc_max);
        return sc.weights.w_i * i + sc.weights.w_e * term_e + sc.weights.w_c * (1.0 - cc / sc.fc_max);
    };
    auto tti_of = [&](double i, double e) { return tti_at(i, e, sc.cost(i, e)); };

    SignReport r;
    r.fc_over_icq.name = "dFC/dICQ > 0";
    r.fc_over_fe.name = "dFC/dFE > 0";
    r.tti_over_fc.name = "dTTI/dFC <= 0";
    r.tti_mixed.name = "d2TTI/dICQdFE < 0";

    for (std::size_t a = 1; a + 1 < grid.icq.size(); ++a) {
        for (std::size_t b = 1; b + 1 < grid.fe.size(); ++b) {
            const double i = grid.icq[a];
            const double e = grid.fe[b];

            const double d_icq = (sc.cost(i + h, e) - sc.cost(i - h, e)) / (2.0 * h);
            const double d_fe = (sc.cost(i, e + h) - sc.cost(i, e - h)) / (2.0 * h);
            const double c = sc.cost(i, e);
            const double d_fc = (tti_at(i, e, c + h) - tti_at(i, e, std::max(c - h, 0.0))) /
                                (c + h - std::max(c - h, 0.0));
            const double mixed =
                (tti_of(i + h, e + h) - tti_of(i + h, e - h) - tti_of(i - h, e + h) + tti_of(i - h, e - h)) /
                (4.0 * h * h);

            auto check = [&](SignCheck& chk, double v, bool ok) {
                ++chk.points_checked;
                if (!ok) chk.violations.push_back(GridPoint{i, e, v});
            };
            check(r.fc_over_icq, d_icq, d_icq > 0.0);
            check(r.fc_over_fe, d_fe, d_fe > 0.0);
            check(r.tti_over_fc, d_fc, d_fc <= 0.0);
            check(r.tti_mixed, mixed, mixed < 0.0);
        }
    }
    return r;
}

json to_json(const SignReport& r) {
    auto one = [](const SignCheck& c) {
        json v = json::array();
        for (const auto& p : c.violations) v.push_back(json{{"icq", p.icq}, {"fe", p.fe}, {"value", p.value}});
        return json{{"name", c.name}, {"passed", c.passed()}, {"points_checked", c.points_checked},
                    {"violations", std::move(v)}};
    };
    return json{{"fc_over_icq", one(r.fc_over_icq)},
                {"fc_over_fe", one(r.fc_over_fe)},
                {"tti_over_fc", one(r.tti_over_fc)},
                {"tti_mixed", one(r.tti_mixed)},
                {"all_passed", r.all_passed()}};
}

}  // namespace trialign
