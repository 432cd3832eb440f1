#include "trialign/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <boost/random/beta_distribution.hpp>
#include <boost/random/exponential_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include "trialign/errors.hpp"
#include "trialign/evalstats.hpp"
#include "trialign/lifecycle.hpp"
#include "trialign/rules.hpp"

namespace trialign {

using nlohmann::json;

void check_profile(const VarietyProfile& p) {
    auto fail = [](const std::string& what) { throw ConfigError("profile: " + what); };
    if (p.lambda.empty()) fail("lambda must be set");
    if (p.standard.empty()) fail("standard must be set");
    for (const auto& [name, d] : {std::pair{"weight", p.weight}, std::pair{"diameter", p.diameter}}) {
        if (!(d.sd > 0.0)) fail(std::string(name) + ".sd must be positive");
        if (!(d.min >= 0.0) || !(d.min < d.max)) fail(std::string(name) + " needs 0 <= min < max");
    }
    if (!(p.scar_area.p_zero >= 0.0 && p.scar_area.p_zero <= 1.0)) fail("scar_area.p_zero must lie in [0, 1]");
    if (!(p.scar_area.mean > 0.0)) fail("scar_area.mean must be positive");
    for (const auto& [name, b] : {std::pair{"stem_integrity", p.stem_integrity},
                                  std::pair{"color_uniformity", p.color_uniformity},
                                  std::pair{"firmness", p.firmness}}) {
        if (!(b.alpha > 0.0) || !(b.beta > 0.0)) fail(std::string(name) + " needs alpha, beta > 0");
        if (!(b.p_one >= 0.0 && b.p_one <= 1.0)) fail(std::string(name) + ".p_one must lie in [0, 1]");
    }
}

const std::vector<VarietyProfile>& default_profiles() {
    static const std::vector<VarietyProfile> profiles = [] {
        std::vector<VarietyProfile> out;
        out.push_back(VarietyProfile{{"xinjiang", "korla-pear"},
                                     "korla-pear",
                                     {122.0, 22.0, 60.0, 200.0},
                                     {68.0, 6.0, 45.0, 95.0},
                                     {0.45, 0.5},
                                     {8.0, 2.0, 0.2},
                                     {6.0, 2.0, 0.0},
                                     {5.0, 2.0, 0.0}});
        out.push_back(VarietyProfile{{"national", "clementine"},
                                     "clementine",
                                     {75.0, 15.0, 30.0, 140.0},
                                     {47.0, 6.0, 28.0, 68.0},
                                     {0.6, 0.4},
                                     {18.0, 1.0, 0.4},
                                     {7.0, 2.0, 0.0},
                                     {6.0, 2.0, 0.0}});
        out.push_back(VarietyProfile{{"hainan", "cherry-tomato"},
                                     "cherry-tomato",
                                     {15.5, 3.5, 5.0, 30.0},
                                     {28.0, 3.0, 18.0, 40.0},
                                     {0.7, 0.2},
                                     {9.0, 1.5, 0.3},
                                     {6.0, 2.0, 0.0},
                                     {6.0, 2.0, 0.0}});
        return out;
    }();
    return profiles;
}

const VarietyProfile& default_profile(const VarietyId& lambda) {
    for (const auto& p : default_profiles()) {
        if (p.lambda == lambda) return p;
    }
    throw NotFoundError("no default profile for " + lambda.str());
}

namespace {

json normal_json(const TruncatedNormal& d) {
    return json{{"mean", d.mean}, {"sd", d.sd}, {"min", d.min}, {"max", d.max}};
}
json beta_json(const BetaDist& d) { return json{{"alpha", d.alpha}, {"beta", d.beta}, {"p_one", d.p_one}}; }

TruncatedNormal normal_from(const json& j, const TruncatedNormal& fallback) {
    TruncatedNormal d = fallback;
    d.mean = j.value("mean", d.mean);
    d.sd = j.value("sd", d.sd);
    d.min = j.value("min", d.min);
    d.max = j.value("max", d.max);
    return d;
}

BetaDist beta_from(const json& j, const BetaDist& fallback) {
    BetaDist d = fallback;
    d.alpha = j.value("alpha", d.alpha);
    d.beta = j.value("beta", d.beta);
    d.p_one = j.value("p_one", d.p_one);
    return d;
}

}  // namespace

json to_json(const VarietyProfile& p) {
    return json{{"lambda", p.lambda.str()},
                {"standard", p.standard},
                {"weight", normal_json(p.weight)},
                {"diameter", normal_json(p.diameter)},
                {"scar_area", {{"p_zero", p.scar_area.p_zero}, {"mean", p.scar_area.mean}}},
                {"stem_integrity", beta_json(p.stem_integrity)},
                {"color_uniformity", beta_json(p.color_uniformity)},
                {"firmness", beta_json(p.firmness)}};
}

VarietyProfile profile_from_json(const json& j) {
    if (!j.is_object()) throw SchemaError("profile: expected an object");
    try {
        const VarietyId lambda = parse_variety_id(j.at("lambda").get<std::string>());
        VarietyProfile p;
        for (const auto& d : default_profiles()) {
            if (d.lambda == lambda) p = d;
        }
        p.lambda = lambda;
        p.standard = j.value("standard", p.standard);
        if (j.contains("weight")) p.weight = normal_from(j["weight"], p.weight);
        if (j.contains("diameter")) p.diameter = normal_from(j["diameter"], p.diameter);
        if (j.contains("scar_area")) {
            p.scar_area.p_zero = j["scar_area"].value("p_zero", p.scar_area.p_zero);
            p.scar_area.mean = j["scar_area"].value("mean", p.scar_area.mean);
        }
        if (j.contains("stem_integrity")) p.stem_integrity = beta_from(j["stem_integrity"], p.stem_integrity);
        if (j.contains("color_uniformity")) p.color_uniformity = beta_from(j["color_uniformity"], p.color_uniformity);
        if (j.contains("firmness")) p.firmness = beta_from(j["firmness"], p.firmness);
        check_profile(p);
        return p;
    } catch (const json::exception& ex) {
        throw SchemaError(std::string("profile: ") + ex.what());
    }
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t stream_seed(std::uint64_t seed, std::string_view attribute) {
    return splitmix64(seed ^ fnv1a64(attribute));
}

namespace {

using Engine = std::mt19937_64;

double draw(Engine& rng, const TruncatedNormal& d) {
    boost::random::normal_distribution<double> normal(d.mean, d.sd);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const double x = normal(rng);
        if (x >= d.min && x <= d.max) return x;
    }
    return std::clamp(d.mean, d.min, d.max);
}

double draw(Engine& rng, const ZeroInflatedExponential& d) {
    boost::random::uniform_01<double> u;
    if (u(rng) < d.p_zero) return 0.0;
    boost::random::exponential_distribution<double> ex(1.0 / d.mean);
    return ex(rng);
}

double draw(Engine& rng, const BetaDist& d) {
    boost::random::uniform_01<double> u;
    if (u(rng) < d.p_one) return 1.0;
    boost::random::beta_distribution<double> beta(d.alpha, d.beta);
    return std::clamp(beta(rng), 0.0, 1.0);
}

// Rounds to a fixed resolution so serialized samples read back unchanged.
double round_to(double x, double quantum) { return std::round(x / quantum) * quantum; }

}  // namespace

std::vector<LabeledSample> generate_samples(const VarietyProfile& profile, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ConfigError("sample count must be positive");
    check_profile(profile);
    const GradingStandard& standard = builtin_standard(profile.standard);

    Engine weight(stream_seed(seed, "weight"));
    Engine diameter(stream_seed(seed, "diameter"));
    Engine scar(stream_seed(seed, "scar_area"));
    Engine stem(stream_seed(seed, "stem_integrity"));
    Engine color(stream_seed(seed, "color_uniformity"));
    Engine firmness(stream_seed(seed, "firmness"));

    std::vector<LabeledSample> out;
    out.reserve(n);
    char id[32];
    for (std::size_t i = 0; i < n; ++i) {
        FruitSample s;
        std::snprintf(id, sizeof id, "-%06zu", i);
        s.id = profile.lambda.variety + id;
        s.lambda = profile.lambda;
        s.weight_g = round_to(draw(weight, profile.weight), 0.01);
        s.diameter_mm = round_to(draw(diameter, profile.diameter), 0.01);
        s.scar_area_cm2 = round_to(draw(scar, profile.scar_area), 0.001);
        s.stem_integrity = round_to(draw(stem, profile.stem_integrity), 0.0001);
        s.color_uniformity = round_to(draw(color, profile.color_uniformity), 0.0001);
        s.firmness = round_to(draw(firmness, profile.firmness), 0.0001);
        attach_default_observations(s);
        std::string label = grade_by_rules(s, standard);
        out.push_back(LabeledSample{std::move(s), std::move(label)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Simulator

namespace {

void check_clock_config(const ClockConfig& c) {
    if (c.arrival_interval.count() <= 0) throw ConfigError("clock.arrival_interval must be positive");
    if (c.base_latency.count() < 0) throw ConfigError("clock.base_latency must be nonnegative");
    if (c.layer_duration.count() < 0) throw ConfigError("clock.layer_duration must be nonnegative");
    if (c.buffer_capacity == 0) throw ConfigError("clock.buffer_capacity must be positive");
    if (c.drain_batch == 0) throw ConfigError("clock.drain_batch must be positive");
}

void check_cost_config(const CostConfig& c) {
    if (!(c.base_cost >= 0.0)) throw ConfigError("cost.base_cost must be nonnegative");
    if (!(c.per_layer_cost >= 0.0)) throw ConfigError("cost.per_layer_cost must be nonnegative");
}

std::vector<TrustFactor> factors(const RgidEntry& entry, const std::vector<FactorRef>& refs) {
    std::vector<TrustFactor> out;
    for (const auto& r : refs) out.push_back(make_trust_factor(entry, r.factor, r.layer));
    return out;
}

}  // namespace

SimulationReport run_pipeline(const Repository& repo, const SimulationConfig& config) {
    check_clock_config(config.clock);
    check_cost_config(config.cost);
    const RgidEntry& entry = repo.lookup(config.profile.lambda);
    const Extractor& extractor = ExtractorRegistry::builtin().get(config.extractor);
    const CascadeConfig cascade = config.cascade.value_or(CascadeConfig::sound(entry));
    if (config.early_exit) {
        const auto findings = check_threshold_soundness(entry, cascade);
        if (!findings.empty()) {
            throw ConfigError("cascade config rejected: " + findings.front().path + ": " + findings.front().message);
        }
    }
    if (config.need.empty()) throw ConfigError("trust.need must list at least one factor");

    auto samples = generate_samples(config.profile, config.n, config.seed);
    std::map<std::string, std::size_t> index_of;
    for (std::size_t i = 0; i < samples.size(); ++i) index_of[samples[i].sample.id] = i;

    SimulationReport rep;
    rep.lambda = config.profile.lambda;
    rep.seed = config.seed;
    rep.n_samples = config.n;
    rep.early_exit = config.early_exit;
    rep.layer_count = entry.phi.size();
    rep.traces.resize(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        rep.traces[i].sample_id = samples[i].sample.id;
        rep.traces[i].rule_grade = samples[i].label;
        rep.traces[i].grade = std::string(kExpired);
    }

    Buffer buffer(config.clock.buffer_capacity);
    const ClockConfig& clk = config.clock;
    Timestamp t_arrive = clk.start;
    Timestamp t_consumer = clk.start;
    Timestamp last_ingest = clk.start;
    std::size_t next = 0;
    std::size_t layer_total = 0;
    double cost_total = 0.0;

    while (next < samples.size() || buffer.size() > 0) {
        const bool producer_ready = next < samples.size();
        const bool room = buffer.size() < clk.buffer_capacity;
        if (producer_ready && (buffer.size() == 0 || (room && t_arrive <= t_consumer))) {
            FruitSample s = samples[next].sample;
            s.t_collect = t_arrive;
            last_ingest = t_arrive;
            buffer.ingest(make_record(std::move(s), entry));
            ++next;
            t_arrive += clk.arrival_interval;
            continue;
        }
        const bool blocked = producer_ready && !room && t_arrive <= t_consumer;
        if (blocked) ++rep.backpressure_events;

        Timestamp t = std::max(t_consumer, last_ingest);
        // A held producer resumes once the drain frees space.
        if (blocked) t_arrive = std::max(t_arrive, t);
        DrainResult drained = buffer.drain(clk.drain_batch, t);
        rep.purged += drained.purged_ids.size();
        for (auto& record : drained.batch) {
            const FruitSample& s = record.payload;
            TraceRow& row = rep.traces[index_of.at(s.id)];
            const FullDecision full = full_decide(s, entry, extractor);
            std::size_t layers = entry.phi.size();
            if (config.early_exit) {
                const DecisionTrace trace = cascade_decide(s, entry, cascade, extractor);
                layers = trace.layers_evaluated;
                row.grade = trace.grade;
                row.exit_stage = std::string(to_string(trace.exit_stage));
                row.score = trace.final_score();
                if (trace.verdict != full.verdict) ++rep.oracle_mismatches;
                if (trace.grade != full.grade) ++rep.grade_mismatches;
            } else {
                row.grade = full.grade;
                row.exit_stage = std::string(to_string(ExitStage::full));
                row.score = full.composite;
            }
            row.layers_evaluated = layers;
            ++rep.exits[row.exit_stage];
            layer_total += layers;
            cost_total += config.cost.base_cost + config.cost.per_layer_cost * static_cast<double>(layers);
            t += clk.base_latency + clk.layer_duration * static_cast<std::int64_t>(layers);
            row.t_done_ms = to_unix_ms(t);
            ++rep.graded;
        }
        t_consumer = t;
    }

    for (const auto& row : rep.traces) ++rep.histogram[row.grade];
    rep.elapsed_ms = (t_consumer - clk.start).count();
    if (rep.graded > 0) {
        rep.mean_layers_evaluated = static_cast<double>(layer_total) / static_cast<double>(rep.graded);
        rep.mean_total_cost = cost_total / static_cast<double>(rep.graded);
    } else {
        rep.mean_total_cost = config.cost.base_cost;
    }
    const double minutes = to_minutes(Duration{std::max<std::int64_t>(rep.elapsed_ms, 1)});
    rep.throughput = static_cast<double>(rep.graded) / minutes;
    rep.fraction_invalid = static_cast<double>(rep.purged) / static_cast<double>(rep.n_samples);
    rep.delta_c = cost_delta(rep.purged, rep.n_samples, entry.econ.eta_cost);

    // Rule-grade agreement over the samples that were graded.
    {
        std::set<std::string> labels;
        for (const auto& g : builtin_standard(config.profile.standard).grades) labels.insert(g.label);
        for (const auto& c : entry.thresholds.cuts) labels.insert(c.label);
        labels.insert(std::string(kReject));
        ConfusionMatrix m;
        m.classes.assign(labels.begin(), labels.end());
        std::map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < m.classes.size(); ++i) pos[m.classes[i]] = i;
        m.counts.assign(m.classes.size(), std::vector<std::uint64_t>(m.classes.size(), 0));
        for (const auto& row : rep.traces) {
            if (row.grade == kExpired) continue;
            ++m.counts[pos.at(row.rule_grade)][pos.at(row.grade)];
        }
        if (m.total() > 0) rep.rule_accuracy = classification_metrics(m).accuracy;
    }

    const auto need = factors(entry, config.need);
    const auto provided = factors(entry, config.provided);
    const double icq_value = icq(sum_provided(provided), sum_need(need), entry.econ.gamma);
    const double fe_raw = fe(rep.throughput, entry.decay.spoilage_rate);
    const double fc_value = fc(rep.mean_total_cost, entry.econ.p_market);
    rep.tti = tti(icq_value, fe_raw, fc_value, entry, config.weights, config.fe_cap);
    rep.tti.inputs.scq = sum_provided(provided);
    rep.tti.inputs.ccq = sum_need(need);
    rep.tti.inputs.throughput = rep.throughput;
    rep.tti.inputs.spoilage_rate = entry.decay.spoilage_rate;
    rep.tti.inputs.total_cost = rep.mean_total_cost;
    rep.tti.inputs.p_market = entry.econ.p_market;
    return rep;
}

json to_json(const SimulationReport& r) {
    return json{{"lambda", r.lambda.str()},
                {"seed", r.seed},
                {"n_samples", r.n_samples},
                {"early_exit", r.early_exit},
                {"histogram", r.histogram},
                {"graded", r.graded},
                {"layer_count", r.layer_count},
                {"mean_layers_evaluated", r.mean_layers_evaluated},
                {"exits", r.exits},
                {"oracle_mismatches", r.oracle_mismatches},
                {"grade_mismatches", r.grade_mismatches},
                {"rule_accuracy", r.rule_accuracy},
                {"elapsed_ms", r.elapsed_ms},
                {"throughput_per_min", r.throughput},
                {"backpressure_events", r.backpressure_events},
                {"purge", {{"purged", r.purged}, {"fraction_invalid", r.fraction_invalid}, {"delta_c", r.delta_c}}},
                {"mean_total_cost", r.mean_total_cost},
                {"tti", to_json(r.tti)}};
}

void write_trace_csv(std::ostream& out, const SimulationReport& r) {
    out << "sample_id,rule_grade,grade,exit_stage,layers_evaluated,score,t_done_ms\n";
    char score[32];
    for (const auto& row : r.traces) {
        std::snprintf(score, sizeof score, "%.6f", row.score);
        out << row.sample_id << ',' << row.rule_grade << ',' << row.grade << ',' << row.exit_stage << ','
            << row.layers_evaluated << ',' << score << ',' << row.t_done_ms << '\n';
    }
}

namespace {

std::vector<FactorRef> factor_list(const json& j, const char* key) {
    std::vector<FactorRef> out;
    if (!j.contains(key)) return out;
    for (const auto& f : j.at(key)) {
        out.push_back(FactorRef{f.at("factor").get<std::string>(), f.at("layer").get<std::string>()});
    }
    return out;
}

}  // namespace

Scenario scenario_from_json(const json& doc, const std::filesystem::path& base_dir) {
    if (!doc.is_object()) throw SchemaError("scenario: expected an object");
    try {
        Scenario sc;
        std::filesystem::path dict = doc.at("dictionary").get<std::string>();
        if (dict.is_relative()) dict = base_dir / dict;
        sc.repo = load_dictionary_file(dict);

        SimulationConfig& c = sc.config;
        const VarietyId lambda = parse_variety_id(doc.at("lambda").get<std::string>());
        if (doc.contains("profile")) {
            json p = doc["profile"];
            if (!p.contains("lambda")) p["lambda"] = lambda.str();
            c.profile = profile_from_json(p);
        } else {
            c.profile = default_profile(lambda);
        }
        if (c.profile.lambda != lambda) throw SchemaError("scenario: profile lambda differs from scenario lambda");
        c.n = doc.value("n", c.n);
        c.seed = doc.value("seed", c.seed);
        c.early_exit = doc.value("early_exit", c.early_exit);
        c.extractor = doc.value("extractor", c.extractor);
        if (doc.contains("clock")) {
            const json& k = doc["clock"];
            c.clock.start = timestamp_from_ms(k.value("start_ms", to_unix_ms(c.clock.start)));
            c.clock.arrival_interval = Duration{k.value("arrival_interval_ms", c.clock.arrival_interval.count())};
            c.clock.base_latency = Duration{k.value("base_latency_ms", c.clock.base_latency.count())};
            c.clock.layer_duration = Duration{k.value("layer_duration_ms", c.clock.layer_duration.count())};
            c.clock.buffer_capacity = k.value("buffer_capacity", c.clock.buffer_capacity);
            c.clock.drain_batch = k.value("drain_batch", c.clock.drain_batch);
        }
        if (doc.contains("cost")) {
            c.cost.base_cost = doc["cost"].value("base_cost", c.cost.base_cost);
            c.cost.per_layer_cost = doc["cost"].value("per_layer_cost", c.cost.per_layer_cost);
        }
        if (doc.contains("cascade")) c.cascade = cascade_config_from_json(doc["cascade"], sc.repo.lookup(lambda));
        if (doc.contains("trust")) {
            c.need = factor_list(doc["trust"], "need");
            c.provided = factor_list(doc["trust"], "provided");
        }
        if (doc.contains("tti")) {
            const json& t = doc["tti"];
            c.weights.w_i = t.value("w_i", c.weights.w_i);
            c.weights.w_e = t.value("w_e", c.weights.w_e);
            c.weights.w_c = t.value("w_c", c.weights.w_c);
            c.fe_cap = t.value("fe_cap", c.fe_cap);
        }
        return sc;
    } catch (const json::exception& ex) {
        throw SchemaError(std::string("scenario: ") + ex.what());
    }
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open scenario file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    json doc;
    try {
        doc = json::parse(buf.str());
    } catch (const json::parse_error& ex) {
        throw ParseError(std::string("scenario: ") + ex.what());
    }
    return scenario_from_json(doc, path.parent_path());
}

}  // namespace trialign
