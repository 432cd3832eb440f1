#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "trialign/errors.hpp"
#include "trialign/rules.hpp"
#include "trialign/simgen.hpp"

using namespace trialign;
using trialign::testing::data_path;

namespace {

const Repository& shipped() {
    static const Repository repo = load_dictionary_file(data_path("dictionary.json"));
    return repo;
}

double truncated_normal_mean(const TruncatedNormal& d) {
    auto pdf = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); };
    auto cdf = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
    const double a = (d.min - d.mean) / d.sd, b = (d.max - d.mean) / d.sd;
    return d.mean + d.sd * (pdf(a) - pdf(b)) / (cdf(b) - cdf(a));
}

SimulationConfig base_config(const VarietyProfile& p, std::size_t n = 1000) {
    SimulationConfig c;
    c.profile = p;
    c.n = n;
    c.seed = 3;
    c.need = {{"weight", "Q"}, {"scar_area", "Q"}};
    c.provided = {{"weight", "Q"}};
    return c;
}

Repository with_ttl(const Repository& repo, const VarietyId& lambda, Duration ttl) {
    auto varieties = repo.varieties();
    varieties.at(lambda).overlay.ttl = ttl;
    return Repository(repo.base(), repo.categories(), varieties);
}

}  // namespace

TEST_CASE("stream seeds are stable and distinct") {
    CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(stream_seed(1, "weight") != stream_seed(1, "diameter"));
    CHECK(stream_seed(1, "weight") != stream_seed(2, "weight"));
}

TEST_CASE("generation is deterministic per seed") {
    const auto& p = default_profiles().front();
    const auto a = generate_samples(p, 200, 42);
    const auto b = generate_samples(p, 200, 42);
    const auto c = generate_samples(p, 200, 43);
    REQUIRE(a.size() == 200);
    CHECK(a.front().sample.id == "korla-pear-000000");
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(to_json(a[i].sample) == to_json(b[i].sample));
        CHECK(a[i].label == b[i].label);
        differs = differs || a[i].sample.weight_g != c[i].sample.weight_g;
    }
    CHECK(differs);
}

TEST_CASE("attribute streams are independent of each other") {
    VarietyProfile p = default_profiles().front();
    const auto a = generate_samples(p, 100, 9);
    p.diameter.mean += 5.0;
    const auto b = generate_samples(p, 100, 9);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].sample.weight_g == b[i].sample.weight_g);
}

TEST_CASE("sample means match the truncated normal within three standard errors") {
    for (const auto& p : default_profiles()) {
        const std::size_t n = 20000;
        const auto s = generate_samples(p, n, 1);
        double sum = 0.0, sq = 0.0;
        for (const auto& ls : s) {
            sum += ls.sample.weight_g;
            sq += ls.sample.weight_g * ls.sample.weight_g;
            CHECK(ls.sample.weight_g >= p.weight.min);
            CHECK(ls.sample.weight_g <= p.weight.max);
        }
        const double mean = sum / n;
        const double sd = std::sqrt(sq / n - mean * mean);
        CHECK(std::abs(mean - truncated_normal_mean(p.weight)) < 3.0 * sd / std::sqrt(double(n)));
    }
}

TEST_CASE("zero-inflation extremes") {
    VarietyProfile p = default_profiles().front();
    p.scar_area.p_zero = 1.0;
    p.stem_integrity.p_one = 1.0;
    for (const auto& ls : generate_samples(p, 500, 2)) {
        CHECK(ls.sample.scar_area_cm2 == 0.0);
        CHECK(ls.sample.stem_integrity == 1.0);
    }
}

TEST_CASE("every rule grade has support") {
    for (const auto& p : default_profiles()) {
        std::set<std::string> seen;
        for (const auto& ls : generate_samples(p, 2000, 5)) {
            seen.insert(ls.label);
            CHECK(ls.label == grade_by_rules(ls.sample, p.standard));
        }
        for (const auto& g : builtin_standard(p.standard).grades) CHECK(seen.contains(g.label));
        CHECK(seen.contains("Reject"));
    }
}

TEST_CASE("profile checks") {
    VarietyProfile p = default_profiles().front();
    CHECK_NOTHROW(check_profile(p));
    p.weight.sd = 0.0;
    CHECK_THROWS_AS(check_profile(p), ConfigError);
    p = default_profiles().front();
    p.scar_area.p_zero = 1.5;
    CHECK_THROWS_AS(check_profile(p), ConfigError);
    CHECK_THROWS_AS(generate_samples(default_profiles().front(), 0, 1), ConfigError);
    CHECK(profile_from_json(to_json(default_profiles()[1])).lambda == default_profiles()[1].lambda);
    CHECK_THROWS_AS(default_profile({"nowhere", "none"}), NotFoundError);
}

TEST_CASE("pipeline agrees with the oracle on every variety") {
    for (const auto& p : default_profiles()) {
        const auto r = run_pipeline(shipped(), base_config(p));
        CHECK(r.oracle_mismatches == 0);
        CHECK(r.grade_mismatches == 0);
        std::size_t total = 0;
        for (const auto& [_, n] : r.histogram) total += n;
        CHECK(total == r.n_samples);
        CHECK(r.mean_layers_evaluated < static_cast<double>(r.layer_count));
        CHECK(r.traces.size() == r.n_samples);
    }
}

TEST_CASE("zero per-layer cost leaves the base cost share") {
    const auto& p = default_profiles().front();
    SimulationConfig c = base_config(p, 300);
    c.cost.per_layer_cost = 0.0;
    const auto r = run_pipeline(shipped(), c);
    const double p_market = shipped().lookup(p.lambda).econ.p_market;
    CHECK(r.mean_total_cost == doctest::Approx(c.cost.base_cost));
    CHECK(r.tti.fc == doctest::Approx(c.cost.base_cost / p_market).epsilon(1e-12));
}

TEST_CASE("total cost grows with the per-layer cost") {
    const auto& p = default_profiles()[1];
    double last = -1.0;
    for (double per : {0.0, 0.001, 0.005, 0.01}) {
        SimulationConfig c = base_config(p, 300);
        c.cost.per_layer_cost = per;
        const double tc = run_pipeline(shipped(), c).mean_total_cost;
        CHECK(tc > last);
        last = tc;
    }
}

TEST_CASE("early exits save cost and never slow the line") {
    for (const auto& p : default_profiles()) {
        SimulationConfig c = base_config(p, 800);
        const auto with = run_pipeline(shipped(), c);
        c.early_exit = false;
        const auto without = run_pipeline(shipped(), c);
        CHECK(without.mean_layers_evaluated == static_cast<double>(without.layer_count));
        CHECK(with.mean_total_cost <= without.mean_total_cost);
        CHECK(with.throughput >= without.throughput);
        CHECK(with.tti.fe_raw >= without.tti.fe_raw);
    }
}

TEST_CASE("a short ttl purges records and costs money") {
    const auto& p = default_profiles().front();
    const Repository repo = with_ttl(shipped(), p.lambda, Duration{300});
    SimulationConfig c = base_config(p, 500);
    c.clock.arrival_interval = Duration{50};
    const auto r = run_pipeline(repo, c);
    CHECK(r.purged > 0);
    CHECK(r.histogram.at(std::string(kExpired)) == r.purged);
    CHECK(r.fraction_invalid == doctest::Approx(double(r.purged) / 500.0));
    const double eta = repo.lookup(p.lambda).econ.eta_cost;
    CHECK(r.delta_c == doctest::Approx(-eta * double(r.purged) / 500.0).epsilon(1e-12));
    CHECK(r.delta_c < 0.0);

    const auto ok = run_pipeline(shipped(), base_config(p, 500));
    CHECK(ok.purged == 0);
    CHECK(ok.delta_c == 0.0);
}

TEST_CASE("a small buffer applies backpressure") {
    const auto& p = default_profiles().front();
    SimulationConfig c = base_config(p, 300);
    c.clock.arrival_interval = Duration{10};
    c.clock.buffer_capacity = 4;
    c.clock.drain_batch = 2;
    const auto r = run_pipeline(shipped(), c);
    CHECK(r.backpressure_events > 0);
    CHECK(r.graded + r.purged == 300);
}

TEST_CASE("reports are byte-identical across runs") {
    const auto& p = default_profiles()[2];
    const auto a = to_json(run_pipeline(shipped(), base_config(p, 500))).dump(2);
    const auto b = to_json(run_pipeline(shipped(), base_config(p, 500))).dump(2);
    CHECK(a == b);
    std::ostringstream ta, tb;
    write_trace_csv(ta, run_pipeline(shipped(), base_config(p, 100)));
    write_trace_csv(tb, run_pipeline(shipped(), base_config(p, 100)));
    CHECK(ta.str() == tb.str());
    CHECK(ta.str().rfind("sample_id,", 0) == 0);
}

TEST_CASE("bad configurations") {
    const auto& p = default_profiles().front();
    SimulationConfig c = base_config(p, 10);
    c.clock.drain_batch = 0;
    CHECK_THROWS_AS(run_pipeline(shipped(), c), ConfigError);
    c = base_config(p, 10);
    c.need.clear();
    CHECK_THROWS_AS(run_pipeline(shipped(), c), ConfigError);
    c = base_config(p, 10);
    CascadeConfig unsound = CascadeConfig::sound(shipped().lookup(p.lambda));
    unsound.tau_reject[0] = 0.99;
    c.cascade = unsound;
    CHECK_THROWS_AS(run_pipeline(shipped(), c), ConfigError);
    c = base_config(p, 10);
    c.profile.lambda = {"nowhere", "none"};
    CHECK_THROWS_AS(run_pipeline(shipped(), c), NotFoundError);
}

TEST_CASE("shipped scenarios load and run") {
    for (const char* name : {"korla-pear", "clementine", "cherry-tomato"}) {
        Scenario s = load_scenario(data_path(std::string("scenarios/") + name + ".json"));
        CHECK(s.config.n == 2000);
        CHECK(s.config.seed == 7);
        CHECK(s.config.need.size() == 5);
        s.config.n = 200;
        const auto r = run_pipeline(s.repo, s.config);
        CHECK(r.oracle_mismatches == 0);
        CHECK(r.tti.tti > 0.0);
    }
}
