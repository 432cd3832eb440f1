#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "trialign/adapt.hpp"
#include "trialign/errors.hpp"
#include "trialign/simgen.hpp"

using namespace trialign;
using trialign::testing::fraction_sample;
using trialign::testing::make_entry;

namespace {

const SyntheticExtractor kSynthetic;
const VarietyId kBase{"test", "fruit"};
const VarietyId kNew{"test", "newfruit"};

// Three-feature repository whose entry carries 40 scalar parameters, so the
// adaptation budget is two.
Repository three_feature_repo(std::vector<double> omega) {
    const RgidEntry e = make_entry(std::move(omega), {{0.4, "B"}, {0.7, "A"}}, 0.4);
    EntryOverlay o;
    o.phi = e.phi;
    o.omega = e.omega;
    o.cuts = e.thresholds.cuts;
    o.tau_final = e.thresholds.tau_final;
    o.p_market = 1.0;
    o.eta_cost = 0.02;
    o.layer_weights = {{"Q", 1.0}, {"S", 0.8}, {"M", 0.6}};
    o.importance = {{"f0", 1.0}, {"f1", 0.5}, {"f2", 0.25}, {"origin", 0.5}};
    return Repository(o, {{"test", EntryOverlay{}}}, {{kBase, {"test", EntryOverlay{}}}});
}

std::vector<CalibrationSample> labelled(const RgidEntry& truth, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<CalibrationSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        auto s = fraction_sample("c" + std::to_string(i), u(rng), u(rng), u(rng));
        const double score = composite_score(normalized(extract_features(s, truth, kSynthetic), truth), truth.omega);
        out.push_back({s, truth.thresholds.decide(score)});
    }
    return out;
}

std::vector<std::vector<double>> features_of(const std::vector<CalibrationSample>& cal, const RgidEntry& e) {
    std::vector<std::vector<double>> x;
    for (const auto& c : cal) x.push_back(normalized(extract_features(c.sample, e, kSynthetic), e));
    return x;
}

std::vector<std::string> labels_of(const std::vector<CalibrationSample>& cal) {
    std::vector<std::string> y;
    for (const auto& c : cal) y.push_back(c.label);
    return y;
}

void check_only_top_layer_moved(const RgidEntry& base, const RgidEntry& out) {
    CHECK(out.phi == base.phi);
    CHECK(out.thresholds.tau_final == base.thresholds.tau_final);
    CHECK(out.update_rules == base.update_rules);
    CHECK(out.econ == base.econ);
    CHECK(out.decay == base.decay);
    CHECK(out.trust == base.trust);
    CHECK(out.category == base.category);
    CHECK(out.thresholds.cuts.size() == base.thresholds.cuts.size());
}

}  // namespace

TEST_CASE("fixture repository has a budget of two") {
    const Repository repo = three_feature_repo({0.4, 0.3, 0.3});
    CHECK(scalar_parameter_count(repo.lookup(kBase)) == 40);
}

TEST_CASE("consistent calibration changes nothing") {
    const Repository repo = three_feature_repo({0.4, 0.3, 0.3});
    const RgidEntry& base = repo.lookup(kBase);
    const auto cal = labelled(base, 20, 1);
    const auto r = adapt_entry_report(repo, kBase, kNew, cal, kSynthetic);
    CHECK(r.misgraded_before == 0);
    CHECK(r.changed == 0);
    CHECK(r.entry.lambda == kNew);
    CHECK(r.entry.omega == base.omega);
    CHECK(r.entry.thresholds == base.thresholds);
}

TEST_CASE("doubled importance shifts weight toward the feature") {
    const Repository repo = three_feature_repo({0.4, 0.3, 0.3});
    const RgidEntry& base = repo.lookup(kBase);
    RgidEntry truth = base;
    truth.omega = {0.4 / 1.3, 0.6 / 1.3, 0.3 / 1.3};
    const auto cal = labelled(truth, 400, 2);
    const auto r = adapt_entry_report(repo, kBase, kNew, cal, kSynthetic);
    CHECK(r.budget == 2);
    CHECK(r.changed <= r.budget);
    CHECK(r.misgraded_after < r.misgraded_before);
    CHECK(r.entry.omega[1] > base.omega[1]);
    check_only_top_layer_moved(base, r.entry);

    // Brute force over every omega reachable within the budget: two
    // coordinates moved by opposite multiples of the step, cuts fixed.
    const auto x = features_of(cal, base);
    const auto y = labels_of(cal);
    std::size_t best = misgraded(base, x, y);
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = 0; b < 3; ++b) {
            if (a == b) continue;
            for (int m = 1; m * kAdaptStep <= base.omega[b] + 1e-12; ++m) {
                RgidEntry c = base;
                c.omega[a] += m * kAdaptStep;
                c.omega[b] = std::max(c.omega[b] - m * kAdaptStep, 0.0);
                best = std::min(best, misgraded(c, x, y));
            }
        }
    }
    CHECK(r.misgraded_after <= best);
    CHECK(misgraded(r.entry, x, y) == r.misgraded_after);
}

TEST_CASE("budget holds on random calibrations of a shipped variety") {
    const Repository repo = load_dictionary_file(trialign::testing::data_path("dictionary.json"));
    const auto& p = default_profiles().front();
    const RgidEntry& base = repo.lookup(p.lambda);
    const std::size_t budget = scalar_parameter_count(base) / 20;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        std::vector<CalibrationSample> cal;
        for (const auto& ls : generate_samples(p, 150, seed)) {
            if (ls.label == "Reject" || base.thresholds.has_label(ls.label)) cal.push_back({ls.sample, ls.label});
        }
        const auto r = adapt_entry_report(repo, p.lambda, {"elsewhere", "korla-pear"}, cal, kSynthetic);
        CHECK(r.budget == budget);
        CHECK(r.changed <= r.budget);
        CHECK(changed_parameter_count(base, r.entry) == r.changed);
        CHECK(r.misgraded_after <= r.misgraded_before);
        CHECK(validate_entry(r.entry).empty());
        check_only_top_layer_moved(base, r.entry);
    }
}

TEST_CASE("adaptation errors") {
    const Repository repo = three_feature_repo({0.4, 0.3, 0.3});
    const auto cal = labelled(repo.lookup(kBase), 5, 3);
    CHECK_THROWS_AS(adapt_entry(repo, {"no", "where"}, kNew, cal, kSynthetic), NotFoundError);
    CHECK_THROWS_AS(adapt_entry(repo, kBase, kNew, {}, kSynthetic), InfeasibleError);
    auto bad = cal;
    bad[0].label = "Z";
    CHECK_THROWS_AS(adapt_entry(repo, kBase, kNew, bad, kSynthetic), InfeasibleError);
    const auto j = to_json(adapt_entry_report(repo, kBase, kNew, cal, kSynthetic));
    CHECK(j["changed"] == 0);
}
