#include <doctest.h>

#include <numeric>
#include <random>
#include <thread>

#include "fixtures.hpp"
#include "trialign/errors.hpp"
#include "trialign/feedback.hpp"

using namespace trialign;
using trialign::testing::cascade_entry;

namespace {

TrainingExample ex(std::vector<double> f, double y, double c = 1.0) { return TrainingExample{std::move(f), y, c}; }

std::vector<TrainingExample> random_batch(std::mt19937_64& rng, std::size_t n, std::size_t dims) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<TrainingExample> b;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> f(dims);
        for (double& v : f) v = u(rng);
        b.push_back(ex(f, u(rng), 0.1 + u(rng)));
    }
    return b;
}

std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t dims) {
    std::exponential_distribution<double> e(1.0);
    std::vector<double> t(dims);
    for (double& v : t) v = e(rng);
    const double s = std::accumulate(t.begin(), t.end(), 0.0);
    for (double& v : t) v /= s;
    return t;
}

void check_simplex(const std::vector<double>& t) {
    double s = 0.0;
    for (double v : t) {
        CHECK(v >= 0.0);
        s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
}

FeedbackEvent event(Behavior b, const std::string& ref, const std::string& grade, double view = 30.0) {
    FeedbackEvent e = FeedbackEvent::of(b, ref, grade);
    e.implicit.view_seconds = view;
    return e;
}

}  // namespace

TEST_CASE("behavior one-hot") {
    FeedbackEvent e = FeedbackEvent::of(Behavior::purchase, "s", "A");
    CHECK(e.kind() == Behavior::purchase);
    e.behavior = {1, 1, 0, 0, 0};
    CHECK_THROWS_AS(e.kind(), InvariantError);
    e.behavior = {0, 0, 0, 0, 0};
    CHECK_THROWS_AS(check_event(e), InvariantError);
    e.behavior = {0, 0, 2, 0, 0};
    CHECK_THROWS_AS(check_event(e), InvariantError);
    CHECK(behavior_from_string("return") == Behavior::ret);
    CHECK(to_string(Behavior::repurchase) == "repurchase");
}

TEST_CASE("event validation") {
    FeedbackEvent e = FeedbackEvent::of(Behavior::review, "s", "A");
    e.rating = 6.0;
    CHECK_THROWS_AS(check_event(e), InvariantError);
    e.rating = 1.0;
    CHECK_NOTHROW(check_event(e));
    e.implicit.view_seconds = -1.0;
    CHECK_THROWS_AS(check_event(e), InvariantError);
}

TEST_CASE("event json round trip") {
    FeedbackEvent e = event(Behavior::repurchase, "s1", "B", 12.5);
    e.rating = 4.0;
    e.implicit.repurchase_interval_days = 9.0;
    const auto back = event_from_json(to_json(e));
    CHECK(back.behavior == e.behavior);
    CHECK(back.rating == e.rating);
    CHECK(back.implicit.view_seconds == 12.5);
    CHECK(back.implicit.repurchase_interval_days == 9.0);
    CHECK(back.sample_ref == "s1");
    CHECK(back.grade_given == "B");
    const auto named = event_from_json(nlohmann::json{{"behavior", "scan"}, {"sample_ref", "x"}});
    CHECK(named.kind() == Behavior::scan);
}

TEST_CASE("store appends in order") {
    FeedbackStore store;
    record_feedback(store, FeedbackEvent::of(Behavior::purchase, "s0", "A"));
    CHECK(store.size() == 1);
    FeedbackEvent bad = FeedbackEvent::of(Behavior::purchase, "bad", "A");
    bad.behavior = {1, 1, 0, 0, 0};
    CHECK_THROWS_AS(record_feedback(store, bad), InvariantError);
    CHECK(store.size() == 1);
    for (int i = 1; i < 100; ++i) record_feedback(store, FeedbackEvent::of(Behavior::scan, "s" + std::to_string(i), "A"));
    const auto snap = store.snapshot();
    REQUIRE(snap.size() == 100);
    for (int i = 0; i < 100; ++i) CHECK(snap[i].sample_ref == "s" + std::to_string(i));
}

TEST_CASE("store accepts concurrent writers") {
    FeedbackStore store;
    std::vector<std::thread> ts;
    for (int t = 0; t < 4; ++t) {
        ts.emplace_back([&store] {
            for (int i = 0; i < 500; ++i) record_feedback(store, FeedbackEvent::of(Behavior::scan, "x", "A"));
        });
    }
    for (auto& t : ts) t.join();
    CHECK(store.size() == 2000);
}

TEST_CASE("grade scores, targets and confidences") {
    const RgidEntry e = cascade_entry();  // cuts B 0.4, A 0.7
    CHECK(grade_score(e, "A") == doctest::Approx(0.85));
    CHECK(grade_score(e, "B") == doctest::Approx(0.55));
    CHECK(grade_score(e, "Reject") == doctest::Approx(0.2));
    CHECK(grade_score_below(e, "A") == doctest::Approx(0.55));
    CHECK(grade_score_below(e, "B") == doctest::Approx(0.2));
    CHECK(grade_score_below(e, "Reject") == 0.0);

    CHECK(feedback_target(event(Behavior::purchase, "s", "A"), e) == doctest::Approx(0.85));
    CHECK(feedback_target(event(Behavior::ret, "s", "A"), e) == doctest::Approx(0.55));
    FeedbackEvent rated = event(Behavior::ret, "s", "A");
    rated.rating = 5.0;
    CHECK(feedback_target(rated, e) == 1.0);
    rated.rating = 2.0;
    CHECK(feedback_target(rated, e) == 0.25);

    CHECK(feedback_confidence(event(Behavior::purchase, "s", "A", 30.0)) == doctest::Approx(0.7));
    CHECK(feedback_confidence(event(Behavior::purchase, "s", "A", 0.0)) == doctest::Approx(0.35));
    CHECK(feedback_confidence(event(Behavior::scan, "s", "A", 15.0)) == doctest::Approx(0.15));
    CHECK(feedback_confidence(event(Behavior::ret, "s", "A", 300.0)) == doctest::Approx(1.0));
}

TEST_CASE("batch join") {
    const RgidEntry e = cascade_entry();
    const std::map<std::string, std::vector<double>> feats{{"s1", {1, 0, 0}}};
    const auto b = build_batch({event(Behavior::purchase, "s1", "A")}, feats, e);
    REQUIRE(b.size() == 1);
    CHECK(b[0].features == std::vector<double>{1, 0, 0});
    CHECK_THROWS_AS(build_batch({event(Behavior::purchase, "nope", "A")}, feats, e), JoinError);
}

TEST_CASE("loss hand values") {
    const std::vector<TrainingExample> one{ex({1.0, 0.0}, 0.6)};
    CHECK(loss({0.8, 0.2}, one) == doctest::Approx(0.04).epsilon(1e-12));
    const std::vector<TrainingExample> fit{ex({1.0, 0.0}, 0.8), ex({0.0, 1.0}, 0.2)};
    CHECK(loss({0.8, 0.2}, fit) == 0.0);
    CHECK(gradient({0.8, 0.2}, fit) == std::vector<double>{0.0, 0.0});
    const std::vector<TrainingExample> doubled{ex({1.0, 0.0}, 0.6, 2.0)};
    CHECK(loss({0.8, 0.2}, doubled) == doctest::Approx(0.08).epsilon(1e-12));
    CHECK_THROWS_AS(loss({0.8, 0.2}, {}), DomainError);
    CHECK_THROWS_AS(loss({0.8}, one), DomainError);
}

TEST_CASE("gradient hand value") {
    const auto g = gradient({0.8, 0.2}, {ex({1.0, 0.0}, 0.6)});
    CHECK(g[0] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(g[1] == 0.0);
}

TEST_CASE("gradient matches central differences") {
    std::mt19937_64 rng(31);
    const double h = 1e-6;
    for (int draw = 0; draw < 100; ++draw) {
        const std::size_t dims = 2 + draw % 5;
        const auto batch = random_batch(rng, 16, dims);
        const auto theta = random_simplex(rng, dims);
        const auto g = gradient(theta, batch);
        for (std::size_t k = 0; k < dims; ++k) {
            auto up = theta, down = theta;
            up[k] += h;
            down[k] -= h;
            const double fd = (loss(up, batch) - loss(down, batch)) / (2 * h);
            const double scale = std::max(std::abs(g[k]), 1e-3);
            CHECK(std::abs(fd - g[k]) / scale < 1e-6);
        }
    }
}

TEST_CASE("scalar raw step") {
    const auto t = raw_step({1.0}, {ex({1.0}, 0.0)}, 0.1);
    CHECK(t[0] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("update step fixed point and errors") {
    const std::vector<TrainingExample> fit{ex({1.0, 0.0}, 0.8), ex({0.0, 1.0}, 0.2)};
    CHECK(update_step({0.8, 0.2}, fit, 0.5) == std::vector<double>{0.8, 0.2});
    CHECK_THROWS_AS(update_step({0.8, 0.2}, fit, 0.0), DomainError);
}

TEST_CASE("simplex projection") {
    check_simplex(project_to_simplex({0.5, 0.5}));
    CHECK(project_to_simplex({2.0, 0.0}) == std::vector<double>{1.0, 0.0});
    const auto p = project_to_simplex({0.6, 0.6, -1.0});
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[2] == 0.0);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 2.0);
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> v(1 + i % 7);
        for (double& x : v) x = n(rng);
        const auto q = project_to_simplex(v);
        check_simplex(q);
        // Optimality: no simplex vertex is closer than the projection.
        double dq = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) dq += (v[k] - q[k]) * (v[k] - q[k]);
        for (std::size_t j = 0; j < v.size(); ++j) {
            double dv = 0.0;
            for (std::size_t k = 0; k < v.size(); ++k) {
                const double e = (k == j) ? 1.0 : 0.0;
                dv += (v[k] - e) * (v[k] - e);
            }
            CHECK(dq <= dv + 1e-12);
        }
    }
}

TEST_CASE("descent with a safe learning rate") {
    std::mt19937_64 rng(8);
    for (int draw = 0; draw < 20; ++draw) {
        const auto batch = random_batch(rng, 32, 4);
        auto theta = random_simplex(rng, 4);
        for (double eta : {safe_learning_rate(batch), 0.01}) {
            double last = loss(theta, batch);
            for (int step = 0; step < 100; ++step) {
                theta = update_step(theta, batch, eta);
                check_simplex(theta);
                const double now = loss(theta, batch);
                CHECK(now <= last + 1e-15);
                last = now;
            }
        }
    }
}

TEST_CASE("dictionary trigger raises an underweighted predictive feature") {
    const RgidEntry e = cascade_entry();  // omega (0.5, 0.3, 0.2)
    std::vector<FeedbackEvent> events;
    std::map<std::string, std::vector<double>> feats;
    for (int i = 0; i < 40; ++i) {
        const bool bought = i % 2 == 0;
        const double f0 = (i / 2) % 2;
        const std::string id = "s" + std::to_string(i);
        feats[id] = {f0, 0.5, bought ? 1.0 : 0.0};
        events.push_back(event(bought ? Behavior::purchase : Behavior::ret, id, "B"));
    }
    const auto deltas = optimization_triggers(events, feats, e);
    std::vector<ParameterDelta> dict;
    for (const auto& d : deltas) {
        if (d.level == TriggerLevel::dictionary) dict.push_back(d);
    }
    REQUIRE(dict.size() == 1);
    CHECK(dict[0].target == "omega[2]");
    CHECK(dict[0].delta > 0.0);
    CHECK(dict[0].justification == "dictionary.importance_underestimated");
    CHECK(dict[0].statistic == doctest::Approx(0.8));
    CHECK(optimization_triggers(events, feats, e) == deltas);
}

TEST_CASE("calibrated store without returns triggers nothing") {
    const RgidEntry e = cascade_entry();
    std::vector<FeedbackEvent> events;
    std::map<std::string, std::vector<double>> feats;
    for (int i = 0; i < 30; ++i) {
        const std::string id = "s" + std::to_string(i);
        feats[id] = {0.85, 0.85, 0.85};
        events.push_back(event(Behavior::purchase, id, "A"));
    }
    CHECK(optimization_triggers(events, feats, e).empty());
}

TEST_CASE("rule trigger on a grade returned ten times as often") {
    const RgidEntry e = cascade_entry();
    FeedbackStore store;
    std::map<std::string, std::vector<double>> feats;
    int n = 0;
    auto add = [&](Behavior b, const std::string& grade) {
        const std::string id = "s" + std::to_string(n++);
        feats[id] = grade == "A" ? std::vector<double>{0.85, 0.85, 0.85} : std::vector<double>{0.55, 0.55, 0.55};
        record_feedback(store, event(b, id, grade));
    };
    for (int i = 0; i < 10; ++i) add(i < 5 ? Behavior::ret : Behavior::purchase, "A");
    for (int i = 0; i < 20; ++i) add(i < 1 ? Behavior::ret : Behavior::purchase, "B");
    std::vector<ParameterDelta> rule;
    for (const auto& d : optimization_triggers(store, feats, e)) {
        if (d.level == TriggerLevel::rule) rule.push_back(d);
    }
    REQUIRE(rule.size() == 1);
    CHECK(rule[0].target == "thresholds.cuts[1].score");
    CHECK(rule[0].statistic == doctest::Approx(10.0));
    CHECK(rule[0].delta > 0.0);
}

TEST_CASE("model trigger on unexplained variance") {
    const RgidEntry e = cascade_entry();
    std::vector<FeedbackEvent> events;
    std::map<std::string, std::vector<double>> feats;
    for (int i = 0; i < 20; ++i) {
        const std::string id = "s" + std::to_string(i);
        feats[id] = {0.5, 0.5, 0.5};
        FeedbackEvent ev = event(Behavior::review, id, "A");
        ev.rating = (i % 2 == 0) ? 1.0 : 5.0;
        events.push_back(ev);
    }
    bool model = false;
    for (const auto& d : optimization_triggers(events, feats, e)) {
        if (d.level == TriggerLevel::model) {
            model = true;
            CHECK(d.target == "model.extractors");
        }
    }
    CHECK(model);
}
