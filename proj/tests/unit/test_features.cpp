#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "trialign/errors.hpp"
#include "trialign/features.hpp"

using namespace trialign;

namespace {

RgidEntry planes_entry(std::vector<Plane> planes) {
    static const std::map<Plane, std::pair<std::string, double>> sources = {
        {Plane::general, {"weight", 200.0}},
        {Plane::top, {"stem_integrity", 1.0}},
        {Plane::side, {"scar_area", 2.0}},
        {Plane::bottom, {"firmness", 1.0}},
    };
    std::vector<double> omega(planes.size(), 1.0 / static_cast<double>(planes.size()));
    RgidEntry e = trialign::testing::make_entry(omega, {{0.5, "A"}}, 0.5);
    e.phi.clear();
    int side = 0;
    for (std::size_t k = 0; k < planes.size(); ++k) {
        FeatureSpec f;
        f.plane = planes[k];
        f.source = sources.at(planes[k]).first;
        f.f_max = sources.at(planes[k]).second;
        if (planes[k] == Plane::side && side++ > 0) {
            f.source = "color_uniformity";
            f.f_max = 1.0;
        }
        f.id = "p" + std::to_string(k);
        e.phi.push_back(f);
    }
    return e;
}

FruitSample pear(double weight, double scar) {
    FruitSample s;
    s.id = "pear";
    s.lambda = {"xinjiang", "korla-pear"};
    s.weight_g = weight;
    s.diameter_mm = 70;
    s.scar_area_cm2 = scar;
    s.stem_integrity = 1.0;
    s.color_uniformity = 0.8;
    s.firmness = 0.7;
    attach_default_observations(s);
    return s;
}

}  // namespace

TEST_CASE("separate partitions by plane") {
    const RgidEntry e = planes_entry({Plane::general, Plane::top, Plane::side});
    const SeparatedFeatures s = separate(pear(130, 0.4), e, SyntheticExtractor{});
    CHECK(s.general.size() == 1);
    CHECK(s.specific.size() == 2);
    CHECK(s.general.indices == std::vector<std::size_t>{0});
    CHECK(s.specific.indices == std::vector<std::size_t>{1, 2});
}

TEST_CASE("weight 130 g on a 200 g scale normalizes to 0.65") {
    const RgidEntry e = planes_entry({Plane::general});
    const SeparatedFeatures s = separate(pear(130, 0), e, SyntheticExtractor{});
    REQUIRE(s.general.size() == 1);
    CHECK(s.general.values[0] == 130.0);
    CHECK(e.phi[0].normalize(s.general.values[0]) == doctest::Approx(0.65).epsilon(1e-15));
}

TEST_CASE("missing plane observation is an extraction error naming the feature") {
    const RgidEntry e = planes_entry({Plane::general, Plane::top});
    FruitSample s = pear(130, 0);
    s.plane_observations.erase(Plane::top);
    try {
        separate(s, e, SyntheticExtractor{});
        FAIL("expected an extraction error");
    } catch (const ExtractionError& err) {
        CHECK(err.feature_id() == "p1");
    }
}

TEST_CASE("decompose_surfaces partitions the specific slice") {
    const RgidEntry e = planes_entry({Plane::top, Plane::side, Plane::side});
    const SeparatedFeatures s = separate(pear(130, 0.4), e, SyntheticExtractor{});
    const SurfaceFeatures surf = decompose_surfaces(s.specific, e);
    CHECK(surf.top.size() == 1);
    CHECK(surf.side.size() == 2);
    CHECK(surf.bottom.size() == 0);

    const SurfaceFeatures none = decompose_surfaces(FeatureSlice{}, e);
    CHECK(none.top.empty());
    CHECK(none.side.empty());
    CHECK(none.bottom.empty());
}

TEST_CASE("pear entry puts stem on top, scar on the side and ripeness on the bottom") {
    const RgidEntry e = planes_entry({Plane::general, Plane::top, Plane::side, Plane::bottom});
    const SeparatedFeatures s = separate(pear(130, 0.4), e, SyntheticExtractor{});
    const SurfaceFeatures surf = decompose_surfaces(s.specific, e);
    CHECK(surf.top.size() == 1);
    CHECK(surf.side.size() == 1);
    CHECK(surf.bottom.size() == 1);
    CHECK(e.phi[surf.top.indices[0]].source == "stem_integrity");
    CHECK(e.phi[surf.side.indices[0]].source == "scar_area");
    CHECK(e.phi[surf.bottom.indices[0]].source == "firmness");

    const FeatureVector v = fuse(s.general, surf, e);
    CHECK(v.size() == 4);
    CHECK(v.values == std::vector<double>{130.0, 1.0, 0.4, 0.7});
    CHECK(v.provenance == std::vector<Plane>{Plane::general, Plane::top, Plane::side, Plane::bottom});
}

TEST_CASE("fuse rejects duplicate and missing coverage") {
    const RgidEntry e = planes_entry({Plane::general, Plane::top, Plane::side});
    const SeparatedFeatures s = separate(pear(130, 0.4), e, SyntheticExtractor{});
    SurfaceFeatures surf = decompose_surfaces(s.specific, e);
    SurfaceFeatures missing = surf;
    missing.side = FeatureSlice{};
    CHECK_THROWS_AS(fuse(s.general, missing, e), CoverageError);
    SurfaceFeatures dup = surf;
    dup.bottom = surf.top;
    CHECK_THROWS_AS(fuse(s.general, dup, e), CoverageError);
}

TEST_CASE("composite score") {
    CHECK(composite_score({1.0, 0.5, 0.0}, {0.5, 0.3, 0.2}) == doctest::Approx(0.65).epsilon(1e-15));
    const RgidEntry e = trialign::testing::cascade_entry();
    const FeatureVector top = extract_features(trialign::testing::fraction_sample("s", 1, 1, 1), e, SyntheticExtractor{});
    CHECK(composite_score(top, e) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("pipeline reconstructs every feature once and keeps scores bounded") {
    const RgidEntry e = planes_entry({Plane::side, Plane::general, Plane::bottom, Plane::top, Plane::side});
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> frac(0.0, 1.0);
    std::uniform_real_distribution<double> grams(0.0, 300.0);
    std::uniform_real_distribution<double> scar(0.0, 3.0);
    for (int i = 0; i < 500; ++i) {
        FruitSample s = pear(grams(rng), scar(rng));
        s.stem_integrity = frac(rng);
        s.color_uniformity = frac(rng);
        s.firmness = frac(rng);
        attach_default_observations(s);
        const SeparatedFeatures sep = separate(s, e, SyntheticExtractor{});
        const SurfaceFeatures surf = decompose_surfaces(sep.specific, e);
        std::vector<std::size_t> seen = sep.general.indices;
        for (const auto* sl : {&surf.top, &surf.side, &surf.bottom}) seen.insert(seen.end(), sl->indices.begin(), sl->indices.end());
        std::sort(seen.begin(), seen.end());
        CHECK(seen == std::vector<std::size_t>{0, 1, 2, 3, 4});
        const FeatureVector v = fuse(sep.general, surf, e);
        for (std::size_t k = 0; k < v.size(); ++k) {
            CHECK(v.values[k] >= e.phi[k].f_min);
            CHECK(v.values[k] <= e.phi[k].f_max);
        }
        const double c = composite_score(v, e);
        CHECK(c >= 0.0);
        CHECK(c <= 1.0 + 1e-15);
    }
}

TEST_CASE("scoring directions") {
    FeatureSpec asc{"a", Plane::general, "weight", 50.0, 150.0, "g", false, Scoring::ascending, 0.0};
    CHECK(asc.normalize(100.0) == doctest::Approx(0.5));
    CHECK(asc.normalize(10.0) == 0.0);
    CHECK(asc.normalize(500.0) == 1.0);
    FeatureSpec desc = asc;
    desc.scoring = Scoring::descending;
    CHECK(desc.normalize(75.0) == doctest::Approx(0.75));
    FeatureSpec peak = asc;
    peak.scoring = Scoring::peaked;
    peak.target = 100.0;
    CHECK(peak.normalize(100.0) == 1.0);
    CHECK(peak.normalize(75.0) == doctest::Approx(0.5));
    CHECK(peak.normalize(150.0) == 0.0);
}

TEST_CASE("sample invariants and JSON") {
    FruitSample s = pear(130, 0.4);
    CHECK_NOTHROW(check_sample(s));
    s.firmness = 1.2;
    CHECK_THROWS_AS(check_sample(s), InvariantError);
    s.firmness = 0.7;
    s.weight_g = -1;
    CHECK_THROWS_AS(check_sample(s), InvariantError);

    const FruitSample p = pear(130, 0.4);
    CHECK(sample_from_json(to_json(p)) == p);
}

TEST_CASE("extractor registry") {
    const auto& reg = ExtractorRegistry::builtin();
    CHECK(reg.get("synthetic").name() == "synthetic");
    CHECK_THROWS_AS(reg.get("cnn"), NotFoundError);
}
