#pragma once

#include <string>
#include <vector>

#include "trialign/features.hpp"
#include "trialign/rgid.hpp"

namespace trialign::testing {

// Features read straight from the sample's fraction attributes, so the
// normalized value of each equals the attribute.
inline const std::vector<std::string> kFractionSources = {"color_uniformity", "firmness", "stem_integrity"};

inline RgidEntry make_entry(std::vector<double> omega, std::vector<GradeCut> cuts, double tau_final,
                            std::vector<bool> screening = {}) {
    RgidEntry e;
    e.lambda = {"test", "fruit"};
    e.category = "test";
    for (std::size_t k = 0; k < omega.size(); ++k) {
        FeatureSpec f;
        f.id = "f" + std::to_string(k);
        f.plane = Plane::general;
        f.source = kFractionSources.at(k % kFractionSources.size());
        f.f_max = 1.0;
        f.screening = k < screening.size() && screening[k];
        e.phi.push_back(f);
    }
    e.omega = std::move(omega);
    e.thresholds.cuts = std::move(cuts);
    e.thresholds.tau_final = tau_final;
    e.trust.layer_weights = {{"Q", 1.0}, {"S", 0.8}};
    e.trust.importance = {{"f0", 1.0}, {"f1", 0.5}, {"f2", 0.25}};
    return e;
}

// The three-layer cascade fixture: omega (0.5, 0.3, 0.2), tau_final 0.7.
inline RgidEntry cascade_entry() {
    return make_entry({0.5, 0.3, 0.2}, {{0.4, "B"}, {0.7, "A"}}, 0.7);
}

inline FruitSample fraction_sample(const std::string& id, double f0, double f1, double f2) {
    FruitSample s;
    s.id = id;
    s.lambda = {"test", "fruit"};
    s.weight_g = 100.0;
    s.diameter_mm = 50.0;
    s.color_uniformity = f0;
    s.firmness = f1;
    s.stem_integrity = f2;
    attach_default_observations(s);
    return s;
}

inline std::string data_path(const std::string& rel) { return std::string(TRIALIGN_DATA_DIR) + "/" + rel; }
inline std::string standards_path(const std::string& rel) {
    return std::string(TRIALIGN_STANDARDS_DIR) + "/" + rel;
}

}  // namespace trialign::testing
