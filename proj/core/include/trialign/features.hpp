#pragma once

// Feature separation (general vs specific stream), decomposition of the
// specific stream into top/side/bottom planes, and fusion back into one
// vector aligned to the entry's feature list.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trialign/rgid.hpp"
#include "trialign/types.hpp"

namespace trialign {

// One structured measurement taken from a camera plane, e.g. {"scar_area", 0.4}.
struct Observation {
    std::string key;
    double value = 0.0;

    friend bool operator==(const Observation&, const Observation&) = default;
};

struct FruitSample {
    std::string id;
    VarietyId lambda;
    double weight_g = 0.0;
    double diameter_mm = 0.0;
    double scar_area_cm2 = 0.0;
    double stem_integrity = 0.0;    // fraction
    double color_uniformity = 0.0;  // fraction
    double firmness = 0.0;          // fraction
    std::map<Plane, std::vector<Observation>> plane_observations;
    Timestamp t_collect{};

    friend bool operator==(const FruitSample&, const FruitSample&) = default;
};

// Throws InvariantError if a fraction leaves [0, 1] or a physical quantity is negative.
void check_sample(const FruitSample& sample);

// Named scalar attribute of a sample: weight, diameter, scar_area,
// stem_integrity, color_uniformity, firmness.
std::optional<double> sample_attribute(const FruitSample& sample, std::string_view name);

// Populates plane observations from the scalar attributes the way the
// synthetic capture rig reports them: stem on top, scar and colour on the
// side, firmness (ripeness) on the bottom.
void attach_default_observations(FruitSample& sample);

nlohmann::json to_json(const FruitSample& sample);
FruitSample sample_from_json(const nlohmann::json& doc);

class Extractor {
public:
    virtual ~Extractor() = default;
    // Value of one feature in the feature's own units, within [f_min, f_max].
    // Throws ExtractionError when the sample lacks what the feature needs.
    virtual double extract(const FruitSample& sample, const FeatureSpec& spec) const = 0;
    virtual std::string_view name() const = 0;
};

// Reads general-plane features from the sample's scalar attributes and every
// other plane from the matching plane observation, then clamps to the
// feature's range. Stateless.
class SyntheticExtractor final : public Extractor {
public:
    double extract(const FruitSample& sample, const FeatureSpec& spec) const override;
    std::string_view name() const override { return "synthetic"; }
};

class ExtractorRegistry {
public:
    void add(std::shared_ptr<const Extractor> extractor);
    // Throws NotFoundError.
    const Extractor& get(std::string_view name) const;
    std::vector<std::string> names() const;

    // Registry holding the synthetic extractor.
    static const ExtractorRegistry& builtin();

private:
    std::map<std::string, std::shared_ptr<const Extractor>, std::less<>> extractors_;
};

// Feature values for a subset of the entry's features, in feature order.
struct FeatureSlice {
    std::vector<std::size_t> indices;
    std::vector<double> values;

    std::size_t size() const { return indices.size(); }
    bool empty() const { return indices.empty(); }
};

struct SeparatedFeatures {
    FeatureSlice general;
    FeatureSlice specific;
};

struct SurfaceFeatures {
    FeatureSlice top;
    FeatureSlice side;
    FeatureSlice bottom;
};

struct FeatureVector {
    std::vector<double> values;     // aligned to entry.phi
    std::vector<Plane> provenance;

    std::size_t size() const { return values.size(); }
};

SeparatedFeatures separate(const FruitSample& sample, const RgidEntry& entry, const Extractor& extractor);
SurfaceFeatures decompose_surfaces(const FeatureSlice& specific, const RgidEntry& entry);
// Throws CoverageError unless the slices cover every feature exactly once.
FeatureVector fuse(const FeatureSlice& general, const SurfaceFeatures& surfaces, const RgidEntry& entry);

// separate -> decompose_surfaces -> fuse.
FeatureVector extract_features(const FruitSample& sample, const RgidEntry& entry, const Extractor& extractor);

// Per-feature values on the [0, 1] quality scale.
std::vector<double> normalized(const FeatureVector& vec, const RgidEntry& entry);
// dot(omega, normalized values), in feature order.
double composite_score(const FeatureVector& vec, const RgidEntry& entry);
double composite_score(const std::vector<double>& normalized_values, const std::vector<double>& omega);

}  // namespace trialign
