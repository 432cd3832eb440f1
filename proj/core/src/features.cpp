#include "trialign/features.hpp"

#include <algorithm>

#include "trialign/errors.hpp"

namespace trialign {

using nlohmann::json;

void check_sample(const FruitSample& s) {
    auto fraction = [&](double v, const char* name) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw InvariantError("sample " + s.id + ": " + name + " must lie in [0, 1]");
        }
    };
    auto nonneg = [&](double v, const char* name) {
        if (!(v >= 0.0)) throw InvariantError("sample " + s.id + ": " + name + " must be nonnegative");
    };
    fraction(s.stem_integrity, "stem_integrity");
    fraction(s.color_uniformity, "color_uniformity");
    fraction(s.firmness, "firmness");
    nonneg(s.weight_g, "weight");
    nonneg(s.diameter_mm, "diameter");
    nonneg(s.scar_area_cm2, "scar_area");
}

std::optional<double> sample_attribute(const FruitSample& s, std::string_view name) {
    if (name == "weight") return s.weight_g;
    if (name == "diameter") return s.diameter_mm;
    if (name == "scar_area") return s.scar_area_cm2;
    if (name == "stem_integrity") return s.stem_integrity;
    if (name == "color_uniformity") return s.color_uniformity;
    if (name == "firmness") return s.firmness;
    return std::nullopt;
}

void attach_default_observations(FruitSample& s) {
    s.plane_observations[Plane::top] = {{"stem_integrity", s.stem_integrity}};
    s.plane_observations[Plane::side] = {{"scar_area", s.scar_area_cm2},
                                         {"color_uniformity", s.color_uniformity}};
    s.plane_observations[Plane::bottom] = {{"firmness", s.firmness}};
}

json to_json(const FruitSample& s) {
    json planes = json::object();
    for (const auto& [plane, obs] : s.plane_observations) {
        json arr = json::array();
        for (const auto& o : obs) arr.push_back(json{{"key", o.key}, {"value", o.value}});
        planes[std::string(to_string(plane))] = std::move(arr);
    }
    return json{{"id", s.id},
                {"origin", s.lambda.origin},
                {"variety", s.lambda.variety},
                {"weight_g", s.weight_g},
                {"diameter_mm", s.diameter_mm},
                {"scar_area_cm2", s.scar_area_cm2},
                {"stem_integrity", s.stem_integrity},
                {"color_uniformity", s.color_uniformity},
                {"firmness", s.firmness},
                {"planes", std::move(planes)},
                {"t_collect_ms", to_unix_ms(s.t_collect)}};
}

FruitSample sample_from_json(const json& j) {
    if (!j.is_object()) throw SchemaError("sample: expected an object");
    auto num = [&](const char* key, double fallback) {
        const auto it = j.find(key);
        if (it == j.end()) return fallback;
        if (!it->is_number()) throw SchemaError(std::string("sample.") + key + ": expected a number");
        return it->get<double>();
    };
    auto str = [&](const char* key) {
        const auto it = j.find(key);
        if (it == j.end() || !it->is_string()) {
            throw SchemaError(std::string("sample: missing required field '") + key + "'");
        }
        return it->get<std::string>();
    };
    FruitSample s;
    s.id = str("id");
    s.lambda = VarietyId{str("origin"), str("variety")};
    s.weight_g = num("weight_g", 0.0);
    s.diameter_mm = num("diameter_mm", 0.0);
    s.scar_area_cm2 = num("scar_area_cm2", 0.0);
    s.stem_integrity = num("stem_integrity", 0.0);
    s.color_uniformity = num("color_uniformity", 0.0);
    s.firmness = num("firmness", 0.0);
    s.t_collect = timestamp_from_ms(static_cast<std::int64_t>(num("t_collect_ms", 0.0)));
    if (const auto it = j.find("planes"); it != j.end()) {
        if (!it->is_object()) throw SchemaError("sample.planes: expected an object");
        for (const auto& [plane, arr] : it->items()) {
            if (!arr.is_array()) throw SchemaError("sample.planes." + plane + ": expected an array");
            auto& obs = s.plane_observations[plane_from_string(plane)];
            for (const auto& o : arr) {
                if (!o.is_object() || !o.contains("key") || !o.contains("value") || !o["key"].is_string() ||
                    !o["value"].is_number()) {
                    throw SchemaError("sample.planes." + plane + ": observations need key and value");
                }
                obs.push_back(Observation{o["key"].get<std::string>(), o["value"].get<double>()});
            }
        }
    } else {
        attach_default_observations(s);
    }
    check_sample(s);
    return s;
}

double SyntheticExtractor::extract(const FruitSample& sample, const FeatureSpec& spec) const {
    double raw = 0.0;
    if (spec.plane == Plane::general) {
        const auto v = sample_attribute(sample, spec.source);
        if (!v) throw ExtractionError(spec.id, "sample has no attribute '" + spec.source + "'");
        raw = *v;
    } else {
        const auto plane = sample.plane_observations.find(spec.plane);
        if (plane == sample.plane_observations.end()) {
            throw ExtractionError(spec.id, "no " + std::string(to_string(spec.plane)) + " plane observation");
        }
        const auto& obs = plane->second;
        const auto it = std::find_if(obs.begin(), obs.end(),
                                     [&](const Observation& o) { return o.key == spec.source; });
        if (it == obs.end()) {
            throw ExtractionError(spec.id, "no '" + spec.source + "' observation on the " +
                                               std::string(to_string(spec.plane)) + " plane");
        }
        raw = it->value;
    }
    return std::clamp(raw, spec.f_min, spec.f_max);
}

void ExtractorRegistry::add(std::shared_ptr<const Extractor> extractor) {
    std::string key(extractor->name());
    extractors_[std::move(key)] = std::move(extractor);
}

const Extractor& ExtractorRegistry::get(std::string_view name) const {
    const auto it = extractors_.find(name);
    if (it == extractors_.end()) throw NotFoundError("no extractor named '" + std::string(name) + "'");
    return *it->second;
}

std::vector<std::string> ExtractorRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : extractors_) out.push_back(name);
    return out;
}

const ExtractorRegistry& ExtractorRegistry::builtin() {
    static const ExtractorRegistry registry = [] {
        ExtractorRegistry r;
        r.add(std::make_shared<SyntheticExtractor>());
        return r;
    }();
    return registry;
}

SeparatedFeatures separate(const FruitSample& sample, const RgidEntry& entry, const Extractor& extractor) {
    SeparatedFeatures out;
    for (std::size_t k = 0; k < entry.phi.size(); ++k) {
        const auto& spec = entry.phi[k];
        FeatureSlice& slice = spec.plane == Plane::general ? out.general : out.specific;
        slice.indices.push_back(k);
        slice.values.push_back(extractor.extract(sample, spec));
    }
    return out;
}

SurfaceFeatures decompose_surfaces(const FeatureSlice& specific, const RgidEntry& entry) {
    SurfaceFeatures out;
    for (std::size_t i = 0; i < specific.size(); ++i) {
        const std::size_t k = specific.indices[i];
        FeatureSlice* target = nullptr;
        switch (entry.phi.at(k).plane) {
            case Plane::top: target = &out.top; break;
            case Plane::side: target = &out.side; break;
            case Plane::bottom: target = &out.bottom; break;
            case Plane::general: continue;
        }
        target->indices.push_back(k);
        target->values.push_back(specific.values[i]);
    }
    return out;
}

FeatureVector fuse(const FeatureSlice& general, const SurfaceFeatures& surfaces, const RgidEntry& entry) {
    const std::size_t n = entry.phi.size();
    FeatureVector out;
    out.values.assign(n, 0.0);
    out.provenance.assign(n, Plane::general);
    std::vector<bool> seen(n, false);

    auto place = [&](const FeatureSlice& slice) {
        for (std::size_t i = 0; i < slice.size(); ++i) {
            const std::size_t k = slice.indices[i];
            if (k >= n) throw CoverageError("feature index " + std::to_string(k) + " out of range");
            if (seen[k]) throw CoverageError("feature '" + entry.phi[k].id + "' supplied twice");
            seen[k] = true;
            out.values[k] = slice.values[i];
            out.provenance[k] = entry.phi[k].plane;
        }
    };
    place(general);
    place(surfaces.top);
    place(surfaces.side);
    place(surfaces.bottom);
    for (std::size_t k = 0; k < n; ++k) {
        if (!seen[k]) throw CoverageError("feature '" + entry.phi[k].id + "' missing");
    }
    return out;
}

FeatureVector extract_features(const FruitSample& sample, const RgidEntry& entry, const Extractor& extractor) {
    const auto parts = separate(sample, entry, extractor);
    return fuse(parts.general, decompose_surfaces(parts.specific, entry), entry);
}

std::vector<double> normalized(const FeatureVector& vec, const RgidEntry& entry) {
    std::vector<double> out(vec.size());
    for (std::size_t k = 0; k < vec.size(); ++k) out[k] = entry.phi.at(k).normalize(vec.values[k]);
    return out;
}

double composite_score(const std::vector<double>& norm, const std::vector<double>& omega) {
    double s = 0.0;
    for (std::size_t k = 0; k < norm.size() && k < omega.size(); ++k) s += omega[k] * norm[k];
    return s;
}

double composite_score(const FeatureVector& vec, const RgidEntry& entry) {
    return composite_score(normalized(vec, entry), entry.omega);
}

}  // namespace trialign
