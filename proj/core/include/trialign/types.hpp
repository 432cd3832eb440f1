#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <functional>
#include <string>

namespace trialign {

// Virtual and wall time share one representation: milliseconds since the
// unix epoch. The simulator drives it explicitly; nothing reads the system clock.
using Duration = std::chrono::milliseconds;
using Timestamp = std::chrono::sys_time<Duration>;

inline Timestamp timestamp_from_ms(std::int64_t ms) { return Timestamp{Duration{ms}}; }
inline std::int64_t to_unix_ms(Timestamp t) { return t.time_since_epoch().count(); }

inline Duration hours(double h) {
    return Duration{static_cast<std::int64_t>(h * 3'600'000.0)};
}
inline double to_hours(Duration d) { return static_cast<double>(d.count()) / 3'600'000.0; }
inline double to_minutes(Duration d) { return static_cast<double>(d.count()) / 60'000.0; }

// Origin-variety identifier, the key of every dictionary entry.
struct VarietyId {
    std::string origin;
    std::string variety;

    bool empty() const { return origin.empty() || variety.empty(); }
    std::string str() const { return origin + "/" + variety; }

    friend auto operator<=>(const VarietyId&, const VarietyId&) = default;
    friend bool operator==(const VarietyId&, const VarietyId&) = default;
};

// Parses "origin/variety".
VarietyId parse_variety_id(const std::string& text);

}  // namespace trialign

template <>
struct std::hash<trialign::VarietyId> {
    std::size_t operator()(const trialign::VarietyId& id) const noexcept {
        const std::size_t a = std::hash<std::string>{}(id.origin);
        const std::size_t b = std::hash<std::string>{}(id.variety);
        return a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    }
};
