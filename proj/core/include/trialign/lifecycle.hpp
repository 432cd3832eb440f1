#pragma once

// Split computation and data shelf life: capture endpoints push records into
// a bounded buffer, compute units drain it asynchronously, and every record
// carries the biological validity period of its variety.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <mutex>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialign/features.hpp"
#include "trialign/rgid.hpp"
#include "trialign/types.hpp"

namespace trialign {

struct DataRecord {
    FruitSample payload;
    VarietyId lambda;
    Timestamp t_collect{};
    Duration ttl{};

    // Valid iff t_now - t_collect <= ttl.
    bool valid_at(Timestamp t_now) const { return t_now - t_collect <= ttl; }
};

// Record for a sample with the ttl of its dictionary entry.
DataRecord make_record(FruitSample sample, const RgidEntry& entry);

enum class IngestReceipt { accepted, backpressure };

struct BufferCounters {
    std::uint64_t ingested = 0;
    std::uint64_t drained = 0;
    std::uint64_t purged = 0;
};

struct PurgeReport {
    Timestamp t_now{};
    std::vector<std::string> purged_ids;
    std::size_t remaining = 0;
    double fraction_invalid = 0.0;  // purged / (purged + remaining)
};

struct DrainResult {
    std::vector<DataRecord> batch;
    std::vector<std::string> purged_ids;
};

nlohmann::json to_json(const PurgeReport& report);

// Appends purge reports to a stream as JSON lines. Not owned; must outlive
// the buffer it is attached to.
class AuditLog {
public:
    explicit AuditLog(std::ostream& out) : out_(&out) {}
    void append(const PurgeReport& report);

private:
    std::mutex mu_;
    std::ostream* out_;
};

// Bounded FIFO, safe for concurrent producers and consumers. Every public
// operation runs under one lock, so counters change atomically with the
// contents: ingested == drained + purged + size() at all times.
class Buffer {
public:
    explicit Buffer(std::size_t capacity, AuditLog* audit = nullptr);

    // Appends when there is room; a full buffer is left untouched.
    IngestReceipt ingest(DataRecord record);

    // Removes every record older than its ttl. Throws ClockError when t_now
    // precedes a stored collection time or an earlier sweep/drain time.
    PurgeReport sweep(Timestamp t_now);

    // Removes and returns up to max_batch valid records, oldest first.
    // Expired records met on the way are purged, never returned.
    DrainResult drain(std::size_t max_batch, Timestamp t_now);

    std::size_t size() const;
    std::size_t capacity() const { return capacity_; }
    BufferCounters counters() const;

private:
    void check_clock(Timestamp t_now) const;

    mutable std::mutex mu_;
    std::deque<DataRecord> records_;
    std::size_t capacity_;
    BufferCounters counters_;
    Timestamp last_now_{Timestamp::min()};
    AuditLog* audit_;
};

// Delta C = -eta_cost * invalid / N. Throws DomainError when N == 0,
// invalid > N or eta_cost < 0.
double cost_delta(std::uint64_t invalid_count, std::uint64_t total, double eta_cost);

}  // namespace trialign
