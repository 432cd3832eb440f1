#include "trialign/lifecycle.hpp"

#include "trialign/errors.hpp"

namespace trialign {

using nlohmann::json;

DataRecord make_record(FruitSample sample, const RgidEntry& entry) {
    DataRecord r;
    r.lambda = sample.lambda;
    r.t_collect = sample.t_collect;
    r.ttl = entry.decay.ttl;
    r.payload = std::move(sample);
    return r;
}

json to_json(const PurgeReport& r) {
    return json{{"t_now_ms", to_unix_ms(r.t_now)},
                {"purged_ids", r.purged_ids},
                {"purged", r.purged_ids.size()},
                {"remaining", r.remaining},
                {"fraction_invalid", r.fraction_invalid}};
}

void AuditLog::append(const PurgeReport& report) {
    std::lock_guard lock(mu_);
    *out_ << to_json(report).dump() << '\n';
}

Buffer::Buffer(std::size_t capacity, AuditLog* audit) : capacity_(capacity), audit_(audit) {
    if (capacity == 0) throw DomainError("buffer capacity must be positive");
}

IngestReceipt Buffer::ingest(DataRecord record) {
    std::lock_guard lock(mu_);
    if (records_.size() >= capacity_) return IngestReceipt::backpressure;
    records_.push_back(std::move(record));
    ++counters_.ingested;
    return IngestReceipt::accepted;
}

void Buffer::check_clock(Timestamp t_now) const {
    if (t_now < last_now_) throw ClockError("clock regressed below an earlier sweep or drain time");
    for (const auto& r : records_) {
        if (t_now < r.t_collect) {
            throw ClockError("t_now precedes the collection time of record " + r.payload.id);
        }
    }
}

PurgeReport Buffer::sweep(Timestamp t_now) {
    PurgeReport report;
    report.t_now = t_now;
    {
        std::lock_guard lock(mu_);
        check_clock(t_now);
        last_now_ = t_now;
        std::deque<DataRecord> kept;
        for (auto& r : records_) {
            if (r.valid_at(t_now)) {
                kept.push_back(std::move(r));
            } else {
                report.purged_ids.push_back(r.payload.id);
            }
        }
        records_ = std::move(kept);
        counters_.purged += report.purged_ids.size();
        report.remaining = records_.size();
    }
    const std::size_t considered = report.purged_ids.size() + report.remaining;
    report.fraction_invalid =
        considered == 0 ? 0.0 : static_cast<double>(report.purged_ids.size()) / static_cast<double>(considered);
    if (audit_ != nullptr) audit_->append(report);
    return report;
}

DrainResult Buffer::drain(std::size_t max_batch, Timestamp t_now) {
    DrainResult out;
    std::size_t remaining = 0;
    {
        std::lock_guard lock(mu_);
        check_clock(t_now);
        last_now_ = t_now;
        while (!records_.empty() && out.batch.size() < max_batch) {
            DataRecord r = std::move(records_.front());
            records_.pop_front();
            if (r.valid_at(t_now)) {
                out.batch.push_back(std::move(r));
                ++counters_.drained;
            } else {
                out.purged_ids.push_back(r.payload.id);
                ++counters_.purged;
            }
        }
        remaining = records_.size();
    }
    if (audit_ != nullptr && !out.purged_ids.empty()) {
        PurgeReport report;
        report.t_now = t_now;
        report.purged_ids = out.purged_ids;
        report.remaining = remaining;
        const std::size_t considered = out.purged_ids.size() + out.batch.size();
        report.fraction_invalid =
            static_cast<double>(out.purged_ids.size()) / static_cast<double>(considered);
        audit_->append(report);
    }
    return out;
}

std::size_t Buffer::size() const {
    std::lock_guard lock(mu_);
    return records_.size();
}

BufferCounters Buffer::counters() const {
    std::lock_guard lock(mu_);
    return counters_;
}

double cost_delta(std::uint64_t invalid_count, std::uint64_t total, double eta_cost) {
    if (total == 0) throw DomainError("cost delta: N must be positive");
    if (invalid_count > total) throw DomainError("cost delta: invalid count exceeds N");
    if (!(eta_cost >= 0.0)) throw DomainError("cost delta: eta_cost must be nonnegative");
    if (invalid_count == 0) return 0.0;
    return -eta_cost * static_cast<double>(invalid_count) / static_cast<double>(total);
}

}  // namespace trialign
