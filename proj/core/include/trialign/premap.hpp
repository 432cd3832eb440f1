#pragma once

// Pre-mapping: entropy-based selection of the features worth surfacing, a
// canonical binary credential protected by a SHA-256 digest, and the short
// QR text (product id and digest) that points at it.
//
// Byte layout: docs/credential-layout.md.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialign/cascade.hpp"
#include "trialign/features.hpp"
#include "trialign/rgid.hpp"

namespace trialign {

inline constexpr std::uint8_t kCredentialVersion = 1;
inline constexpr std::size_t kLevels = 16;
inline constexpr std::uint16_t kFullDepthExit = 0xFFFF;

using ProductId = std::array<std::uint8_t, 16>;
using Digest = std::array<std::uint8_t, 32>;
using Bytes = std::vector<std::uint8_t>;

// Level 0..15 of a value in feature units: 16 equal-width bins over
// [f_min, f_max], the top edge falling in the last bin.
std::uint8_t discretize(double value, const FeatureSpec& spec);

// Shannon entropy in bits of each feature's level histogram over the batch.
std::vector<double> feature_entropies(const std::vector<FeatureVector>& batch, const RgidEntry& entry);

// The k highest-entropy feature indices, ties in feature order. Throws
// DomainError on an empty batch, k == 0 or k above the feature count.
std::vector<std::size_t> select_features(const std::vector<FeatureVector>& batch, const RgidEntry& entry,
                                         std::size_t k);

struct FeatureCode {
    std::string feature_id;
    std::uint8_t level = 0;
    friend bool operator==(const FeatureCode&, const FeatureCode&) = default;
};

struct Credential {
    std::uint8_t version = kCredentialVersion;
    ProductId product_id{};
    VarietyId lambda;
    std::string grade;
    std::vector<FeatureCode> feature_codes;
    std::uint16_t exit_layer = 0;     // 0 screening, 1..L early exit, 0xFFFF full depth
    std::uint32_t cumulative = 0;     // score * 10000, rounded
    std::int64_t t_issue = 0;         // unix seconds
    Digest digest{};
    friend bool operator==(const Credential&, const Credential&) = default;
};

// First 16 bytes of SHA-256 over "trialign.product:<origin>/<variety>/<sample id>".
ProductId product_id_for(const FruitSample& sample);

// Every field before the digest, in layout order.
Bytes canonical_bytes(const Credential& credential);
Digest sha256(const std::uint8_t* data, std::size_t size);
Digest compute_digest(const Credential& credential);

struct EncodedCredential {
    Credential credential;
    Bytes payload;        // canonical bytes followed by the digest
    std::string qr_text;  // base64url, no padding, of product_id || digest
};

// Throws CredentialError when the trace is unresolved, a string exceeds
// 65535 bytes or more than 255 codes are requested.
EncodedCredential encode_credential(const DecisionTrace& trace, const FruitSample& sample, const RgidEntry& entry,
                                    const std::vector<std::size_t>& selected, std::int64_t t_issue,
                                    const Extractor& extractor);
// Payload bytes of an already built credential; the stored digest is ignored
// and recomputed.
Bytes encode_payload(const Credential& credential);
std::string qr_text(const Credential& credential);

// Checks the digest first, so any corruption reports DigestMismatchError;
// then the version (VersionError) and the layout (TruncationError).
Credential decode_credential(const Bytes& payload);

// True iff the QR product id matches the record and the digest recomputed
// from the record's fields equals the QR digest. Throws EncodingError for
// text that is not base64url of exactly 48 bytes.
bool verify(const std::string& qr_text, const Credential& record);

std::string base64url_encode(const std::uint8_t* data, std::size_t size);
Bytes base64url_decode(const std::string& text);
std::string to_hex(const std::uint8_t* data, std::size_t size);
Bytes from_hex(const std::string& text);

nlohmann::json to_json(const Credential& credential);
Credential credential_from_json(const nlohmann::json& doc);

}  // namespace trialign
