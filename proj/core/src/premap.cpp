#include "trialign/premap.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <openssl/evp.h>

#include "trialign/errors.hpp"

namespace trialign {

using nlohmann::json;

std::uint8_t discretize(double value, const FeatureSpec& spec) {
    const double span = spec.f_max - spec.f_min;
    if (!(span > 0.0)) return 0;
    const double scaled = (value - spec.f_min) / span * static_cast<double>(kLevels);
    if (!(scaled > 0.0)) return 0;
    return static_cast<std::uint8_t>(std::min<double>(std::floor(scaled), kLevels - 1));
}

std::vector<double> feature_entropies(const std::vector<FeatureVector>& batch, const RgidEntry& entry) {
    const std::size_t dims = entry.phi.size();
    std::vector<std::vector<std::size_t>> counts(dims, std::vector<std::size_t>(kLevels, 0));
    for (const auto& vec : batch) {
        if (vec.values.size() != dims) throw DomainError("feature vector does not match the entry's features");
        for (std::size_t k = 0; k < dims; ++k) ++counts[k][discretize(vec.values[k], entry.phi[k])];
    }
    std::vector<double> out(dims, 0.0);
    const double n = static_cast<double>(batch.size());
    for (std::size_t k = 0; k < dims; ++k) {
        double h = 0.0;
        for (std::size_t c : counts[k]) {
            if (c == 0) continue;
            const double p = static_cast<double>(c) / n;
            h -= p * std::log2(p);
        }
        out[k] = h;
    }
    return out;
}

std::vector<std::size_t> select_features(const std::vector<FeatureVector>& batch, const RgidEntry& entry,
                                         std::size_t k) {
    if (batch.empty()) throw DomainError("feature selection needs a non-empty batch");
    if (k == 0 || k > entry.phi.size()) {
        throw DomainError("k = " + std::to_string(k) + " outside [1, " + std::to_string(entry.phi.size()) + "]");
    }
    const auto h = feature_entropies(batch, entry);
    std::vector<std::size_t> order(h.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return h[a] > h[b]; });
    order.resize(k);
    return order;
}

Digest sha256(const std::uint8_t* data, std::size_t size) {
    Digest out{};
    unsigned int len = 0;
    if (EVP_Digest(data, size, out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
        throw CredentialError("SHA-256 computation failed");
    }
    return out;
}

ProductId product_id_for(const FruitSample& sample) {
    const std::string key = "trialign.product:" + sample.lambda.str() + "/" + sample.id;
    const Digest d = sha256(reinterpret_cast<const std::uint8_t*>(key.data()), key.size());
    ProductId id{};
    std::copy_n(d.begin(), id.size(), id.begin());
    return id;
}

namespace {

void put_u8(Bytes& out, std::uint8_t v) { out.push_back(v); }

void put_be(Bytes& out, std::uint64_t v, int width) {
    for (int i = width - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_string(Bytes& out, const std::string& s) {
    if (s.size() > 0xFFFF) throw CredentialError("string field longer than 65535 bytes");
    put_be(out, s.size(), 2);
    out.insert(out.end(), s.begin(), s.end());
}

class Reader {
public:
    Reader(const Bytes& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

    std::uint64_t be(int width) {
        need(static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) v = (v << 8) | bytes_[pos_++];
        return v;
    }
    std::string str() {
        const auto n = static_cast<std::size_t>(be(2));
        need(n);
        std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                      bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }
    template <std::size_t N>
    std::array<std::uint8_t, N> fixed() {
        need(N);
        std::array<std::uint8_t, N> a{};
        std::copy_n(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_), N, a.begin());
        pos_ += N;
        return a;
    }
    bool done() const { return pos_ == end_; }

private:
    void need(std::size_t n) const {
        if (end_ - pos_ < n) throw TruncationError("credential payload ends inside a field");
    }
    const Bytes& bytes_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

}  // namespace

Bytes canonical_bytes(const Credential& c) {
    if (c.feature_codes.size() > 0xFF) throw CredentialError("more than 255 feature codes");
    Bytes out;
    put_u8(out, c.version);
    out.insert(out.end(), c.product_id.begin(), c.product_id.end());
    put_string(out, c.lambda.origin);
    put_string(out, c.lambda.variety);
    put_string(out, c.grade);
    put_u8(out, static_cast<std::uint8_t>(c.feature_codes.size()));
    for (const auto& fc : c.feature_codes) {
        if (fc.level >= kLevels) throw CredentialError("feature level above 15");
        put_string(out, fc.feature_id);
        put_u8(out, fc.level);
    }
    put_be(out, c.exit_layer, 2);
    put_be(out, c.cumulative, 4);
    put_be(out, static_cast<std::uint64_t>(c.t_issue), 8);
    return out;
}

Digest compute_digest(const Credential& c) {
    const Bytes body = canonical_bytes(c);
    return sha256(body.data(), body.size());
}

Bytes encode_payload(const Credential& c) {
    Bytes out = canonical_bytes(c);
    const Digest d = sha256(out.data(), out.size());
    out.insert(out.end(), d.begin(), d.end());
    return out;
}

std::string qr_text(const Credential& c) {
    std::array<std::uint8_t, 48> raw{};
    std::copy(c.product_id.begin(), c.product_id.end(), raw.begin());
    std::copy(c.digest.begin(), c.digest.end(), raw.begin() + 16);
    return base64url_encode(raw.data(), raw.size());
}

EncodedCredential encode_credential(const DecisionTrace& trace, const FruitSample& sample, const RgidEntry& entry,
                                    const std::vector<std::size_t>& selected, std::int64_t t_issue,
                                    const Extractor& extractor) {
    if (trace.verdict == Verdict::pending) throw CredentialError("trace for '" + trace.sample_id + "' is unresolved");
    Credential c;
    c.product_id = product_id_for(sample);
    c.lambda = trace.lambda;
    c.grade = trace.grade;
    for (std::size_t idx : selected) {
        if (idx >= entry.phi.size()) throw CredentialError("selected feature index out of range");
        const auto& spec = entry.phi[idx];
        c.feature_codes.push_back(FeatureCode{spec.id, discretize(extractor.extract(sample, spec), spec)});
    }
    switch (trace.exit_stage) {
        case ExitStage::screening: c.exit_layer = 0; break;
        case ExitStage::early: c.exit_layer = static_cast<std::uint16_t>(trace.exit_layer); break;
        case ExitStage::full: c.exit_layer = kFullDepthExit; break;
    }
    const double score = std::clamp(trace.final_score(), 0.0, 1.0);
    c.cumulative = static_cast<std::uint32_t>(std::lround(score * 10000.0));
    c.t_issue = t_issue;
    EncodedCredential out;
    out.payload = encode_payload(c);
    std::copy(out.payload.end() - 32, out.payload.end(), c.digest.begin());
    out.qr_text = qr_text(c);
    out.credential = std::move(c);
    return out;
}

Credential decode_credential(const Bytes& payload) {
    constexpr std::size_t kMinimum = 1 + 16 + 2 + 2 + 2 + 1 + 2 + 4 + 8 + 32;
    if (payload.size() < kMinimum) throw TruncationError("credential payload shorter than the fixed fields");
    const std::size_t body = payload.size() - 32;
    const Digest expect = sha256(payload.data(), body);
    if (!std::equal(expect.begin(), expect.end(), payload.begin() + static_cast<std::ptrdiff_t>(body))) {
        throw DigestMismatchError("credential digest does not match its contents");
    }
    if (payload[0] != kCredentialVersion) {
        throw VersionError("unsupported credential version " + std::to_string(payload[0]));
    }
    Reader r(payload, body);
    Credential c;
    c.version = static_cast<std::uint8_t>(r.be(1));
    c.product_id = r.fixed<16>();
    c.lambda.origin = r.str();
    c.lambda.variety = r.str();
    c.grade = r.str();
    const auto k = static_cast<std::size_t>(r.be(1));
    for (std::size_t i = 0; i < k; ++i) {
        FeatureCode fc;
        fc.feature_id = r.str();
        fc.level = static_cast<std::uint8_t>(r.be(1));
        if (fc.level >= kLevels) throw CredentialError("feature level above 15");
        c.feature_codes.push_back(std::move(fc));
    }
    c.exit_layer = static_cast<std::uint16_t>(r.be(2));
    c.cumulative = static_cast<std::uint32_t>(r.be(4));
    c.t_issue = static_cast<std::int64_t>(r.be(8));
    if (!r.done()) throw TruncationError("trailing bytes before the digest");
    std::copy(payload.begin() + static_cast<std::ptrdiff_t>(body), payload.end(), c.digest.begin());
    return c;
}

bool verify(const std::string& text, const Credential& record) {
    const Bytes raw = base64url_decode(text);
    if (raw.size() != 48) throw EncodingError("QR text must decode to 48 bytes, got " + std::to_string(raw.size()));
    if (!std::equal(record.product_id.begin(), record.product_id.end(), raw.begin())) return false;
    const Digest d = compute_digest(record);
    return std::equal(d.begin(), d.end(), raw.begin() + 16);
}

std::string base64url_encode(const std::uint8_t* data, std::size_t size) {
    std::string out(4 * ((size + 2) / 3) + 1, '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data, static_cast<int>(size));
    out.resize(static_cast<std::size_t>(n));
    while (!out.empty() && out.back() == '=') out.pop_back();
    for (char& ch : out) {
        if (ch == '+') ch = '-';
        else if (ch == '/') ch = '_';
    }
    return out;
}

Bytes base64url_decode(const std::string& text) {
    std::string s = text;
    for (char& ch : s) {
        if (ch == '-') ch = '+';
        else if (ch == '_') ch = '/';
        else if (ch == '+' || ch == '/' || ch == '=') throw EncodingError("not base64url text");
        else if (!std::isalnum(static_cast<unsigned char>(ch))) throw EncodingError("not base64url text");
    }
    if (s.size() % 4 == 1) throw EncodingError("base64url text has an impossible length");
    const std::size_t pad = (4 - s.size() % 4) % 4;
    s.append(pad, '=');
    Bytes out(s.size() / 4 * 3);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(s.data()),
                                  static_cast<int>(s.size()));
    if (n < 0) throw EncodingError("not base64url text");
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

std::string to_hex(const std::uint8_t* data, std::size_t size) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(size * 2);
    for (std::size_t i = 0; i < size; ++i) {
        out.push_back(digits[data[i] >> 4]);
        out.push_back(digits[data[i] & 0xF]);
    }
    return out;
}

Bytes from_hex(const std::string& text) {
    if (text.size() % 2 != 0) throw EncodingError("hex text has odd length");
    auto nibble = [](char ch) -> std::uint8_t {
        if (ch >= '0' && ch <= '9') return static_cast<std::uint8_t>(ch - '0');
        if (ch >= 'a' && ch <= 'f') return static_cast<std::uint8_t>(ch - 'a' + 10);
        if (ch >= 'A' && ch <= 'F') return static_cast<std::uint8_t>(ch - 'A' + 10);
        throw EncodingError("not hex text");
    };
    Bytes out(text.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<std::uint8_t>(nibble(text[2 * i]) << 4 | nibble(text[2 * i + 1]));
    }
    return out;
}

json to_json(const Credential& c) {
    json codes = json::array();
    for (const auto& fc : c.feature_codes) codes.push_back({{"feature", fc.feature_id}, {"level", fc.level}});
    return json{{"version", c.version},
                {"product_id", to_hex(c.product_id.data(), c.product_id.size())},
                {"lambda", c.lambda.str()},
                {"grade", c.grade},
                {"feature_codes", codes},
                {"exit_layer", c.exit_layer},
                {"cumulative", c.cumulative},
                {"t_issue", c.t_issue},
                {"digest", to_hex(c.digest.data(), c.digest.size())}};
}

Credential credential_from_json(const json& j) {
    Credential c;
    try {
        c.version = j.at("version").get<std::uint8_t>();
        const Bytes id = from_hex(j.at("product_id").get<std::string>());
        if (id.size() != c.product_id.size()) throw SchemaError("credential: product_id must be 16 bytes");
        std::copy(id.begin(), id.end(), c.product_id.begin());
        c.lambda = parse_variety_id(j.at("lambda").get<std::string>());
        c.grade = j.at("grade").get<std::string>();
        for (const auto& fc : j.at("feature_codes")) {
            c.feature_codes.push_back(
                FeatureCode{fc.at("feature").get<std::string>(), fc.at("level").get<std::uint8_t>()});
        }
        c.exit_layer = j.at("exit_layer").get<std::uint16_t>();
        c.cumulative = j.at("cumulative").get<std::uint32_t>();
        c.t_issue = j.at("t_issue").get<std::int64_t>();
        if (j.contains("digest")) {
            const Bytes d = from_hex(j["digest"].get<std::string>());
            if (d.size() != c.digest.size()) throw SchemaError("credential: digest must be 32 bytes");
            std::copy(d.begin(), d.end(), c.digest.begin());
        }
    } catch (const json::exception& ex) {
        throw SchemaError(std::string("credential: ") + ex.what());
    }
    return c;
}

}  // namespace trialign
