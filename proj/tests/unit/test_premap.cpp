#include <doctest.h>

#include <algorithm>
#include <random>

#include "fixtures.hpp"
#include "trialign/errors.hpp"
#include "trialign/premap.hpp"

using namespace trialign;
using trialign::testing::cascade_entry;
using trialign::testing::fraction_sample;

namespace {

const SyntheticExtractor kSynthetic;

FeatureVector vec(std::vector<double> v) {
    FeatureVector f;
    f.provenance.assign(v.size(), Plane::general);
    f.values = std::move(v);
    return f;
}

Credential random_credential(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> byte(0, 255);
    std::uniform_int_distribution<int> len(0, 12);
    std::uniform_int_distribution<int> letter('a', 'z');
    auto word = [&] {
        std::string s(static_cast<std::size_t>(len(rng)), 'x');
        for (char& c : s) c = static_cast<char>(letter(rng));
        return s;
    };
    Credential c;
    for (auto& b : c.product_id) b = static_cast<std::uint8_t>(byte(rng));
    c.lambda = {"o" + word(), "v" + word()};
    c.grade = word();
    const int k = len(rng);
    for (int i = 0; i < k; ++i) c.feature_codes.push_back({word(), static_cast<std::uint8_t>(byte(rng) % 16)});
    c.exit_layer = static_cast<std::uint16_t>(byte(rng) * 256 + byte(rng));
    c.cumulative = static_cast<std::uint32_t>(rng());
    c.t_issue = static_cast<std::int64_t>(rng());
    c.digest = compute_digest(c);
    return c;
}

Bytes redigest(Bytes body) {
    const Digest d = sha256(body.data(), body.size());
    body.insert(body.end(), d.begin(), d.end());
    return body;
}

EncodedCredential sample_credential() {
    const RgidEntry e = cascade_entry();
    const auto s = fraction_sample("x", 1.0, 1.0, 0.3);
    const auto t = cascade_decide(s, e, CascadeConfig::sound(e), kSynthetic);
    return encode_credential(t, s, e, {0, 2}, 1'767'225'600, kSynthetic);
}

}  // namespace

TEST_CASE("discretization levels") {
    FeatureSpec f;
    f.f_min = 0.0;
    f.f_max = 1.0;
    CHECK(discretize(0.0, f) == 0);
    CHECK(discretize(0.0625, f) == 1);
    CHECK(discretize(0.999, f) == 15);
    CHECK(discretize(1.0, f) == 15);
    f.f_min = 40.0;
    f.f_max = 56.0;
    CHECK(discretize(40.0, f) == 0);
    CHECK(discretize(47.5, f) == 7);
    CHECK(discretize(56.0, f) == 15);
}

TEST_CASE("entropy of four equally used levels is two bits") {
    const RgidEntry e = cascade_entry();
    std::vector<FeatureVector> batch;
    for (double v : {0.0, 0.25, 0.5, 0.75}) batch.push_back(vec({v, 0.5, v < 0.5 ? 0.0 : 1.0}));
    const auto h = feature_entropies(batch, e);
    CHECK(h[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(h[1] == 0.0);
    CHECK(h[2] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(select_features(batch, e, 1) == std::vector<std::size_t>{0});
    CHECK(select_features(batch, e, 2) == std::vector<std::size_t>{0, 2});
}

TEST_CASE("constant features have zero entropy and ties keep feature order") {
    const RgidEntry e = cascade_entry();
    const std::vector<FeatureVector> batch(10, vec({0.3, 0.3, 0.3}));
    CHECK(feature_entropies(batch, e) == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(select_features(batch, e, 3) == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("selection errors") {
    const RgidEntry e = cascade_entry();
    const std::vector<FeatureVector> batch(2, vec({0.3, 0.3, 0.3}));
    CHECK_THROWS_AS(select_features({}, e, 1), DomainError);
    CHECK_THROWS_AS(select_features(batch, e, 0), DomainError);
    CHECK_THROWS_AS(select_features(batch, e, 4), DomainError);
}

TEST_CASE("entropy ignores batch order and duplication") {
    const RgidEntry e = cascade_entry();
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<FeatureVector> batch;
    for (int i = 0; i < 200; ++i) batch.push_back(vec({u(rng), u(rng) * u(rng), u(rng) * 0.2}));
    const auto h = feature_entropies(batch, e);
    auto shuffled = batch;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto hs = feature_entropies(shuffled, e);
    auto doubled = batch;
    doubled.insert(doubled.end(), batch.begin(), batch.end());
    const auto hd = feature_entropies(doubled, e);
    for (std::size_t k = 0; k < h.size(); ++k) {
        CHECK(hs[k] == doctest::Approx(h[k]).epsilon(1e-12));
        CHECK(hd[k] == doctest::Approx(h[k]).epsilon(1e-12));
        CHECK(h[k] <= 4.0 + 1e-12);
    }
}

TEST_CASE("sha256 known answer") {
    const std::string abc = "abc";
    const Digest d = sha256(reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size());
    CHECK(to_hex(d.data(), d.size()) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("product id is the truncated hash of the qualified sample id") {
    const ProductId p = product_id_for(fraction_sample("x", 0, 0, 0));
    CHECK(to_hex(p.data(), p.size()) == "412f40315d11035151e9207d5b561851");
}

TEST_CASE("canonical layout matches a hand-built byte string") {
    Credential c;
    for (std::uint8_t i = 0; i < 16; ++i) c.product_id[i] = i;
    c.lambda = {"o", "v"};
    c.grade = "A";
    c.feature_codes = {{"f0", 3}};
    c.exit_layer = 2;
    c.cumulative = 8000;
    c.t_issue = 1'767'225'600;
    const Bytes expect{0x01, 0x00, 0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08, 0x09, 0x0a, 0x0b,
                       0x0c, 0x0d, 0x0e, 0x0f, 0x00, 0x01, 'o',  0x00, 0x01, 'v',  0x00, 0x01, 'A',
                       0x01, 0x00, 0x02, 'f',  '0',  0x03, 0x00, 0x02, 0x00, 0x00, 0x1f, 0x40, 0x00,
                       0x00, 0x00, 0x00, 0x69, 0x55, 0xb9, 0x00};
    CHECK(canonical_bytes(c) == expect);
    const Bytes payload = encode_payload(c);
    CHECK(payload == redigest(expect));
}

TEST_CASE("encode from a trace") {
    const auto enc = sample_credential();
    const Credential& c = enc.credential;
    CHECK(c.grade == "A");
    CHECK(c.exit_layer == 2);
    CHECK(c.cumulative == 8000);
    REQUIRE(c.feature_codes.size() == 2);
    CHECK(c.feature_codes[0] == FeatureCode{"f0", 15});
    CHECK(c.feature_codes[1] == FeatureCode{"f2", 4});
    CHECK(enc.qr_text.size() == 64);
    CHECK(decode_credential(enc.payload) == c);
    CHECK(verify(enc.qr_text, c));
}

TEST_CASE("unresolved traces cannot be encoded") {
    const RgidEntry e = cascade_entry();
    DecisionTrace t;
    t.verdict = Verdict::pending;
    CHECK_THROWS_AS(encode_credential(t, fraction_sample("x", 0, 0, 0), e, {}, 0, kSynthetic), CredentialError);
}

TEST_CASE("random credentials round trip and re-encode identically") {
    std::mt19937_64 rng(99);
    for (int i = 0; i < 1000; ++i) {
        const Credential c = random_credential(rng);
        const Bytes p = encode_payload(c);
        const Credential back = decode_credential(p);
        CHECK(back == c);
        CHECK(encode_payload(back) == p);
        CHECK(credential_from_json(to_json(c)) == c);
    }
}

TEST_CASE("single-byte corruptions are detected") {
    std::mt19937_64 rng(5);
    const Bytes p = sample_credential().payload;
    std::uniform_int_distribution<std::size_t> pos(0, p.size() - 1);
    std::uniform_int_distribution<int> flip(1, 255);
    for (int i = 0; i < 2000; ++i) {
        Bytes q = p;
        q[pos(rng)] ^= static_cast<std::uint8_t>(flip(rng));
        CHECK_THROWS_AS(decode_credential(q), DigestMismatchError);
    }
}

TEST_CASE("truncation, version and layout errors") {
    const Bytes p = sample_credential().payload;
    CHECK_THROWS_AS(decode_credential(Bytes(p.begin(), p.begin() + 20)), TruncationError);
    CHECK_THROWS_AS(decode_credential(Bytes(p.begin(), p.end() - 1)), DigestMismatchError);

    Bytes body(p.begin(), p.end() - 32);
    Bytes v2 = body;
    v2[0] = 2;
    CHECK_THROWS_AS(decode_credential(redigest(v2)), VersionError);

    Bytes trailing = body;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_credential(redigest(trailing)), TruncationError);

    Bytes cut = body;
    cut.pop_back();
    CHECK_THROWS_AS(decode_credential(redigest(cut)), TruncationError);
}

TEST_CASE("verify") {
    const auto enc = sample_credential();
    Credential other = enc.credential;
    other.grade = "B";
    CHECK_FALSE(verify(enc.qr_text, other));
    Credential moved = enc.credential;
    moved.product_id[0] ^= 1;
    CHECK_FALSE(verify(enc.qr_text, moved));
    CHECK_THROWS_AS(verify("abc", enc.credential), EncodingError);
    CHECK_THROWS_AS(verify(enc.qr_text + "AAAA", enc.credential), EncodingError);
}

TEST_CASE("base64url and hex helpers") {
    const Bytes raw{0xfb, 0xff, 0x00, 0x10};
    const std::string b = base64url_encode(raw.data(), raw.size());
    CHECK(b == "-_8AEA");
    CHECK(base64url_decode(b) == raw);
    CHECK(to_hex(raw.data(), raw.size()) == "fbff0010");
    CHECK(from_hex("fbff0010") == raw);
    CHECK_THROWS_AS(from_hex("zz"), EncodingError);
}
