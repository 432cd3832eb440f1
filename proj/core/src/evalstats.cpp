#include "trialign/evalstats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "trialign/errors.hpp"

namespace trialign {

using nlohmann::json;

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts) t = std::accumulate(row.begin(), row.end(), t);
    return t;
}

void ConfusionMatrix::check() const {
    if (counts.size() != classes.size()) throw SchemaError("confusion matrix: row count differs from class count");
    for (const auto& row : counts) {
        if (row.size() != classes.size()) throw SchemaError("confusion matrix: not square");
    }
}

std::string_view to_string(Averaging a) { return a == Averaging::weighted ? "weighted" : "macro"; }

ClassificationReport classification_metrics(const ConfusionMatrix& m, Averaging averaging) {
    m.check();
    const std::uint64_t total = m.total();
    if (m.classes.empty() || total == 0) throw DomainError("confusion matrix is empty");
    const std::size_t n = m.classes.size();
    ClassificationReport r;
    r.averaging = averaging;
    std::uint64_t diagonal = 0;
    for (std::size_t c = 0; c < n; ++c) {
        const std::uint64_t tp = m.counts[c][c];
        diagonal += tp;
        std::uint64_t actual = 0, predicted = 0;
        for (std::size_t o = 0; o < n; ++o) {
            actual += m.counts[c][o];
            predicted += m.counts[o][c];
        }
        ClassMetrics cm;
        cm.label = m.classes[c];
        cm.support = actual;
        cm.precision = predicted == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(predicted);
        cm.recall = actual == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(actual);
        const double pr = cm.precision + cm.recall;
        cm.f1 = pr == 0.0 ? 0.0 : 2.0 * cm.precision * cm.recall / pr;
        r.per_class.push_back(cm);
    }
    r.accuracy = static_cast<double>(diagonal) / static_cast<double>(total);
    for (const auto& cm : r.per_class) {
        const double w = averaging == Averaging::weighted
                             ? static_cast<double>(cm.support) / static_cast<double>(total)
                             : 1.0 / static_cast<double>(n);
        r.precision += w * cm.precision;
        r.recall += w * cm.recall;
        r.f1 += w * cm.f1;
    }
    return r;
}

CochranAggregates aggregate(const std::vector<std::vector<int>>& responses) {
    CochranAggregates a;
    if (responses.empty()) throw DegenerateInputError("no respondents");
    const std::size_t k = responses.front().size();
    a.g.assign(k, 0);
    for (const auto& row : responses) {
        if (row.size() != k) throw SchemaError("response rows differ in length");
        std::int64_t l = 0;
        for (std::size_t j = 0; j < k; ++j) {
            if (row[j] != 0 && row[j] != 1) throw SchemaError("responses must be 0 or 1");
            a.g[j] += row[j];
            l += row[j];
        }
        a.sum_l += l;
        a.sum_l2 += l * l;
    }
    return a;
}

CochranResult cochran_q(const CochranAggregates& in) {
    const auto k = static_cast<std::int64_t>(in.g.size());
    if (k < 2) throw DegenerateInputError("Cochran's Q needs at least two options");
    std::int64_t sum_g = 0, sum_g2 = 0;
    for (std::int64_t g : in.g) {
        if (g < 0) throw SchemaError("selection counts must be nonnegative");
        sum_g += g;
        sum_g2 += g * g;
    }
    if (sum_g != in.sum_l) throw SchemaError("sum of option counts differs from sum of respondent counts");
    const std::int64_t denominator = k * in.sum_l - in.sum_l2;
    if (denominator <= 0) throw DegenerateInputError("Cochran's Q denominator is not positive");
    const std::int64_t numerator = (k - 1) * (k * sum_g2 - sum_g * sum_g);
    CochranResult r;
    r.q = static_cast<double>(numerator) / static_cast<double>(denominator);
    r.df = static_cast<int>(k - 1);
    r.p = chi2_sf(r.q, r.df);
    r.ordering.resize(in.g.size());
    std::iota(r.ordering.begin(), r.ordering.end(), std::size_t{0});
    std::stable_sort(r.ordering.begin(), r.ordering.end(),
                     [&](std::size_t a, std::size_t b) { return in.g[a] > in.g[b]; });
    return r;
}

CochranResult cochran_q(const std::vector<std::vector<int>>& responses) { return cochran_q(aggregate(responses)); }

namespace {

constexpr double kEps = 1e-16;
constexpr int kMaxIter = 10000;

// Lower regularized gamma by its power series; converges quickly for x < a + 1.
double gamma_p_series(double a, double x) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < kMaxIter; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * kEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper regularized gamma by its continued fraction (modified Lentz).
double gamma_q_fraction(double a, double x) {
    constexpr double tiny = std::numeric_limits<double>::min() / kEps;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxIter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEps) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_q(double a, double x) {
    if (!(a > 0.0) || !(x >= 0.0)) throw DomainError("incomplete gamma needs a > 0 and x >= 0");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return std::clamp(1.0 - gamma_p_series(a, x), 0.0, 1.0);
    return std::clamp(gamma_q_fraction(a, x), 0.0, 1.0);
}

double chi2_sf(double x, int df) {
    if (df < 1) throw DomainError("chi-square degrees of freedom must be positive");
    if (!(x >= 0.0)) throw DomainError("chi-square statistic must be nonnegative");
    return gamma_q(df / 2.0, x / 2.0);
}

json to_json(const ClassificationReport& r) {
    json per = json::array();
    for (const auto& c : r.per_class) {
        per.push_back({{"label", c.label},
                       {"precision", c.precision},
                       {"recall", c.recall},
                       {"f1", c.f1},
                       {"support", c.support}});
    }
    return json{{"accuracy", r.accuracy},
                {"precision", r.precision},
                {"recall", r.recall},
                {"f1", r.f1},
                {"averaging", to_string(r.averaging)},
                {"per_class", per}};
}

json to_json(const CochranResult& r) {
    return json{{"q", r.q}, {"df", r.df}, {"p", r.p}, {"ordering", r.ordering}};
}

}  // namespace trialign
