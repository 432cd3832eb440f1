#include "cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "trialign/adapt.hpp"
#include "trialign/cascade.hpp"
#include "trialign/errors.hpp"
#include "trialign/evalstats.hpp"
#include "trialign/metrics.hpp"
#include "trialign/premap.hpp"
#include "trialign/rgid.hpp"
#include "trialign/simgen.hpp"

namespace trialign::cli {

using nlohmann::json;

namespace {

struct Options {
    std::string format = "json";
    std::string out_path;
    int verbosity = 0;

    // simulate
    std::string scenario;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> n;
    std::string trace_csv;
    bool no_early_exit = false;

    // grade / credential
    std::string samples;
    std::string dict;
    std::string lambda;
    std::string cascade;
    bool waive = false;

    // tti
    std::string inputs;

    // stats
    std::string csv;
    std::string averaging = "weighted";

    // credential
    std::string sample;
    std::size_t k = 3;
    std::vector<std::string> select;
    std::int64_t t_issue = 0;
    std::string qr;
    std::string record;

    // dict
    std::string dict_path;
    std::string base;
    std::string new_lambda;
    std::string calibration;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

json read_json(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& ex) {
        throw ParseError(path + ": " + ex.what());
    }
}

class Output {
public:
    Output(std::ostream& fallback, const std::string& path) : out_(&fallback), path_(path) {}
    std::ostream& stream() { return buffer_; }
    void flush() {
        if (path_.empty()) {
            *out_ << buffer_.str();
            return;
        }
        std::ofstream f(path_, std::ios::binary);
        if (!f) throw NotFoundError("cannot write " + path_);
        f << buffer_.str();
    }

private:
    std::ostream* out_;
    std::string path_;
    std::ostringstream buffer_;
};

void emit(Output& out, const json& doc) { out.stream() << doc.dump(2) << '\n'; }

std::string dictionary_path(const Options& o) {
    if (!o.dict.empty()) return o.dict;
    if (const char* env = std::getenv(kDictionaryEnv); env != nullptr && *env != '\0') return env;
    throw ConfigError(std::string("no dictionary given: pass --dict or set ") + kDictionaryEnv);
}

std::vector<FruitSample> read_samples(const std::string& path) {
    const json doc = read_json(path);
    const json& list = doc.is_object() && doc.contains("samples") ? doc["samples"] : doc;
    std::vector<FruitSample> out;
    if (list.is_array()) {
        for (const auto& s : list) out.push_back(sample_from_json(s));
    } else {
        out.push_back(sample_from_json(list));
    }
    return out;
}

CascadeConfig cascade_for(const Options& o, const RgidEntry& entry) {
    if (o.cascade.empty()) return CascadeConfig::sound(entry);
    return cascade_config_from_json(read_json(o.cascade), entry);
}

std::string fixed(double x, int digits) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << x;
    return s.str();
}

// ---------------------------------------------------------------------------

void cmd_simulate(const Options& o, Output& out) {
    Scenario sc = load_scenario(o.scenario);
    if (o.seed) sc.config.seed = *o.seed;
    if (o.n) sc.config.n = *o.n;
    if (o.no_early_exit) sc.config.early_exit = false;
    const SimulationReport report = run_pipeline(sc.repo, sc.config);
    if (!o.trace_csv.empty()) {
        std::ofstream f(o.trace_csv, std::ios::binary);
        if (!f) throw NotFoundError("cannot write " + o.trace_csv);
        write_trace_csv(f, report);
    }
    if (o.format == "table") {
        auto& s = out.stream();
        s << "variety            " << report.lambda.str() << '\n'
          << "samples            " << report.n_samples << '\n'
          << "graded             " << report.graded << '\n';
        for (const auto& [grade, count] : report.histogram) s << "  " << std::left << std::setw(17) << grade << count << '\n';
        s << "mean layers        " << fixed(report.mean_layers_evaluated, 3) << " of " << report.layer_count << '\n'
          << "oracle mismatches  " << report.oracle_mismatches << '\n'
          << "throughput/min     " << fixed(report.throughput, 3) << '\n'
          << "purged             " << report.purged << '\n'
          << "delta C            " << fixed(report.delta_c, 6) << '\n'
          << "ICQ FE FC          " << fixed(report.tti.icq, 4) << ' ' << fixed(report.tti.fe_raw, 4) << ' '
          << fixed(report.tti.fc, 4) << '\n'
          << "TTI                " << fixed(report.tti.tti, 4) << '\n';
        return;
    }
    emit(out, to_json(report));
}

void cmd_grade(const Options& o, Output& out) {
    const Repository repo = load_dictionary_file(dictionary_path(o));
    const RgidEntry& entry = repo.lookup(parse_variety_id(o.lambda));
    const CascadeConfig config = cascade_for(o, entry);
    const Extractor& extractor = ExtractorRegistry::builtin().get("synthetic");
    json traces = json::array();
    for (auto& s : read_samples(o.samples)) {
        if (s.lambda.empty()) s.lambda = entry.lambda;
        traces.push_back(to_json(cascade_decide(s, entry, config, extractor, o.waive)));
    }
    emit(out, json{{"lambda", entry.lambda.str()}, {"traces", traces}});
}

void cmd_tti(const Options& o, Output& out) {
    const TtiReport report = tti_from_json(read_json(o.inputs));
    if (o.format == "table") {
        out.stream() << "ICQ  " << fixed(report.icq, 6) << "\nFE   " << fixed(report.fe_raw, 6) << " (term "
                     << fixed(report.fe_term, 6) << ")\nFC   " << fixed(report.fc, 6) << "\nTTI  "
                     << fixed(report.tti, 6) << '\n';
        return;
    }
    emit(out, to_json(report));
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(read_file(path));
    std::string line;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(trim(cell));
        rows.push_back(std::move(cells));
    }
    return rows;
}

std::int64_t to_int(const std::string& cell, const std::string& where) {
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(cell, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != cell.size() || cell.empty()) throw ParseError(where + ": expected an integer, got '" + cell + "'");
    return v;
}

bool numeric(const std::string& cell) {
    if (cell.empty()) return false;
    std::size_t i = cell[0] == '-' ? 1 : 0;
    if (i == cell.size()) return false;
    for (; i < cell.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(cell[i]))) return false;
    }
    return true;
}

void cmd_cochran(const Options& o, Output& out) {
    const auto rows = read_csv(o.csv);
    if (rows.empty()) throw DegenerateInputError(o.csv + ": no data");
    CochranAggregates agg;
    std::vector<std::string> names;
    bool aggregates = false;
    for (const auto& r : rows) aggregates = aggregates || (!r.empty() && (r[0] == "G" || r[0] == "sum_L"));
    if (aggregates) {
        bool have_g = false, have_l = false, have_l2 = false;
        for (const auto& r : rows) {
            if (r.empty()) continue;
            if (r[0] == "G") {
                for (std::size_t i = 1; i < r.size(); ++i) agg.g.push_back(to_int(r[i], o.csv + " G"));
                have_g = true;
            } else if (r[0] == "sum_L" && r.size() == 2) {
                agg.sum_l = to_int(r[1], o.csv + " sum_L");
                have_l = true;
            } else if (r[0] == "sum_L2" && r.size() == 2) {
                agg.sum_l2 = to_int(r[1], o.csv + " sum_L2");
                have_l2 = true;
            } else if (r[0] == "options") {
                names.assign(r.begin() + 1, r.end());
            } else {
                throw ParseError(o.csv + ": unknown aggregate row '" + r[0] + "'");
            }
        }
        if (!have_g || !have_l || !have_l2) throw ParseError(o.csv + ": aggregates need rows G, sum_L and sum_L2");
    } else {
        std::vector<std::vector<int>> matrix;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const bool header = i == 0 && !rows[i].empty() && !numeric(rows[i][0]);
            if (header) {
                names = rows[i];
                continue;
            }
            std::vector<int> row;
            for (const auto& c : rows[i]) row.push_back(static_cast<int>(to_int(c, o.csv)));
            matrix.push_back(std::move(row));
        }
        agg = aggregate(matrix);
    }
    const CochranResult r = cochran_q(agg);
    if (o.format == "table") {
        out.stream() << "Q = " << fixed(r.q, 2) << "  df = " << r.df << "  p = " << std::scientific
                     << std::setprecision(3) << r.p << '\n';
        return;
    }
    json doc = to_json(r);
    doc["k"] = agg.g.size();
    doc["g"] = agg.g;
    doc["sum_l"] = agg.sum_l;
    doc["sum_l2"] = agg.sum_l2;
    if (names.size() == agg.g.size()) doc["options"] = names;
    emit(out, doc);
}

void cmd_metrics(const Options& o, Output& out) {
    const auto rows = read_csv(o.csv);
    if (rows.size() < 2) throw DomainError(o.csv + ": expected a header row and at least one class row");
    ConfusionMatrix m;
    m.classes.assign(rows[0].begin() + 1, rows[0].end());
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != m.classes.size() + 1) throw SchemaError(o.csv + ": row " + std::to_string(i) + " has the wrong width");
        if (r[0] != m.classes[i - 1]) {
            throw SchemaError(o.csv + ": row label '" + r[0] + "' does not match column '" + m.classes[i - 1] + "'");
        }
        std::vector<std::uint64_t> counts;
        for (std::size_t c = 1; c < r.size(); ++c) {
            const auto v = to_int(r[c], o.csv);
            if (v < 0) throw SchemaError(o.csv + ": negative count");
            counts.push_back(static_cast<std::uint64_t>(v));
        }
        m.counts.push_back(std::move(counts));
    }
    const Averaging avg = o.averaging == "macro" ? Averaging::macro : Averaging::weighted;
    const ClassificationReport r = classification_metrics(m, avg);
    if (o.format == "table") {
        auto& s = out.stream();
        s << "class        precision  recall     f1         support\n";
        for (const auto& c : r.per_class) {
            s << std::left << std::setw(13) << c.label << std::setw(11) << fixed(c.precision, 4) << std::setw(11)
              << fixed(c.recall, 4) << std::setw(11) << fixed(c.f1, 4) << c.support << '\n';
        }
        s << "accuracy " << fixed(r.accuracy, 4) << "  " << to_string(avg) << " P/R/F1 " << fixed(r.precision, 4)
          << ' ' << fixed(r.recall, 4) << ' ' << fixed(r.f1, 4) << '\n';
        return;
    }
    emit(out, to_json(r));
}

void cmd_encode(const Options& o, Output& out) {
    const Repository repo = load_dictionary_file(dictionary_path(o));
    const RgidEntry& entry = repo.lookup(parse_variety_id(o.lambda));
    const Extractor& extractor = ExtractorRegistry::builtin().get("synthetic");
    auto samples = read_samples(o.sample);
    if (samples.size() != 1) throw DomainError("credential encode expects exactly one sample");
    FruitSample& sample = samples.front();
    if (sample.lambda.empty()) sample.lambda = entry.lambda;
    const DecisionTrace trace = cascade_decide(sample, entry, cascade_for(o, entry), extractor, o.waive);
    std::vector<std::size_t> selected;
    if (!o.select.empty()) {
        for (const auto& id : o.select) {
            const auto k = entry.feature_index(id);
            if (!k) throw NotFoundError("unknown feature '" + id + "'");
            selected.push_back(*k);
        }
    } else {
        selected = select_features({extract_features(sample, entry, extractor)}, entry, std::min(o.k, entry.phi.size()));
    }
    const EncodedCredential enc = encode_credential(trace, sample, entry, selected, o.t_issue, extractor);
    emit(out, json{{"credential", to_json(enc.credential)},
                   {"payload_hex", to_hex(enc.payload.data(), enc.payload.size())},
                   {"qr", enc.qr_text}});
}

Credential read_record(const std::string& path) {
    const std::string text = read_file(path);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        json doc;
        try {
            doc = json::parse(text);
        } catch (const json::parse_error& ex) {
            throw ParseError(path + ": " + ex.what());
        }
        if (doc.contains("payload_hex")) return decode_credential(from_hex(doc["payload_hex"].get<std::string>()));
        return credential_from_json(doc.contains("credential") ? doc["credential"] : doc);
    }
    std::string hex;
    for (char ch : text) {
        if (!std::isspace(static_cast<unsigned char>(ch))) hex.push_back(ch);
    }
    return decode_credential(from_hex(hex));
}

int cmd_verify(const Options& o, Output& out) {
    const Credential record = read_record(o.record);
    const bool ok = verify(o.qr, record);
    emit(out, json{{"valid", ok}});
    return ok ? kExitOk : kExitDomain;
}

int cmd_dict_validate(const Options& o, Output& out, std::ostream& err) {
    try {
        const Repository repo = load_dictionary_file(o.dict_path);
        json ids = json::array();
        for (const auto& id : repo.ids()) ids.push_back(id.str());
        emit(out, json{{"valid", true}, {"varieties", ids}, {"findings", json::array()}});
        return kExitOk;
    } catch (const NotFoundError&) {
        throw;
    } catch (const Error& ex) {
        emit(out, json{{"valid", false}, {"varieties", json::array()}, {"findings", json::array({ex.what()})}});
        err << "trialign: " << ex.what() << '\n';
        return kExitDomain;
    }
}

void cmd_dict_adapt(const Options& o, Output& out) {
    const Repository repo = load_dictionary_file(o.dict_path);
    const json doc = read_json(o.calibration);
    const json& list = doc.is_object() && doc.contains("calibration") ? doc["calibration"] : doc;
    if (!list.is_array()) throw SchemaError(o.calibration + ": expected an array of labelled samples");
    std::vector<CalibrationSample> cal;
    for (const auto& item : list) {
        if (!item.contains("label")) throw SchemaError(o.calibration + ": sample without 'label'");
        json s = item;
        s.erase("label");
        cal.push_back(CalibrationSample{sample_from_json(s), item["label"].get<std::string>()});
    }
    const AdaptResult r = adapt_entry_report(repo, parse_variety_id(o.base), parse_variety_id(o.new_lambda), cal,
                                             ExtractorRegistry::builtin().get("synthetic"));
    emit(out, to_json(r));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"trialign: variety-aware grading, trust metrics and credentials", "trialign"};
    app.require_subcommand(1, 1);
    Options o;
    app.add_option("--format", o.format, "Output format")->check(CLI::IsMember({"json", "table"}));
    app.add_option("-o,--out", o.out_path, "Write output to this file instead of standard output");
    app.add_flag("-v,--verbose", o.verbosity, "Progress notes on standard error");

    auto* simulate = app.add_subcommand("simulate", "Run the synthetic pipeline for a scenario");
    simulate->add_option("scenario", o.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    simulate->add_option("--seed", o.seed, "Override the scenario seed");
    simulate->add_option("--n", o.n, "Override the sample count")->check(CLI::PositiveNumber);
    simulate->add_option("--trace-csv", o.trace_csv, "Also write per-sample traces as CSV");
    simulate->add_flag("--no-early-exit", o.no_early_exit, "Evaluate every layer for every sample");

    auto* grade = app.add_subcommand("grade", "Grade samples through the cascade");
    grade->add_option("samples", o.samples, "Samples file")->required()->check(CLI::ExistingFile);
    grade->add_option("--dict", o.dict, "Dictionary file")->check(CLI::ExistingFile);
    grade->add_option("--lambda", o.lambda, "Variety as origin/variety")->required();
    grade->add_option("--cascade", o.cascade, "Cascade config file")->check(CLI::ExistingFile);
    grade->add_flag("--waive-soundness", o.waive, "Run an unsound cascade config, flagging the traces");

    auto* tti_cmd = app.add_subcommand("tti", "Compute the trust index from inputs");
    tti_cmd->add_option("--inputs", o.inputs, "Inputs file")->required()->check(CLI::ExistingFile);

    auto* stats = app.add_subcommand("stats", "Evaluation statistics");
    stats->require_subcommand(1, 1);
    auto* cochran = stats->add_subcommand("cochran", "Cochran's Q from a response matrix or aggregates");
    cochran->add_option("csv", o.csv, "CSV file")->required()->check(CLI::ExistingFile);
    auto* metrics = stats->add_subcommand("metrics", "Classification metrics from a confusion matrix");
    metrics->add_option("csv", o.csv, "CSV file")->required()->check(CLI::ExistingFile);
    metrics->add_option("--averaging", o.averaging, "weighted or macro")->check(CLI::IsMember({"weighted", "macro"}));

    auto* credential = app.add_subcommand("credential", "Pre-mapping credentials");
    credential->require_subcommand(1, 1);
    auto* encode = credential->add_subcommand("encode", "Grade one sample and emit its credential");
    encode->add_option("--sample", o.sample, "Sample file")->required()->check(CLI::ExistingFile);
    encode->add_option("--dict", o.dict, "Dictionary file")->check(CLI::ExistingFile);
    encode->add_option("--lambda", o.lambda, "Variety as origin/variety")->required();
    encode->add_option("--cascade", o.cascade, "Cascade config file")->check(CLI::ExistingFile);
    encode->add_option("--features", o.k, "Number of feature codes")->check(CLI::Range(1, 255));
    encode->add_option("--select", o.select, "Feature ids to encode instead of entropy selection");
    encode->add_option("--t-issue", o.t_issue, "Issue time, unix seconds");
    encode->add_flag("--waive-soundness", o.waive, "Run an unsound cascade config");
    auto* verify_cmd = credential->add_subcommand("verify", "Check a QR text against a full record");
    verify_cmd->add_option("--qr", o.qr, "QR text")->required();
    verify_cmd->add_option("--record", o.record, "Credential JSON or payload hex")->required()->check(CLI::ExistingFile);

    auto* dict = app.add_subcommand("dict", "Dictionary tools");
    dict->require_subcommand(1, 1);
    auto* validate = dict->add_subcommand("validate", "Load and validate a dictionary");
    validate->add_option("dictionary", o.dict_path, "Dictionary file")->required()->check(CLI::ExistingFile);
    auto* adapt = dict->add_subcommand("adapt", "Adapt an entry to a new variety");
    adapt->add_option("dictionary", o.dict_path, "Dictionary file")->required()->check(CLI::ExistingFile);
    adapt->add_option("--base", o.base, "Base variety")->required();
    adapt->add_option("--new", o.new_lambda, "New variety")->required();
    adapt->add_option("--calibration", o.calibration, "Labelled samples")->required()->check(CLI::ExistingFile);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& ex) {
        err << "trialign: " << ex.what() << '\n';
        err << app.help();
        return kExitUsage;
    }

    try {
        Output output(out, o.out_path);
        int code = kExitOk;
        if (o.verbosity > 0) err << "trialign: running " << app.get_subcommands().front()->get_name() << '\n';
        if (simulate->parsed()) {
            cmd_simulate(o, output);
        } else if (grade->parsed()) {
            cmd_grade(o, output);
        } else if (tti_cmd->parsed()) {
            cmd_tti(o, output);
        } else if (cochran->parsed()) {
            cmd_cochran(o, output);
        } else if (metrics->parsed()) {
            cmd_metrics(o, output);
        } else if (encode->parsed()) {
            cmd_encode(o, output);
        } else if (verify_cmd->parsed()) {
            code = cmd_verify(o, output);
        } else if (validate->parsed()) {
            code = cmd_dict_validate(o, output, err);
        } else if (adapt->parsed()) {
            cmd_dict_adapt(o, output);
        }
        output.flush();
        return code;
    } catch (const Error& ex) {
        err << "trialign: " << ex.what() << '\n';
        return kExitDomain;
    } catch (const nlohmann::json::exception& ex) {
        err << "trialign: malformed input: " << ex.what() << '\n';
        return kExitDomain;
    }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, out, err);
}

}  // namespace trialign::cli
