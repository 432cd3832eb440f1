#include <benchmark/benchmark.h>

#include "trialign/cascade.hpp"
#include "trialign/evalstats.hpp"
#include "trialign/premap.hpp"
#include "trialign/simgen.hpp"

using namespace trialign;

namespace {

const Repository& repo() {
    static const Repository r = load_dictionary_file(TRIALIGN_DATA_DIR "/dictionary.json");
    return r;
}

const std::vector<LabeledSample>& samples() {
    static const auto s = generate_samples(default_profiles().front(), 4096, 1);
    return s;
}

void BM_CascadeDecide(benchmark::State& state) {
    const auto& p = default_profiles().front();
    const RgidEntry& e = repo().lookup(p.lambda);
    const CascadeConfig c = CascadeConfig::sound(e);
    const SyntheticExtractor ex;
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(cascade_decide(samples()[i++ % samples().size()].sample, e, c, ex));
    }
}
BENCHMARK(BM_CascadeDecide);

void BM_FullDecide(benchmark::State& state) {
    const RgidEntry& e = repo().lookup(default_profiles().front().lambda);
    const SyntheticExtractor ex;
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(full_decide(samples()[i++ % samples().size()].sample, e, ex));
    }
}
BENCHMARK(BM_FullDecide);

void BM_CredentialEncode(benchmark::State& state) {
    const RgidEntry& e = repo().lookup(default_profiles().front().lambda);
    const SyntheticExtractor ex;
    const auto& s = samples().front().sample;
    const auto trace = cascade_decide(s, e, CascadeConfig::sound(e), ex);
    for (auto _ : state) {
        benchmark::DoNotOptimize(encode_credential(trace, s, e, {0, 1, 2}, 1'767'225'600, ex));
    }
}
BENCHMARK(BM_CredentialEncode);

void BM_CredentialDecode(benchmark::State& state) {
    const RgidEntry& e = repo().lookup(default_profiles().front().lambda);
    const SyntheticExtractor ex;
    const auto& s = samples().front().sample;
    const auto enc = encode_credential(cascade_decide(s, e, CascadeConfig::sound(e), ex), s, e, {0, 1, 2}, 0, ex);
    for (auto _ : state) benchmark::DoNotOptimize(decode_credential(enc.payload));
}
BENCHMARK(BM_CredentialDecode);

void BM_Chi2Sf(benchmark::State& state) {
    const int df = static_cast<int>(state.range(0));
    double x = 0.5;
    for (auto _ : state) {
        benchmark::DoNotOptimize(chi2_sf(x, df));
        x = x < 400.0 ? x * 1.1 : 0.5;
    }
}
BENCHMARK(BM_Chi2Sf)->Arg(1)->Arg(3)->Arg(30);

void BM_RunPipeline(benchmark::State& state) {
    SimulationConfig c;
    c.profile = default_profiles().front();
    c.n = static_cast<std::size_t>(state.range(0));
    c.need = {{"weight", "Q"}, {"scar_area", "Q"}};
    c.provided = {{"weight", "Q"}};
    for (auto _ : state) benchmark::DoNotOptimize(run_pipeline(repo(), c));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RunPipeline)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
