#include <benchmark/benchmark.h>

#include "hybridlm/matrix.hpp"
#include "hybridlm/model.hpp"
#include "hybridlm/tome.hpp"

using namespace hybridlm;

namespace {

void bm_matmul(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    const Matrix a = Matrix::random_init(n, n, rng);
    const Matrix b = Matrix::random_init(n, n, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(matmul(a, b));
    }
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(bm_matmul)->Arg(64)->Arg(128)->Arg(256);

void bm_ssm_scan(benchmark::State& state) {
    const std::size_t t = static_cast<std::size_t>(state.range(0));
    const std::size_t heads = 4, n = 16, dh = 16;
    Rng rng(2);
    SsmStepParams p;
    p.heads = heads;
    p.state = n;
    p.decay = Matrix(t, heads);
    for (std::size_t i = 0; i < p.decay.size(); ++i) p.decay.data()[i] = rng.uniform();
    p.b = Matrix::random_init(t, heads * n, rng);
    p.c = Matrix::random_init(t, heads * n, rng);
    const Matrix x = Matrix::random_init(t, heads * dh, rng);
    for (auto _ : state) {
        SsmState s = SsmState::zeros(heads, n, dh);
        benchmark::DoNotOptimize(ssm_scan(x, p, s));
    }
    state.SetItemsProcessed(state.iterations() * t);
}
BENCHMARK(bm_ssm_scan)->Arg(256)->Arg(1024)->Arg(4096);

void bm_attention_prefill(benchmark::State& state) {
    const std::size_t frames = static_cast<std::size_t>(state.range(0));
    ModelConfig cfg;
    cfg.layers = ModelConfig::layers_from_pattern("A", false);
    cfg.hidden_dim = 64;
    cfg.ssm_state = 16;
    cfg.attn_heads = 4;
    cfg.mamba_heads = 4;
    cfg.vocab = 256;
    const Model model(cfg);
    const TokenSequence seq = build_synthetic_sequence(model, frames, 16, 8, 16, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.forward(seq));
    }
    state.SetItemsProcessed(state.iterations() * seq.segments.total());
}
BENCHMARK(bm_attention_prefill)->Arg(8)->Arg(32)->Arg(64);

void bm_tome_merge(benchmark::State& state) {
    const std::size_t count = static_cast<std::size_t>(state.range(0));
    const std::vector<FrameTokens> frames = build_synthetic_frames(1, count, 64, 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(tome_merge(frames[0], 16));
    }
}
BENCHMARK(bm_tome_merge)->Arg(64)->Arg(256)->Arg(768);

}  // namespace

BENCHMARK_MAIN();
