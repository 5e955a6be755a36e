// Splitting step throughput: serial reference (1 worker) against the OpenMP
// per-subdomain loop. Arguments: workers, subdomains.
#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>

#include "dsdg/splitting.hpp"

using namespace dsdg;

namespace {

struct Problem {
    Mesh mesh;
    BrokenSpace space;
    SubdomainLayout layout;
    ProblemData data;

    explicit Problem(std::size_t subdomains)
        : mesh(classify_boundary(build_structured_mesh(48, 48, Rectangle{0, 0, 1, 1}), [](Point) { return true; })),
          space(mesh, 2),
          layout(build_layout(mesh, partition_cells(mesh, subdomains, 1), 4)) {
        data.u0 = [](Point x) { return std::sin(std::numbers::pi * x.x) * std::sin(std::numbers::pi * x.y); };
    }
};

void BM_ds_step(benchmark::State& state) {
    const auto workers = static_cast<std::size_t>(state.range(0));
    const Problem p(static_cast<std::size_t>(state.range(1)));
    SplitOptions options;
    options.workers = workers;
    SplitState split = ds_init(p.space, p.layout, p.data, 1e-3, options);
    for (auto _ : state) benchmark::DoNotOptimize(ds_step(split, p.data));
    state.counters["dofs"] = static_cast<double>(p.space.num_dofs());
    state.counters["steps/s"] = benchmark::Counter(static_cast<double>(state.iterations()), benchmark::Counter::kIsRate);
}

}  // namespace

BENCHMARK(BM_ds_step)->ArgsProduct({{1, 2, 4, 8}, {8}})->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
