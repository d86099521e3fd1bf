// Microbenchmarks for the hot paths: the bounded-variable simplex, the
// two superhedging solvers and the price-system sampler.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "conerisk/lp.hpp"
#include "conerisk/market.hpp"
#include "conerisk/pricing.hpp"
#include "conerisk/riskcore.hpp"
#include "conerisk/rng.hpp"
#include "conerisk/tree.hpp"

namespace {

using namespace conerisk;

// uniform binomial market with doubling/halving mids and a 10% half-spread
struct Fixture {
    ScenarioTree tree;
    MarketModel market;
};

Fixture binomial_market(int horizon) {
    std::vector<NodeSpec> ns{{0, 0, -1, 0.0}};
    for (long long id = 1; id < (2LL << horizon) - 1; ++id) {
        const int t = 64 - __builtin_clzll(id + 1) - 1;
        ns.push_back({id, t, (id - 1) / 2, t == horizon ? 1.0 / (1 << horizon) : 0.0});
    }
    ScenarioTree tree(horizon, 2, ns);
    std::vector<BidAskSpec> specs(tree.num_nodes());
    for (int v = 0; v < tree.num_nodes(); ++v) {
        double mid = 1.0;
        for (long long id = tree.ext_id(v); id > 0; id = (id - 1) / 2) mid *= (id % 2 ? 2.0 : 0.5);
        specs[v].bid.push_back(mid * 0.9);
        specs[v].ask.push_back(mid * 1.1);
    }
    return {tree, MarketModel::from_bid_ask(tree, specs)};
}

std::vector<double> bench_claim(const ScenarioTree& tree) {
    auto gen = rng_for(424242, 0);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> x(static_cast<size_t>(tree.num_leaves()) * tree.assets());
    for (auto& e : x) e = u(gen);
    return x;
}

// dense transportation LP with unit marginals; size n gives n^2 variables
void BM_SimplexTransport(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    auto gen = rng_for(5150, static_cast<std::uint64_t>(n));
    std::uniform_real_distribution<double> c(0.0, 1.0);
    lp::LinearProgram prog;
    for (int i = 0; i < n * n; ++i) prog.add_var(0.0, lp::kInf, c(gen));
    for (int i = 0; i < n; ++i) {
        lp::RowCoeffs row;
        for (int j = 0; j < n; ++j) row.emplace_back(i * n + j, 1.0);
        prog.add_row(lp::Rel::EQ, 1.0, std::move(row));
    }
    for (int j = 0; j < n; ++j) {
        lp::RowCoeffs col;
        for (int i = 0; i < n; ++i) col.emplace_back(i * n + j, 1.0);
        prog.add_row(lp::Rel::EQ, 1.0, std::move(col));
    }
    for (auto _ : state) benchmark::DoNotOptimize(lp::solve(prog));
}
BENCHMARK(BM_SimplexTransport)->Arg(4)->Arg(8)->Arg(16);

void BM_PrimalSuperhedge(benchmark::State& state) {
    const auto f = binomial_market(static_cast<int>(state.range(0)));
    const auto x = bench_claim(f.tree);
    const auto spec = RiskSpec::shp_proportional();
    for (auto _ : state) benchmark::DoNotOptimize(rho_primal(f.tree, f.market, spec, x, 0));
}
BENCHMARK(BM_PrimalSuperhedge)->Arg(1)->Arg(2)->Arg(3);

void BM_DualSuperhedge(benchmark::State& state) {
    const auto f = binomial_market(static_cast<int>(state.range(0)));
    const auto x = bench_claim(f.tree);
    const auto spec = RiskSpec::shp_proportional();
    for (auto _ : state) benchmark::DoNotOptimize(rho_dual_exact(f.tree, f.market, spec, x, 0));
}
BENCHMARK(BM_DualSuperhedge)->Arg(1)->Arg(2)->Arg(3);

void BM_SamplePriceSystems(benchmark::State& state) {
    const auto f = binomial_market(2);
    for (auto _ : state)
        benchmark::DoNotOptimize(
            sample_price_systems(f.tree, f.market, static_cast<int>(state.range(0)), 20240817));
}
BENCHMARK(BM_SamplePriceSystems)->Arg(8)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
