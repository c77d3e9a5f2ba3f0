#include "rsmig/knowledge.hpp"
#include "rsmig/metrics.hpp"
#include "rsmig/skeleton_graph.hpp"

#include <benchmark/benchmark.h>

#include <string>
#include <vector>

namespace {

using namespace rsmig;

/// Deterministic token soup: doc i draws from a vocabulary of `vocab` words.
std::vector<knowledge::Bm25Doc> corpus(size_t docs, size_t len, size_t vocab) {
    std::vector<knowledge::Bm25Doc> out;
    uint64_t x = 0x9e3779b97f4a7c15ULL;
    for (size_t i = 0; i < docs; ++i) {
        knowledge::Bm25Doc d;
        d.key = "doc" + std::to_string(i);
        for (size_t t = 0; t < len; ++t) {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            d.tokens.push_back("w" + std::to_string(x % vocab));
        }
        out.push_back(std::move(d));
    }
    return out;
}

void BM_Bm25TopN(benchmark::State& state) {
    auto docs = corpus(static_cast<size_t>(state.range(0)), 120, 400);
    std::vector<std::string> query(docs[0].tokens.begin(), docs[0].tokens.begin() + 30);
    for (auto _ : state) benchmark::DoNotOptimize(knowledge::bm25_top_n(query, docs, 20));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Bm25TopN)->Arg(100)->Arg(1000)->Arg(10000);

/// Layered DAG with a few back edges planting cycles.
graph::SkeletonGraph synthetic_graph(size_t n) {
    graph::SkeletonGraph g;
    for (size_t i = 0; i < n; ++i) {
        graph::Node node;
        node.id = "f" + std::to_string(i);
        node.schedulable = true;
        g.add_node(node);
    }
    for (size_t i = 1; i < n; ++i) {
        g.add_edge("f" + std::to_string(i), "f" + std::to_string(i / 2), graph::EdgeKind::Call);
        g.add_edge("f" + std::to_string(i), "f" + std::to_string((i + 1) / 3), graph::EdgeKind::Call);
        if (i % 97 == 0) g.add_edge("f" + std::to_string(i / 3), "f" + std::to_string(i), graph::EdgeKind::Call);
    }
    return g;
}

void BM_Schedule(benchmark::State& state) {
    auto g = synthetic_graph(static_cast<size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(graph::schedule(g));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Schedule)->Arg(100)->Arg(1000)->Arg(10000);

std::string rust_source(size_t functions) {
    std::string s;
    for (size_t i = 0; i < functions; ++i) {
        s += "/// helper " + std::to_string(i) + "\n";
        s += "pub fn f" + std::to_string(i) + "(p: *mut i32) -> i32 {\n";
        s += "    let label = \"unsafe { not code }\";\n";
        s += "    let v = unsafe {\n        *p += 1;\n        *p\n    };\n";
        s += "    /* block comment { */\n";
        s += "    v + label.len() as i32\n}\n\n";
    }
    return s;
}

void BM_UnsafeScan(benchmark::State& state) {
    auto src = rust_source(static_cast<size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(metrics::scan_unsafe(src));
    state.SetBytesProcessed(state.iterations() * static_cast<int64_t>(src.size()));
}
BENCHMARK(BM_UnsafeScan)->Arg(10)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
