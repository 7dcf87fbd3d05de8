#include "catalpa/bench/runner.hpp"

#include "catalpa/epsilon_heap.hpp"
#include "catalpa/heap.hpp"

#include <chrono>
#include <memory>
#include <random>

namespace catalpa::bench {

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
}

const std::vector<CollectionRecord>& records_of(const Heap& h) { return h.records(); }
const std::vector<CollectionRecord>& records_of(const EpsilonHeap& h) { return h.records(); }

template <class H>
void drive(H& heap, const RunOptions& o, StatsReport& out) {
    const TypeIds types = register_types(heap);
    heap.freeze();
    std::unique_ptr<Oracle> oracle;
    if constexpr (std::is_same_v<H, Heap>) {
        if (o.verify) oracle = std::make_unique<Oracle>(heap);
    }

    const auto start = Clock::now();
    try {
        Mutator<H> m(heap, types, o.workload.seed);
        m.setup(o.workload.kind);
        for (std::size_t t = 0; t < o.workload.task_count; ++t) {
            const WorkloadKind kind =
                o.workload.kind == WorkloadKind::Server ? m.draw_request() : o.workload.kind;
            const std::size_t iterations = task_iterations(kind, o.workload.target_task_ms);
            const std::size_t before = heap.collections();
            const auto t0 = Clock::now();
            m.run_task(kind, iterations);
            const auto t1 = Clock::now();

            TaskSample s;
            s.kind = kind;
            s.ms = ms_between(t0, t1);
            const auto& recs = records_of(heap);
            for (std::size_t c = before; c < recs.size(); ++c) {
                s.pause_ns += recs[c].pause_ns;
                ++s.collections;
            }
            out.pause_task.resize(before, -1);
            out.pause_task.resize(recs.size(), static_cast<std::int64_t>(t));
            out.tasks.push_back(s);
        }
        out.checksum = m.checksum();
    } catch (const OutOfMemory& e) {
        out.out_of_memory = true;
        out.error = e.what();
    }
    out.wall_clock_s = ms_between(start, Clock::now()) / 1000.0;

    out.pauses = records_of(heap);
    out.pause_task.resize(out.pauses.size(), -1);
    out.max_committed_bytes = heap.committed_bytes();
    for (const auto& r : out.pauses) out.max_committed_bytes = std::max(out.max_committed_bytes, r.committed_bytes);
    out.allocations = heap.total_allocations();
    out.allocated_bytes = heap.total_allocated_bytes();
    if (oracle) out.oracle = oracle->cumulative().to_json();
}

StatsReport subset(const StatsReport& from, WorkloadKind kind) {
    StatsReport r;
    r.workload = kind;
    r.collector = from.collector;
    r.page_bytes = from.page_bytes;
    r.nursery_bytes = from.nursery_bytes;
    r.seed = from.seed;
    r.max_committed_bytes = from.max_committed_bytes;
    r.out_of_memory = from.out_of_memory;
    std::vector<std::int64_t> remap(from.tasks.size(), -1);
    for (std::size_t t = 0; t < from.tasks.size(); ++t) {
        if (from.tasks[t].kind != kind) continue;
        remap[t] = static_cast<std::int64_t>(r.tasks.size());
        r.tasks.push_back(from.tasks[t]);
        r.wall_clock_s += from.tasks[t].ms / 1000.0;
    }
    for (std::size_t c = 0; c < from.pauses.size(); ++c) {
        const std::int64_t t = from.pause_task[c];
        if (t < 0 || remap[static_cast<std::size_t>(t)] < 0) continue;
        r.pauses.push_back(from.pauses[c]);
        r.pause_task.push_back(remap[static_cast<std::size_t>(t)]);
    }
    return r;
}

} // namespace

const char* to_string(CollectorKind k) { return k == CollectorKind::Catalpa ? "catalpa" : "epsilon"; }

std::optional<CollectorKind> parse_collector(std::string_view s) {
    if (s == "catalpa") return CollectorKind::Catalpa;
    if (s == "epsilon") return CollectorKind::Epsilon;
    return std::nullopt;
}

double StatsReport::survival_rate() const {
    double survived = 0;
    double allocated = 0;
    for (const auto& r : pauses) {
        survived += static_cast<double>(r.survivor_bytes);
        allocated += static_cast<double>(r.bytes_since_gc);
    }
    return allocated > 0 ? survived / allocated : 0.0;
}

Summary StatsReport::task_summary() const {
    std::vector<double> ms;
    ms.reserve(tasks.size());
    for (const auto& t : tasks) ms.push_back(t.ms);
    return summarize(ms);
}

Summary StatsReport::pause_ns_summary() const {
    std::vector<double> ns;
    for (const auto& r : pauses) ns.push_back(static_cast<double>(r.pause_ns));
    return summarize(ns);
}

Summary StatsReport::work_summary() const {
    std::vector<double> w;
    for (const auto& r : pauses) w.push_back(static_cast<double>(r.work_units));
    return summarize(w);
}

StatsReport run_workload(const RunOptions& o) {
    o.config.validate();
    if (o.workload.task_count == 0) throw ConfigError("task count must be positive");
    if (o.verify && o.collector != CollectorKind::Catalpa) throw ConfigError("verification needs the catalpa collector");

    StatsReport out;
    out.workload = o.workload.kind;
    out.collector = o.collector;
    out.page_bytes = o.config.page_bytes;
    out.nursery_bytes = o.config.nursery_threshold_bytes;
    out.seed = o.workload.seed;
    if (o.collector == CollectorKind::Catalpa) {
        Heap heap(o.config);
        drive(heap, o, out);
    } else {
        EpsilonHeap heap(o.config);
        drive(heap, o, out);
    }
    return out;
}

std::map<WorkloadKind, std::optional<StatsReport>> disaggregate(const StatsReport& mixed) {
    if (mixed.workload != WorkloadKind::Server) {
        throw ContractViolation("only a server run mixes request kinds");
    }
    std::map<WorkloadKind, std::optional<StatsReport>> out;
    for (const auto k : kServerKinds) {
        StatsReport r = subset(mixed, k);
        if (r.tasks.empty()) {
            out[k] = std::nullopt;
        } else {
            out[k] = std::move(r);
        }
    }
    return out;
}

HeapConfig stress_config(std::uint64_t seed) {
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 1);
    static constexpr std::size_t kPages[] = {256, 512, 1024, 4096};
    static constexpr std::size_t kNurseryPages[] = {4, 8, 16, 32};
    HeapConfig c;
    c.page_bytes = kPages[rng() % 4];
    c.nursery_threshold_bytes = std::max<std::size_t>(c.page_bytes * kNurseryPages[rng() % 4], 8192);
    c.heap_reserve_bytes = 16u << 20;
    c.root_capacity_words = 4096;
    c.global_words = 16;
    return c;
}

VerifyResult verify_stress(std::uint64_t seed, std::size_t nodes, const HeapConfig& config) {
    VerifyResult out;
    Heap heap(config);
    const TypeIds types = register_types(heap);
    heap.freeze();
    Oracle oracle(heap);
    {
        Mutator<Heap> m(heap, types, seed);
        m.setup(WorkloadKind::Stress);
        while (heap.total_allocations() < nodes) m.run_task(WorkloadKind::Stress, 1);
        m.release_all();
    }
    // With nothing rooted, one draining collection must reclaim everything.
    heap.collector().collect(true);

    out.report = oracle.cumulative();
    auto& final = out.report.check("final_reclamation");
    ++final.evaluations;
    if (oracle.unreleased() != 0) {
        final.fail(std::to_string(oracle.unreleased()) + " objects survive with no roots");
    }
    out.nodes = oracle.node_count();
    out.collections = heap.collections();
    return out;
}

std::vector<SweepPoint> run_sweep(const std::vector<std::size_t>& live_mb, std::size_t churn_tasks,
                                  std::uint64_t seed, HeapConfig config, double task_ms) {
    std::vector<SweepPoint> out;
    for (const std::size_t mb : live_mb) {
        HeapConfig c = config;
        c.heap_reserve_bytes = std::max(c.heap_reserve_bytes, 2 * (mb << 20) + 8 * c.nursery_threshold_bytes);
        Heap heap(c);
        const TypeIds types = register_types(heap);
        heap.freeze();
        SweepPoint p;
        p.live_mb = mb;
        {
            Mutator<Heap> m(heap, types, seed);
            m.setup(WorkloadKind::NBody);
            p.live_bytes = m.build_live_heap(mb << 20);
            // Promote the tail of the build so the churn starts from a settled heap.
            heap.collect();
            heap.collect();
            const std::size_t first = heap.collections();
            const std::size_t iterations = task_iterations(WorkloadKind::NBody, task_ms);
            for (std::size_t t = 0; t < churn_tasks; ++t) m.run_task(WorkloadKind::NBody, iterations);
            p.steady.assign(heap.records().begin() + static_cast<std::ptrdiff_t>(first), heap.records().end());
        }
        std::vector<double> work, ns;
        for (const auto& r : p.steady) {
            work.push_back(static_cast<double>(r.work_units));
            ns.push_back(static_cast<double>(r.pause_ns));
        }
        p.work_units = summarize(work);
        p.pause_ns = summarize(ns);
        out.push_back(std::move(p));
    }
    return out;
}

} // namespace catalpa::bench
