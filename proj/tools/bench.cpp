// Benchmark and verification driver.
//
//   bench run    --workload nbody --collector catalpa --tasks 100 --out run.json
//   bench verify --seed 7 --nodes 10000
//   bench sweep  --live-heap-mb 1,4,16,64
//
// Exit status: 0 success, 1 invariant failure, 2 configuration error.

#include "catalpa/bench/report.hpp"
#include "catalpa/bench/runner.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace catalpa;
using namespace catalpa::bench;

namespace {

constexpr int kOk = 0;
constexpr int kInvariant = 1;
constexpr int kConfig = 2;

struct HeapFlags {
    std::size_t page_bytes = HeapConfig{}.page_bytes;
    std::size_t nursery_bytes = HeapConfig{}.nursery_threshold_bytes;
    std::size_t reserve_mb = 0; // 0: chosen per collector

    void add(CLI::App* app) {
        app->add_option("--page-bytes", page_bytes, "Page size in bytes (power of two)")->capture_default_str();
        app->add_option("--nursery-bytes", nursery_bytes, "Allocation volume that triggers a collection")
            ->capture_default_str();
        app->add_option("--reserve-mb", reserve_mb, "Address range to reserve (default 256, epsilon 4096)");
    }

    HeapConfig config(CollectorKind c) const {
        HeapConfig h;
        h.page_bytes = page_bytes;
        h.nursery_threshold_bytes = nursery_bytes;
        const std::size_t mb = reserve_mb != 0 ? reserve_mb : (c == CollectorKind::Epsilon ? 4096 : 256);
        h.heap_reserve_bytes = mb << 20;
        h.validate();
        return h;
    }
};

void write_json(const nlohmann::json& j, const std::string& path) {
    if (path == "-") {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream f(path);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << j.dump(2) << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Catalpa collector benchmarks and oracle verification"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "Run a workload and emit statistics");
    std::string workload = "nbody";
    std::string collector = "catalpa";
    std::string format = "json";
    std::string out = "-";
    Workload w;
    HeapFlags run_heap;
    bool verify_run = false;
    run->add_option("--workload", workload, "nbody|raytracer|db|server|stress")->capture_default_str();
    run->add_option("--collector", collector, "catalpa|epsilon")->capture_default_str();
    run->add_option("--tasks", w.task_count, "Number of tasks")->capture_default_str();
    run->add_option("--seed", w.seed, "Workload seed")->capture_default_str();
    run->add_option("--task-ms", w.target_task_ms, "Target task duration in ms")->capture_default_str();
    run->add_option("--out", out, "Output path, - for stdout")->capture_default_str();
    run->add_option("--format", format, "json|csv")->capture_default_str();
    run->add_flag("--verify", verify_run, "Attach the oracle (catalpa only; slow)");
    run_heap.add(run);

    // verify
    auto* verify = app.add_subcommand("verify", "Seeded stress runs checked by the shadow oracle");
    std::uint64_t verify_seed = 1;
    std::size_t nodes = 10000;
    std::size_t runs = 1;
    verify->add_option("--seed", verify_seed, "First seed")->capture_default_str();
    verify->add_option("--nodes", nodes, "Allocations per run")->capture_default_str();
    verify->add_option("--runs", runs, "Consecutive seeds to run")->capture_default_str();
    std::size_t verify_page = 0;
    std::size_t verify_nursery = 0;
    verify->add_option("--page-bytes", verify_page, "Override the seeded page size");
    verify->add_option("--nursery-bytes", verify_nursery, "Override the seeded nursery size");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Pause work against live old-heap size");
    std::vector<std::size_t> live_mb{1, 2, 4, 8, 16, 32, 64};
    std::size_t churn_tasks = 100;
    std::uint64_t sweep_seed = 1;
    double sweep_task_ms = 5.0;
    std::string sweep_out = "-";
    HeapFlags sweep_heap;
    sweep->add_option("--live-heap-mb", live_mb, "Live heap sizes in MB")->delimiter(',')->capture_default_str();
    sweep->add_option("--tasks", churn_tasks, "Churn tasks per size")->capture_default_str();
    sweep->add_option("--seed", sweep_seed, "Workload seed")->capture_default_str();
    sweep->add_option("--task-ms", sweep_task_ms, "Target task duration in ms")->capture_default_str();
    sweep->add_option("--out", sweep_out, "Output path, - for stdout")->capture_default_str();
    sweep_heap.add(sweep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        if (run->parsed()) {
            const auto kind = parse_workload(workload);
            const auto coll = parse_collector(collector);
            const auto fmt = parse_format(format);
            if (!kind) throw ConfigError("unknown workload '" + workload + "'");
            if (!coll) throw ConfigError("unknown collector '" + collector + "'");
            if (!fmt) throw ConfigError("unknown format '" + format + "'");
            w.kind = *kind;
            RunOptions o{w, *coll, run_heap.config(*coll), verify_run};
            const StatsReport r = run_workload(o);
            emit(r, *fmt, out);
            if (r.out_of_memory) {
                std::cerr << "bench: " << r.error << " (partial results written; raise --reserve-mb)\n";
                return kConfig;
            }
            if (r.oracle && !(*r.oracle)["passed"].get<bool>()) return kInvariant;
            return kOk;
        }
        if (verify->parsed()) {
            if (nodes == 0 || runs == 0) throw ConfigError("--nodes and --runs must be positive");
            nlohmann::json results = nlohmann::json::array();
            bool ok = true;
            for (std::size_t i = 0; i < runs; ++i) {
                const std::uint64_t seed = verify_seed + i;
                HeapConfig c = stress_config(seed);
                if (verify_page != 0) c.page_bytes = verify_page;
                if (verify_nursery != 0) c.nursery_threshold_bytes = verify_nursery;
                c.validate();
                const VerifyResult v = verify_stress(seed, nodes, c);
                ok = ok && v.passed();
                nlohmann::json j = v.report.to_json();
                j["seed"] = seed;
                j["nodes"] = v.nodes;
                j["collections"] = v.collections;
                j["page_bytes"] = c.page_bytes;
                j["nursery_bytes"] = c.nursery_threshold_bytes;
                results.push_back(std::move(j));
            }
            std::cout << (runs == 1 ? results[0] : results).dump(2) << '\n';
            return ok ? kOk : kInvariant;
        }
        if (sweep->parsed()) {
            if (live_mb.empty()) throw ConfigError("--live-heap-mb needs at least one size");
            const auto points =
                run_sweep(live_mb, churn_tasks, sweep_seed, sweep_heap.config(CollectorKind::Catalpa), sweep_task_ms);
            write_json(to_json(points), sweep_out);
            return kOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "bench: " << e.what() << '\n';
        return kConfig;
    } catch (const IoError& e) {
        std::cerr << "bench: " << e.what() << '\n';
        return kConfig;
    } catch (const InvariantViolation& e) {
        std::cerr << "bench: invariant violated: " << e.what() << '\n';
        return kInvariant;
    } catch (const ContractViolation& e) {
        std::cerr << "bench: contract violated: " << e.what() << '\n';
        return kInvariant;
    } catch (const OutOfMemory& e) {
        std::cerr << "bench: " << e.what() << '\n';
        return kConfig;
    }
    return kOk;
}
