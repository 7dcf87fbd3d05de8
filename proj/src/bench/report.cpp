#include "catalpa/bench/report.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

namespace catalpa::bench {

namespace {

using nlohmann::json;

json pause_sample(const CollectionRecord& r, std::int64_t task) {
    return json{{"ns", r.pause_ns},
                {"work_units", r.work_units},
                {"allocations", r.allocations},
                {"budget", r.drain ? json(nullptr) : json(r.budget)},
                {"drain", r.drain},
                {"root_words", r.root_words},
                {"marked", r.marked},
                {"evacuated", r.evacuated},
                {"promoted_in_place", r.promoted_in_place},
                {"swept", r.swept},
                {"released", r.released},
                {"skipped", r.skipped},
                {"deferred_backlog", r.deferred_backlog},
                {"committed_bytes", r.committed_bytes},
                {"survivor_bytes", r.survivor_bytes},
                {"task", task}};
}

json kind_summary(const StatsReport& r) {
    const Summary s = r.task_summary();
    return json{{"count", s.count}, {"p50", s.p50}, {"p95", s.p95}, {"p99", s.p99}, {"mean", s.mean},
                {"sigma", s.sigma}};
}

} // namespace

std::optional<Format> parse_format(std::string_view s) {
    if (s == "json") return Format::Json;
    if (s == "csv") return Format::Csv;
    return std::nullopt;
}

json to_json(const Summary& s) {
    return json{{"count", s.count}, {"p50", s.p50}, {"p95", s.p95}, {"p99", s.p99}, {"mean", s.mean},
                {"sigma", s.sigma}};
}

json to_json(const StatsReport& r) {
    json out;
    out["workload"] = to_string(r.workload);
    out["collector"] = to_string(r.collector);
    out["config"] = json{{"page_bytes", r.page_bytes}, {"nursery_bytes", r.nursery_bytes}, {"seed", r.seed}};
    out["wall_clock_s"] = r.wall_clock_s;
    out["collections"] = r.collections();
    out["survival_rate"] = r.survival_rate();
    out["max_committed_bytes"] = r.max_committed_bytes;

    json pause = json::object();
    json samples = json::array();
    for (std::size_t i = 0; i < r.pauses.size(); ++i) samples.push_back(pause_sample(r.pauses[i], r.pause_task[i]));
    if (r.pauses.empty()) {
        pause["p50"] = pause["p95"] = pause["p99"] = nullptr;
    } else {
        const Summary s = r.pause_ns_summary();
        pause["p50"] = s.p50;
        pause["p95"] = s.p95;
        pause["p99"] = s.p99;
    }
    pause["samples"] = std::move(samples);
    out["pause_ns"] = std::move(pause);

    const Summary t = r.task_summary();
    json task_samples = json::array();
    for (const auto& s : r.tasks) task_samples.push_back(s.ms);
    out["task_ms"] = json{{"p50", t.p50},   {"p95", t.p95},     {"p99", t.p99},
                          {"mean", t.mean}, {"sigma", t.sigma}, {"samples", std::move(task_samples)}};

    json per_kind = json::object();
    if (r.workload == WorkloadKind::Server) {
        for (const auto& [kind, sub] : disaggregate(r)) {
            per_kind[to_string(kind)] = sub ? kind_summary(*sub) : json(nullptr);
        }
    } else {
        per_kind[to_string(r.workload)] = r.tasks.empty() ? json(nullptr) : kind_summary(r);
    }
    out["per_kind"] = std::move(per_kind);

    if (r.out_of_memory) {
        out["partial"] = true;
        out["error"] = r.error;
    }
    if (r.oracle) out["oracle"] = *r.oracle;
    return out;
}

std::string to_csv(const StatsReport& r) {
    std::ostringstream s;
    s << "index,start_ns,pause_ns,work_units,allocations,bytes_since_gc,budget,drain,root_words,marked,"
         "evacuated,promoted_in_place,swept,released,skipped,deferred_backlog,committed_bytes,survivor_bytes,task\n";
    for (std::size_t i = 0; i < r.pauses.size(); ++i) {
        const auto& c = r.pauses[i];
        s << c.index << ',' << c.start_ns << ',' << c.pause_ns << ',' << c.work_units << ',' << c.allocations << ','
          << c.bytes_since_gc << ',';
        if (!c.drain) s << c.budget; // unbounded for a draining collection
        s << ',' << (c.drain ? 1 : 0) << ',' << c.root_words << ',' << c.marked << ',' << c.evacuated << ','
          << c.promoted_in_place << ',' << c.swept << ',' << c.released << ',' << c.skipped << ','
          << c.deferred_backlog << ',' << c.committed_bytes << ',' << c.survivor_bytes << ',' << r.pause_task[i]
          << '\n';
    }
    return s.str();
}

void emit(const StatsReport& r, Format format, const std::string& path) {
    const std::string body = format == Format::Json ? to_json(r).dump(2) + "\n" : to_csv(r);
    if (path == "-") {
        std::cout << body;
        return;
    }
    std::ofstream f(path);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << body;
    if (!f.flush()) throw IoError("failed writing '" + path + "'");
}

json to_json(const std::vector<SweepPoint>& sweep) {
    json out = json::array();
    for (const auto& p : sweep) {
        json ns = json::array();
        json work = json::array();
        for (const auto& r : p.steady) {
            ns.push_back(r.pause_ns);
            work.push_back(r.work_units);
        }
        out.push_back(json{{"live_heap_mb", p.live_mb},
                           {"live_bytes", p.live_bytes},
                           {"collections", p.steady.size()},
                           {"work_units", to_json(p.work_units)},
                           {"pause_ns", to_json(p.pause_ns)},
                           {"work_samples", std::move(work)},
                           {"pause_samples", std::move(ns)}});
    }
    return out;
}

} // namespace catalpa::bench
