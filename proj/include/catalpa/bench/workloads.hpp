#pragma once

#include "catalpa/mutator.hpp"
#include "catalpa/object_header.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

namespace catalpa::bench {

enum class WorkloadKind : std::uint8_t { NBody, Raytracer, Db, Server, Stress };

const char* to_string(WorkloadKind k);
std::optional<WorkloadKind> parse_workload(std::string_view s);

/// The kinds a server run draws its requests from.
inline constexpr std::array<WorkloadKind, 3> kServerKinds{WorkloadKind::NBody, WorkloadKind::Raytracer,
                                                          WorkloadKind::Db};

struct Workload {
    WorkloadKind kind = WorkloadKind::NBody;
    std::size_t task_count = 100;
    std::uint64_t seed = 1;
    double target_task_ms = 5.0;
};

/// Iterations of a kind's kernel for one task. Fixed per kind (calibrated
/// once on an optimized build), so the work is machine-independent and runs
/// stay deterministic.
std::size_t task_iterations(WorkloadKind kind, double target_task_ms);

/// Global root slots owned by the workloads.
namespace slot {
inline constexpr std::size_t kNil = 0;
inline constexpr std::size_t kBodies = 1;
inline constexpr std::size_t kScene = 2;
inline constexpr std::size_t kIndex = 3;
inline constexpr std::size_t kLive = 4;
inline constexpr std::size_t kStress = 8; // kStress .. kStress + kStressGlobals - 1
inline constexpr std::size_t kStressGlobals = 4;
} // namespace slot

struct TypeIds {
    TypeId nil, vec3, body, cell, sphere, ray, hit, record, node, row;
    std::array<TypeId, 5> stress;
};

/// Registers the workload types in a fixed order so both heaps agree.
template <MutatorHeap H>
TypeIds register_types(H& heap) {
    TypeIds t{};
    t.nil = heap.register_type("Nil", 0);
    t.vec3 = heap.register_type("Vec3", 3);
    t.body = heap.register_type("Body", 3, {0, 1});      // pos, vel, mass
    t.cell = heap.register_type("Cell", 2, {0, 1});      // head, tail
    t.sphere = heap.register_type("Sphere", 3, {0});     // center, radius, albedo
    t.ray = heap.register_type("Ray", 2, {0, 1});        // origin, direction
    t.hit = heap.register_type("Hit", 3, {1});           // t, normal, albedo
    t.record = heap.register_type("Record", 3);          // key, value, version
    t.node = heap.register_type("Node", 4, {0, 1, 2});   // left, right, record, key
    t.row = heap.register_type("Row", 3, {2});           // key, derived, record
    t.stress[0] = heap.register_type("S.Leaf", 0);
    t.stress[1] = heap.register_type("S.Raw", 2);
    t.stress[2] = heap.register_type("S.Pair", 2, {0, 1});
    t.stress[3] = heap.register_type("S.Mixed", 3, {0, 2});
    t.stress[4] = heap.register_type("S.Wide", 6, {0, 1, 3, 4});
    return t;
}

inline ObjectRef ref_of_word(Word w) {
    return ObjectRef{static_cast<Address>(w), header_at(static_cast<Address>(w)).type()};
}

/// Allocation-profile analogues of the benchmark programs, written against
/// the mutator contract: any reference held across an allocation lives in a
/// root frame, everything else is re-read through a rooted parent.
template <MutatorHeap H>
class Mutator {
public:
    static constexpr std::size_t kBodies = 24;
    static constexpr std::size_t kSpheres = 12;
    static constexpr std::size_t kInitialRecords = 2048;
    static constexpr std::uint64_t kKeySpace = 4096;
    static constexpr std::uint64_t kRange = 48;
    static constexpr double kUpdateRate = 0.03;

    Mutator(H& heap, const TypeIds& types, std::uint64_t seed) : heap_(heap), t_(types), rng_(seed) {
        heap_.set_global(slot::kNil, Value::ref(heap_.construct(t_.nil, {})));
    }

    ~Mutator() {
        while (!stress_frames_.empty()) {
            heap_.root_pop(stress_frames_.back().token);
            stress_frames_.pop_back();
        }
    }

    Mutator(const Mutator&) = delete;
    Mutator& operator=(const Mutator&) = delete;

    /// Builds the long-lived state the kind needs; server builds all three.
    void setup(WorkloadKind kind) {
        switch (kind) {
        case WorkloadKind::NBody: setup_nbody(); break;
        case WorkloadKind::Raytracer: setup_scene(); break;
        case WorkloadKind::Db: setup_db(); break;
        case WorkloadKind::Server:
            for (const auto k : kServerKinds) setup(k);
            break;
        case WorkloadKind::Stress: setup_stress(); break;
        }
    }

    void run_task(WorkloadKind kind, std::size_t iterations) {
        switch (kind) {
        case WorkloadKind::NBody:
            for (std::size_t i = 0; i < iterations; ++i) nbody_step();
            break;
        case WorkloadKind::Raytracer:
            for (std::size_t i = 0; i < iterations; ++i) trace_pixel();
            break;
        case WorkloadKind::Db:
            for (std::size_t i = 0; i < iterations; ++i) transaction();
            break;
        case WorkloadKind::Stress:
            for (std::size_t i = 0; i < iterations; ++i) stress_op();
            break;
        case WorkloadKind::Server: throw ContractViolation("server tasks are dispatched per request kind");
        }
    }

    /// Server request kind for the next task.
    WorkloadKind draw_request() { return kServerKinds[rng_() % kServerKinds.size()]; }

    /// Grows a list of records reachable from a global until it holds at
    /// least `bytes` of object data. Returns the bytes built.
    std::size_t build_live_heap(std::size_t bytes);

    /// Pops stress frames and clears every global.
    void release_all();

    std::uint64_t checksum() const { return checksum_; }

private:
    struct StressFrame {
        FrameToken token;
        std::vector<Value> values;
    };

    ObjectRef nil() const { return ref_of_word(heap_.global(slot::kNil)); }
    bool is_nil(ObjectRef r) const { return r.address == heap_.global(slot::kNil); }
    ObjectRef global_ref(std::size_t g) const { return ref_of_word(heap_.global(g)); }
    double real(ObjectRef r, std::size_t s) const { return heap_.read_field(r, s).as_real(); }
    Word word(ObjectRef r, std::size_t s) const { return heap_.read_field(r, s).bits(); }
    ObjectRef field(ObjectRef r, std::size_t s) const { return heap_.read_field(r, s).as_ref(); }
    ObjectRef vec3(double x, double y, double z) {
        return heap_.construct(t_.vec3, {Value::real(x), Value::real(y), Value::real(z)});
    }
    void mix(Word w) { checksum_ = (checksum_ ^ w) * 0x100000001b3ULL; }
    void mix(double d) { mix(std::bit_cast<Word>(d)); }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }

    void setup_nbody();
    void nbody_step();
    void setup_scene();
    void trace_pixel();
    void setup_db();
    void transaction();
    void update(std::uint64_t key, std::uint64_t value);
    void query(std::uint64_t lo, std::uint64_t hi);
    void setup_stress();
    void stress_op();
    void push_stress_frame(std::size_t slots);
    void stress_store(Value v);
    std::optional<ObjectRef> stress_pick();
    ObjectRef stress_construct();

    H& heap_;
    TypeIds t_;
    std::mt19937_64 rng_;
    std::uint64_t checksum_ = 0xcbf29ce484222325ULL;
    std::uint64_t version_ = 0;
    std::size_t pixel_ = 0;
    std::vector<StressFrame> stress_frames_;
};

// ---------------------------------------------------------------- nbody
// High churn of small fixed-size tuples: every pairwise interaction builds
// fresh Vec3 values; only the new bodies survive a step.

template <MutatorHeap H>
void Mutator<H>::setup_nbody() {
    RootScope<H> f(heap_, 2);
    f.set(0, nil());
    for (std::size_t i = 0; i < kBodies; ++i) {
        const double a = 2.0 * M_PI * static_cast<double>(i) / kBodies;
        const double r = 1.0 + 0.5 * uniform();
        f.set(1, vec3(-std::sin(a) * 0.3, std::cos(a) * 0.3, 0.01 * (uniform() - 0.5)));
        const ObjectRef pos = vec3(r * std::cos(a), r * std::sin(a), 0.1 * (uniform() - 0.5));
        const ObjectRef body =
            heap_.construct(t_.body, {Value::ref(pos), Value::ref(f.ref(1)), Value::real(0.5 + uniform())});
        f.set(0, heap_.construct(t_.cell, {Value::ref(body), Value::ref(f.ref(0))}));
    }
    heap_.set_global(slot::kBodies, Value::ref(f.ref(0)));
}

template <MutatorHeap H>
void Mutator<H>::nbody_step() {
    constexpr double dt = 0.001;
    constexpr double soften = 0.01;
    std::array<double, kBodies> px, py, pz, vx, vy, vz, m;
    ObjectRef c = global_ref(slot::kBodies);
    for (std::size_t i = 0; i < kBodies; ++i) {
        const ObjectRef b = field(c, 0);
        const ObjectRef p = field(b, 0);
        const ObjectRef v = field(b, 1);
        px[i] = real(p, 0), py[i] = real(p, 1), pz[i] = real(p, 2);
        vx[i] = real(v, 0), vy[i] = real(v, 1), vz[i] = real(v, 2);
        m[i] = real(b, 2);
        c = field(c, 1);
    }

    RootScope<H> f(heap_, 3); // new list, acceleration, velocity
    f.set(0, nil());
    double energy = 0;
    for (std::size_t i = 0; i < kBodies; ++i) {
        f.set(1, vec3(0, 0, 0));
        for (std::size_t j = 0; j < kBodies; ++j) {
            if (j == i) continue;
            const ObjectRef d = vec3(px[j] - px[i], py[j] - py[i], pz[j] - pz[i]);
            const double dx = real(d, 0), dy = real(d, 1), dz = real(d, 2);
            const double d2 = dx * dx + dy * dy + dz * dz + soften;
            const double s = m[j] / (d2 * std::sqrt(d2));
            const ObjectRef a = f.ref(1);
            f.set(1, vec3(real(a, 0) + dx * s, real(a, 1) + dy * s, real(a, 2) + dz * s));
        }
        const ObjectRef a = f.ref(1);
        const double nvx = vx[i] + real(a, 0) * dt, nvy = vy[i] + real(a, 1) * dt, nvz = vz[i] + real(a, 2) * dt;
        f.set(2, vec3(nvx, nvy, nvz));
        const ObjectRef pos = vec3(px[i] + nvx * dt, py[i] + nvy * dt, pz[i] + nvz * dt);
        const ObjectRef body = heap_.construct(t_.body, {Value::ref(pos), Value::ref(f.ref(2)), Value::real(m[i])});
        f.set(0, heap_.construct(t_.cell, {Value::ref(body), Value::ref(f.ref(0))}));
        energy += 0.5 * m[i] * (nvx * nvx + nvy * nvy + nvz * nvz);
    }
    heap_.set_global(slot::kBodies, Value::ref(f.ref(0)));
    mix(energy);
}

// ------------------------------------------------------------ raytracer
// Short-lived small tree fragments: rays, offsets, hits and normals per
// pixel against a long-lived scene.

template <MutatorHeap H>
void Mutator<H>::setup_scene() {
    RootScope<H> f(heap_, 1);
    f.set(0, nil());
    for (std::size_t i = 0; i < kSpheres; ++i) {
        const ObjectRef center = vec3(4.0 * (uniform() - 0.5), 4.0 * (uniform() - 0.5), 6.0 + 4.0 * uniform());
        const ObjectRef s = heap_.construct(
            t_.sphere, {Value::ref(center), Value::real(0.4 + 0.8 * uniform()), Value::real(0.2 + 0.8 * uniform())});
        f.set(0, heap_.construct(t_.cell, {Value::ref(s), Value::ref(f.ref(0))}));
    }
    heap_.set_global(slot::kScene, Value::ref(f.ref(0)));
}

template <MutatorHeap H>
void Mutator<H>::trace_pixel() {
    constexpr std::size_t kWidth = 96;
    const double u = static_cast<double>(pixel_ % kWidth) / kWidth - 0.5;
    const double v = static_cast<double>((pixel_ / kWidth) % kWidth) / kWidth - 0.5;
    ++pixel_;

    RootScope<H> f(heap_, 3); // ray, scene cursor, best hit
    {
        const double len = std::sqrt(u * u + v * v + 1.0);
        f.set(2, vec3(0, 0, 0));
        const ObjectRef dir = vec3(u / len, v / len, 1.0 / len);
        f.set(0, heap_.construct(t_.ray, {Value::ref(f.ref(2)), Value::ref(dir)}));
    }
    const ObjectRef o = field(f.ref(0), 0);
    const double ox = real(o, 0), oy = real(o, 1), oz = real(o, 2);
    const ObjectRef d = field(f.ref(0), 1);
    const double dx = real(d, 0), dy = real(d, 1), dz = real(d, 2);

    double best = 1e30;
    f.set(2, nil());
    f.set(1, global_ref(slot::kScene));
    while (!is_nil(f.ref(1))) {
        const ObjectRef s = field(f.ref(1), 0);
        const ObjectRef c = field(s, 0);
        const double cx = real(c, 0), cy = real(c, 1), cz = real(c, 2);
        const double r = real(s, 1);
        const double albedo = real(s, 2);
        const ObjectRef oc = vec3(ox - cx, oy - cy, oz - cz);
        const double ocx = real(oc, 0), ocy = real(oc, 1), ocz = real(oc, 2);
        const double b = ocx * dx + ocy * dy + ocz * dz;
        const double disc = b * b - (ocx * ocx + ocy * ocy + ocz * ocz - r * r);
        if (disc > 0) {
            const double t = -b - std::sqrt(disc);
            if (t > 1e-6 && t < best) {
                best = t;
                const ObjectRef p = vec3(ox + dx * t, oy + dy * t, oz + dz * t);
                const double hx = real(p, 0), hy = real(p, 1), hz = real(p, 2);
                const ObjectRef n = vec3((hx - cx) / r, (hy - cy) / r, (hz - cz) / r);
                f.set(2, heap_.construct(t_.hit, {Value::real(t), Value::ref(n), Value::real(albedo)}));
            }
        }
        f.set(1, field(f.ref(1), 1));
    }

    double shade = 0.05;
    if (!is_nil(f.ref(2))) {
        const ObjectRef n = field(f.ref(2), 1);
        const double lambert = std::max(0.0, -0.577 * real(n, 0) + 0.577 * real(n, 1) - 0.577 * real(n, 2));
        const ObjectRef color = vec3(lambert * real(f.ref(2), 2), lambert, 0.0);
        shade += real(color, 0) + 0.1 * real(color, 1);
    }
    mix(shade);
}

// ------------------------------------------------------------------- db
// A persistent binary search tree of records: range queries build result
// lists that die young; updates path-copy, retiring old index nodes in the
// RC space.

template <MutatorHeap H>
void Mutator<H>::setup_db() {
    heap_.set_global(slot::kIndex, Value::ref(nil()));
    for (std::size_t i = 0; i < kInitialRecords; ++i) update(rng_() % kKeySpace, rng_());
}

template <MutatorHeap H>
void Mutator<H>::transaction() {
    if (uniform() < kUpdateRate) {
        update(rng_() % kKeySpace, rng_());
    } else {
        const std::uint64_t lo = rng_() % kKeySpace;
        query(lo, lo + kRange);
    }
}

template <MutatorHeap H>
void Mutator<H>::update(std::uint64_t key, std::uint64_t value) {
    struct Step {
        bool went_left;
        Word key;
    };
    // Read the whole path before allocating anything.
    std::vector<Step> path;
    std::vector<Value> pinned; // per step: sibling, record; then the found node's children
    ObjectRef cur = global_ref(slot::kIndex);
    bool found = false;
    while (!is_nil(cur)) {
        const Word k = word(cur, 3);
        if (k == key) {
            pinned.push_back(Value::ref(field(cur, 0)));
            pinned.push_back(Value::ref(field(cur, 1)));
            found = true;
            break;
        }
        const bool left = key < k;
        path.push_back(Step{left, k});
        pinned.push_back(Value::ref(field(cur, left ? 1 : 0)));
        pinned.push_back(Value::ref(field(cur, 2)));
        cur = field(cur, left ? 0 : 1);
    }
    RootScope<H> pins(heap_, pinned);
    const Value nil_v = Value::ref(nil());
    const ObjectRef rec =
        heap_.construct(t_.record, {Value::word(key), Value::word(value), Value::word(++version_)});
    const std::size_t base = path.size() * 2;
    ObjectRef sub = heap_.construct(t_.node, {found ? pinned[base] : nil_v, found ? pinned[base + 1] : nil_v,
                                              Value::ref(rec), Value::word(key)});
    for (std::size_t i = path.size(); i-- > 0;) {
        const Value sib = pinned[2 * i];
        const Value r = pinned[2 * i + 1];
        const Value s = Value::ref(sub);
        sub = heap_.construct(t_.node, {path[i].went_left ? s : sib, path[i].went_left ? sib : s, r,
                                        Value::word(path[i].key)});
    }
    heap_.set_global(slot::kIndex, Value::ref(sub));
    mix(static_cast<Word>(path.size()));
}

template <MutatorHeap H>
void Mutator<H>::query(std::uint64_t lo, std::uint64_t hi) {
    // In-order walk of [lo, hi) without allocating; collect the records.
    std::vector<Value> records;
    std::vector<ObjectRef> stack;
    ObjectRef cur = global_ref(slot::kIndex);
    while (!is_nil(cur) || !stack.empty()) {
        while (!is_nil(cur)) {
            const Word k = word(cur, 3);
            if (k < lo) {
                cur = field(cur, 1);
            } else {
                stack.push_back(cur);
                cur = field(cur, 0);
            }
        }
        if (stack.empty()) break;
        const ObjectRef n = stack.back();
        stack.pop_back();
        const Word k = word(n, 3);
        if (k >= hi) break;
        records.push_back(Value::ref(field(n, 2)));
        cur = field(n, 1);
    }

    RootScope<H> pins(heap_, records);
    RootScope<H> f(heap_, 1);
    f.set(0, nil());
    for (const Value& r : records) {
        const ObjectRef rec = r.as_ref();
        const Word derived = word(rec, 1) ^ (word(rec, 2) << 7);
        const ObjectRef row = heap_.construct(t_.row, {Value::word(word(rec, 0)), Value::word(derived), r});
        f.set(0, heap_.construct(t_.cell, {Value::ref(row), Value::ref(f.ref(0))}));
    }
    Word acc = 0;
    for (ObjectRef c = f.ref(0); !is_nil(c); c = field(c, 1)) acc += word(field(c, 0), 1);
    mix(acc);
}

// --------------------------------------------------------------- stress
// Seeded random DAG building and dropping over a stack of root frames, with
// deliberate interior-pointer collisions among the raw root words.

template <MutatorHeap H>
void Mutator<H>::push_stress_frame(std::size_t slots) {
    StressFrame f;
    f.values.assign(slots, Value::word(0));
    f.token = heap_.root_push(f.values);
    stress_frames_.push_back(std::move(f));
}

template <MutatorHeap H>
void Mutator<H>::setup_stress() {
    push_stress_frame(8);
}

template <MutatorHeap H>
void Mutator<H>::stress_store(Value v) {
    StressFrame& f = stress_frames_[rng_() % stress_frames_.size()];
    const std::size_t i = rng_() % f.values.size();
    f.values[i] = v;
    heap_.root_set(f.token, i, v);
}

template <MutatorHeap H>
std::optional<ObjectRef> Mutator<H>::stress_pick() {
    static constexpr std::array<std::array<int, 4>, 5> kRefSlots{{
        {-1, -1, -1, -1}, {-1, -1, -1, -1}, {0, 1, -1, -1}, {0, 2, -1, -1}, {0, 1, 3, 4}}};
    std::optional<ObjectRef> r;
    for (int attempt = 0; attempt < 4 && !r; ++attempt) {
        if (rng_() % 8 == 0) {
            const Word g = heap_.global(slot::kStress + rng_() % slot::kStressGlobals);
            if (g != 0) r = ref_of_word(g);
            continue;
        }
        const StressFrame& f = stress_frames_[rng_() % stress_frames_.size()];
        const Value& v = f.values[rng_() % f.values.size()];
        if (v.is_ref()) r = v.as_ref();
    }
    // Wander down a few edges so sharing reaches deep into the graph.
    for (int depth = static_cast<int>(rng_() % 4); r && depth > 0; --depth) {
        std::size_t kind = 0;
        while (kind < t_.stress.size() && t_.stress[kind] != r->type) ++kind;
        if (kind == t_.stress.size()) break;
        const auto& refs = kRefSlots[kind];
        const auto n = static_cast<std::size_t>(std::count_if(refs.begin(), refs.end(), [](int s) { return s >= 0; }));
        if (n == 0) break;
        r = field(*r, static_cast<std::size_t>(refs[rng_() % n]));
    }
    return r;
}

template <MutatorHeap H>
ObjectRef Mutator<H>::stress_construct() {
    const std::size_t kind = rng_() % t_.stress.size();
    const TypeId type = t_.stress[kind];
    static constexpr std::array<std::uint32_t, 5> kSlots{0, 2, 2, 3, 6};
    static constexpr std::array<std::uint8_t, 5> kRefMask{0b0, 0b0, 0b11, 0b101, 0b11011};
    std::array<Value, 6> fields{};
    for (std::uint32_t s = 0; s < kSlots[kind]; ++s) {
        if ((kRefMask[kind] >> s) & 1) {
            const auto r = stress_pick();
            fields[s] = Value::ref(r ? *r : nil());
        } else {
            fields[s] = Value::word(rng_() & 0xffff);
        }
    }
    return heap_.construct(type, std::span<const Value>(fields.data(), kSlots[kind]));
}

template <MutatorHeap H>
void Mutator<H>::stress_op() {
    const auto r = rng_() % 100;
    if (r < 45) {
        stress_store(Value::ref(stress_construct()));
    } else if (r < 60) {
        if (const auto p = stress_pick()) stress_store(Value::ref(*p));
    } else if (r < 70) {
        // Raw words: small integers, or an interior pointer into a live object.
        const auto p = stress_pick();
        if (p && rng_() % 2 == 0) {
            stress_store(Value::word(p->address + kWordBytes * (rng_() % 2)));
        } else {
            stress_store(Value::word(rng_() % 4096));
        }
    } else if (r < 77) {
        if (stress_frames_.size() < 10) push_stress_frame(1 + rng_() % 6);
    } else if (r < 85) {
        if (stress_frames_.size() > 1) {
            heap_.root_pop(stress_frames_.back().token);
            stress_frames_.pop_back();
        }
    } else if (r < 90) {
        const auto p = stress_pick();
        heap_.set_global(slot::kStress + rng_() % slot::kStressGlobals, p ? Value::ref(*p) : Value::word(0));
    } else {
        stress_store(Value::word(0));
    }
}

// ------------------------------------------------------------ utilities

template <MutatorHeap H>
std::size_t Mutator<H>::build_live_heap(std::size_t bytes) {
    constexpr std::size_t kItemBytes = 32 + 24; // Record + Cell
    RootScope<H> f(heap_, 1);
    f.set(0, heap_.global(slot::kLive) != 0 ? global_ref(slot::kLive) : nil());
    std::size_t built = 0;
    for (std::uint64_t i = 0; built < bytes; ++i, built += kItemBytes) {
        const ObjectRef rec = heap_.construct(t_.record, {Value::word(i), Value::word(rng_()), Value::word(0)});
        f.set(0, heap_.construct(t_.cell, {Value::ref(rec), Value::ref(f.ref(0))}));
    }
    heap_.set_global(slot::kLive, Value::ref(f.ref(0)));
    return built;
}

template <MutatorHeap H>
void Mutator<H>::release_all() {
    while (!stress_frames_.empty()) {
        heap_.root_pop(stress_frames_.back().token);
        stress_frames_.pop_back();
    }
    for (std::size_t g = 0; g < slot::kStress + slot::kStressGlobals; ++g) heap_.set_global(g, Value::word(0));
}

} // namespace catalpa::bench
