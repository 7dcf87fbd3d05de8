#include "catalpa/heap.hpp"

#include <string>

namespace catalpa {

Heap::Heap(const HeapConfig& config)
    : pages_(config), roots_(config.root_capacity_words, config.global_words) {}

Heap::~Heap() = default;

TypeId Heap::register_type(std::string_view name, std::uint32_t slot_count,
                           std::initializer_list<std::uint32_t> ref_slots) {
    return registry_.register_type(name, slot_count, ref_slots);
}

TypeId Heap::register_type(std::string_view name, std::uint32_t slot_count,
                           const std::vector<std::uint32_t>& ref_slots) {
    return registry_.register_type(name, slot_count, ref_slots);
}

void Heap::freeze() {
    if (registry_.frozen()) return;
    registry_.freeze(pages_.page_bytes());
    pages_.attach(registry_);
    collector_ = std::make_unique<Collector>(pages_, registry_, roots_);
    collector_->set_observer(observer_);
}

Collector& Heap::collector() {
    if (!collector_) throw ContractViolation("heap is not frozen");
    return *collector_;
}

const Collector& Heap::collector() const {
    if (!collector_) throw ContractViolation("heap is not frozen");
    return *collector_;
}

void Heap::set_observer(HeapObserver* o) {
    observer_ = o;
    if (collector_) collector_->set_observer(o);
}

void Heap::check_ref(ObjectRef r) const {
    if (!pages_.is_allocated(r.address)) {
        throw ContractViolation("object reference does not address a live object");
    }
    const ObjectHeader h = header_at(r.address);
    if (h.forwarded() || h.type() != r.type) {
        throw ContractViolation("stale object reference (re-read it through a root)");
    }
}

ObjectRef Heap::construct(TypeId type, std::span<const Value> fields) {
    if (!registry_.frozen()) throw ContractViolation("construct before freeze");
    const TypeDescriptor& t = registry_.type(type);
    if (fields.size() != t.slot_count) {
        throw ContractViolation("type '" + t.name + "' expects " + std::to_string(t.slot_count) + " fields, got " +
                                std::to_string(fields.size()));
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (fields[i].is_ref() != t.ref_mask[i]) {
            throw ContractViolation("field " + std::to_string(i) + " of '" + t.name +
                                    (t.ref_mask[i] ? "' must be an object reference" : "' must be a raw word"));
        }
        if (fields[i].is_ref()) check_ref(fields[i].as_ref());
    }

    Address addr = pages_.alloc_fast(t.size_class, type);
    if (addr == 0) {
        // Children must survive a collection on the slow path; rooting them
        // pins them in place so the words in `fields` stay valid.
        scratch_.clear();
        for (const auto s : t.ref_slots) scratch_.push_back(fields[s].bits());
        std::vector<Value> pinned;
        if (observer_ != nullptr) {
            for (const auto s : t.ref_slots) pinned.push_back(fields[s]);
        }
        const FrameToken frame = roots_.push(scratch_);
        if (observer_ != nullptr) observer_->on_root_push(frame, pinned);
        try {
            addr = alloc_slow(t.size_class, type);
        } catch (...) {
            roots_.pop(frame);
            if (observer_ != nullptr) observer_->on_root_pop(frame);
            throw;
        }
        roots_.pop(frame);
        if (observer_ != nullptr) observer_->on_root_pop(frame);
    }

    Word* out = fields_at(addr);
    for (std::size_t i = 0; i < fields.size(); ++i) out[i] = fields[i].bits();
    if (fields.empty()) out[0] = 0;

    const ObjectRef r{addr, type};
    if (observer_ != nullptr) observer_->on_construct(r, fields);
    return r;
}

Address Heap::alloc_slow(ClassId c, TypeId type) {
    if (pages_.bytes_since_gc() >= pages_.config().nursery_threshold_bytes) {
        collector_->collect(false);
    }
    if (pages_.refill(c)) return pages_.alloc_fast(c, type);

    // Out of pages below the trigger: reclaim everything reclaimable once.
    collector_->collect(true);
    if (pages_.refill(c)) return pages_.alloc_fast(c, type);
    throw OutOfMemory("heap exhausted: no free or partially filled page for size class " + std::to_string(c));
}

Value Heap::read_field(ObjectRef obj, std::size_t slot) const {
    const TypeDescriptor& t = registry_.type(obj.type);
    if (slot >= t.slot_count) {
        throw ContractViolation("slot " + std::to_string(slot) + " out of range for '" + t.name + "'");
    }
    const Word w = fields_at(obj.address)[slot];
    if (!t.ref_mask[slot]) return Value::word(w);
    return Value::ref(ObjectRef{static_cast<Address>(w), header_at(static_cast<Address>(w)).type()});
}

FrameToken Heap::root_push(std::span<const Value> values) {
    scratch_.clear();
    for (const auto& v : values) scratch_.push_back(v.bits());
    const FrameToken f = roots_.push(scratch_);
    if (observer_ != nullptr) observer_->on_root_push(f, values);
    return f;
}

void Heap::root_pop(FrameToken frame) {
    roots_.pop(frame);
    if (observer_ != nullptr) observer_->on_root_pop(frame);
}

void Heap::root_set(FrameToken frame, std::size_t index, Value v) {
    roots_.set(frame, index, v.bits());
    if (observer_ != nullptr) observer_->on_root_set(frame, index, v);
}

void Heap::set_global(std::size_t index, Value v) {
    roots_.set_global(index, v.bits());
    if (observer_ != nullptr) observer_->on_global_set(index, v);
}

CollectionRecord Heap::collect() { return collector().collect(false); }

std::optional<ObjectRef> Heap::ref_from_word(Word w) const {
    const auto a = pages_.validate_candidate(w);
    if (!a || *a != w) return std::nullopt;
    return ObjectRef{*a, header_at(*a).type()};
}

std::uint64_t Heap::total_allocations() const {
    std::uint64_t n = registry_.frozen() ? pages_.allocs_since_gc() : 0;
    if (collector_) {
        for (const auto& r : collector_->records()) n += r.allocations;
    }
    return n;
}

std::uint64_t Heap::total_allocated_bytes() const {
    std::uint64_t n = registry_.frozen() ? pages_.bytes_since_gc() : 0;
    if (collector_) {
        for (const auto& r : collector_->records()) n += r.bytes_since_gc;
    }
    return n;
}

} // namespace catalpa
