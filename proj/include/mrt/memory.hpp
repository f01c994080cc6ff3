#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "mrt/common.hpp"

namespace mrt {

// Step phases within one training step. Legal order: fwd1 (extractor
// forward), fwd2 (FC forward + losses), bwd2, bwd1. idle between steps.
enum class Phase : uint8_t { fwd1, bwd1, fwd2, bwd2, idle };

inline const char* phase_name(Phase p) {
    switch (p) {
        case Phase::fwd1: return "fwd1";
        case Phase::bwd1: return "bwd1";
        case Phase::fwd2: return "fwd2";
        case Phase::bwd2: return "bwd2";
        default: return "idle";
    }
}

inline Phase backward_phase(Phase forward) {
    switch (forward) {
        case Phase::fwd1: return Phase::bwd1;
        case Phase::fwd2: return Phase::bwd2;
        default: return forward;
    }
}

// Allocation categories: param/buffer are model-related, the rest is
// computation-related (data, activations, gradients, ephemerals).
enum class Category : uint8_t { param, grad, activation, ephemeral, data, buffer };

inline const char* category_name(Category c) {
    switch (c) {
        case Category::param: return "param";
        case Category::grad: return "grad";
        case Category::activation: return "activation";
        case Category::ephemeral: return "ephemeral";
        case Category::data: return "data";
        default: return "buffer";
    }
}

struct MemoryEvent {
    int64_t step;       // monotone event counter
    int64_t delta;      // signed bytes
    Category category;
    Phase phase;
};

// Exact ledger of the engine's logical allocations. We count what the
// training step creates and releases (in units of bytes_per_element per
// tensor element), not OS RSS, so totals are deterministic and
// platform-independent. Compute itself runs in 64-bit floats; the default of
// 4 bytes/element makes totals comparable to 32-bit accelerator figures, and
// bytes_per_element=8 reports the honest in-process size.
class MemoryLedger {
  public:
    explicit MemoryLedger(int bytes_per_element = 4) : bpe_(bytes_per_element) {
        live_by_cat_.fill(0);
    }

    int bytes_per_element() const { return bpe_; }

    void record(Category cat, Phase phase, int64_t delta_bytes) {
        live_ += delta_bytes;
        live_by_cat_[static_cast<size_t>(cat)] += delta_bytes;
        if (live_ < 0 || live_by_cat_[static_cast<size_t>(cat)] < 0)
            throw std::logic_error("memory ledger: live bytes went negative (accounting bug) on " +
                                   std::string(category_name(cat)));
        if (live_ > peak_) {
            peak_ = live_;
            peak_phase_ = phase;
        }
        events_.push_back({counter_++, delta_bytes, cat, phase});
    }

    void record_elems(Category cat, Phase phase, int64_t delta_elems) {
        record(cat, phase, delta_elems * bpe_);
    }

    int64_t live_bytes() const { return live_; }
    int64_t peak_bytes() const { return peak_; }
    Phase peak_phase() const { return peak_phase_; }
    int64_t live_bytes(Category cat) const { return live_by_cat_[static_cast<size_t>(cat)]; }
    const std::vector<MemoryEvent>& events() const { return events_; }

    // Rows (step_counter, live_bytes, phase); header-only when no events.
    void write_timeline_csv(std::ostream& os) const {
        os << "step,live_bytes,phase\n";
        int64_t live = 0;
        for (const MemoryEvent& e : events_) {
            live += e.delta;
            os << e.step << ',' << live << ',' << phase_name(e.phase) << '\n';
        }
    }

  private:
    int bpe_;
    int64_t live_ = 0;
    int64_t peak_ = 0;
    Phase peak_phase_ = Phase::idle;
    int64_t counter_ = 0;
    std::array<int64_t, 6> live_by_cat_{};
    std::vector<MemoryEvent> events_;
};

} // namespace mrt
