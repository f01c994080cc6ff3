#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "mrt/memory.hpp"
#include "mrt/tensor.hpp"

namespace mrt {

class GradGraph;

using BackwardFn = std::function<void(GradGraph&, const Tensor& grad_out)>;

// One recorded op. `saved` holds forward tensors the backward closure needs;
// entries that alias other nodes' buffers contribute no owned bytes. A
// barrier node keeps the value flowing forward but its backward is a no-op,
// so gradient traversal never crosses it.
struct GraphNode {
    const char* op;
    std::vector<int> inputs;
    std::vector<Tensor> saved;
    Tensor value;
    int64_t owned_elems; // elements first allocated by this node (value + fresh saved buffers)
    Phase phase;
    bool is_leaf;
    bool is_barrier;
    BackwardFn backward;
};

// Define-by-run reverse-mode tape. Nodes are appended in execution order, so
// insertion order is a topological order and backward() is a single reverse
// sweep. A graph lives for one forward/backward; build a fresh one per step.
class GradGraph {
  public:
    GradGraph() = default;
    GradGraph(const GradGraph&) = delete;
    GradGraph& operator=(const GradGraph&) = delete;

    void attach_ledger(MemoryLedger* ledger) { ledger_ = ledger; }
    MemoryLedger* ledger() const { return ledger_; }

    void set_phase(Phase p) { phase_ = p; }
    Phase phase() const { return phase_; }

    size_t size() const { return nodes_.size(); }
    const GraphNode& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

    // Marks a value as a differentiable leaf (a parameter or a probed input).
    // The buffer is owned by the caller; the graph accounts no bytes for it.
    Tensor leaf(const Tensor& value) {
        Tensor t = value;
        t.set_node(append(GraphNode{"leaf", {}, {}, t, 0, phase_, true, false, nullptr}));
        return t;
    }

    // Value-identical tensor behind a stop-gradient barrier. Detaching an
    // untracked tensor is a no-op.
    Tensor detach(const Tensor& x) {
        if (!x.tracked()) return x;
        Tensor t = x;
        t.set_node(append(GraphNode{"barrier", {x.node()}, {}, t, 0, phase_, false, true, nullptr}));
        return t;
    }

    // Records an op output. `owned_elems` counts elements newly allocated by
    // the op (defaults to the value size; pass 0 for aliasing ops).
    Tensor emit(const char* op, Tensor value, std::vector<int> inputs, std::vector<Tensor> saved,
                BackwardFn backward, int64_t extra_saved_elems = 0) {
        int64_t owned = value.numel() + extra_saved_elems;
        value.set_node(append(GraphNode{op, std::move(inputs), std::move(saved), value, owned, phase_,
                                        false, false, std::move(backward)}));
        return value;
    }
    Tensor emit_alias(const char* op, Tensor value, std::vector<int> inputs, BackwardFn backward) {
        value.set_node(
            append(GraphNode{op, std::move(inputs), {}, value, 0, phase_, false, false, std::move(backward)}));
        return value;
    }

    void accumulate_grad(int node_id, const Tensor& g) {
        auto& slot = grads_[static_cast<size_t>(node_id)];
        if (!slot.defined()) {
            const Tensor& v = nodes_[static_cast<size_t>(node_id)].value;
            require_same_shape(v, g, "gradient accumulate");
            slot = Tensor::zeros(v.shape());
            if (ledger_) ledger_->record_elems(Category::grad, phase_, slot.numel());
        }
        double* acc = slot.mutable_data();
        const double* src = g.data();
        const int64_t n = slot.numel();
        for (int64_t i = 0; i < n; ++i) acc[i] += src[i];
    }

    bool has_grad(const Tensor& t) const {
        return t.tracked() && grads_[static_cast<size_t>(t.node())].defined();
    }

    // Gradient of the last backward() w.r.t. t; zeros when no path reached it.
    Tensor grad(const Tensor& t) const {
        if (!t.tracked()) throw contract_error("grad(): tensor is not tracked in this graph");
        const Tensor& g = grads_[static_cast<size_t>(t.node())];
        return g.defined() ? g : Tensor::zeros(t.shape());
    }

    // Reverse topological sweep from a scalar seed. Gradients accumulate
    // additively across fan-out; traversal halts at barrier nodes. Values and
    // non-leaf gradients are released as soon as the sweep is done with them,
    // which is what makes the memory profile peak during backward and then
    // fall. Leaf gradients survive for the optimizer.
    void backward(const Tensor& seed) {
        if (!seed.tracked()) throw contract_error("backward(): seed is not tracked");
        if (seed.numel() != 1) throw contract_error("backward(): seed must be scalar-valued");
        const int start = seed.node();

        set_phase(backward_phase(nodes_[static_cast<size_t>(start)].phase));
        accumulate_grad(start, Tensor::full(seed.shape(), 1.0));

        for (int i = start; i >= 0; --i) {
            GraphNode& n = nodes_[static_cast<size_t>(i)];
            Tensor& g = grads_[static_cast<size_t>(i)];
            if (!g.defined()) continue;
            set_phase(backward_phase(n.phase));
            if (!n.is_leaf && !n.is_barrier && n.backward) n.backward(*this, g);
            if (!n.is_leaf) release_node(i);
        }
    }

    // Drops everything still held: remaining activations, leaf gradients.
    void clear() {
        for (size_t i = 0; i < nodes_.size(); ++i) {
            release_node(static_cast<int>(i));
            Tensor& g = grads_[i];
            if (g.defined()) {
                if (ledger_) ledger_->record_elems(Category::grad, phase_, -g.numel());
                g = Tensor();
            }
        }
        nodes_.clear();
        grads_.clear();
        released_.clear();
    }

    ~GradGraph() {
        // Account releases on destruction so a ledger attached to a
        // shorter-lived graph still balances.
        if (ledger_) {
            try {
                clear();
            } catch (...) {
            }
        }
    }

  private:
    int append(GraphNode node) {
        int id = static_cast<int>(nodes_.size());
        if (ledger_ && node.owned_elems > 0)
            ledger_->record_elems(Category::activation, node.phase, node.owned_elems);
        nodes_.push_back(std::move(node));
        grads_.emplace_back();
        released_.push_back(false);
        return id;
    }

    void release_node(int i) {
        GraphNode& n = nodes_[static_cast<size_t>(i)];
        if (released_[static_cast<size_t>(i)]) return;
        released_[static_cast<size_t>(i)] = true;
        if (ledger_ && n.owned_elems > 0)
            ledger_->record_elems(Category::activation, phase_, -n.owned_elems);
        n.saved.clear();
        n.value = n.is_leaf ? n.value : Tensor(); // leaf values stay owned by the caller
        // gradient of a non-leaf is consumed once its own backward ran
        Tensor& g = grads_[static_cast<size_t>(i)];
        if (!n.is_leaf && g.defined()) {
            if (ledger_) ledger_->record_elems(Category::grad, phase_, -g.numel());
            g = Tensor();
        }
    }

    std::vector<GraphNode> nodes_;
    std::vector<Tensor> grads_;
    std::vector<char> released_;
    MemoryLedger* ledger_ = nullptr;
    Phase phase_ = Phase::idle;
};

} // namespace mrt
