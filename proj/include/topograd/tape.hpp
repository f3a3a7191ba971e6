#pragma once

#include <functional>
#include <map>
#include <memory>
#include <unordered_map>
#include <utility>

#include "topograd/tensor.hpp"

namespace topograd {

/// One recorded operation. `inputs` holds tape node ids of the operands
/// (-1 for constants, which never receive gradients). `saved` holds the
/// forward values the pullback needs, detached from the tape. Operations
/// with non-tensor state (index lists, factorization handles) stash it in
/// `ctx`.
struct TapeNode {
    std::string op;
    std::vector<int> inputs;
    std::vector<Tensor> saved;
    std::vector<long> iattrs;
    std::vector<double> dattrs;
    std::shared_ptr<void> ctx;
    std::vector<int> out_shape;
};

/// Maps an output adjoint to one adjoint per recorded input, same order.
using PullbackFn = std::function<std::vector<Tensor>(const TapeNode&, const Tensor&)>;

/// Dispatch table from operation id to its pullback rule.
class PullbackRegistry {
public:
    void register_pullback(const std::string& op_id, PullbackFn rule) {
        if (rules_.count(op_id))
            throw std::invalid_argument("register_pullback: duplicate registration for op '" +
                                        op_id + "'");
        rules_.emplace(op_id, std::move(rule));
    }

    /// Swap the rule for an existing op. Test hook for fault injection.
    void replace_pullback(const std::string& op_id, PullbackFn rule) {
        rules_[op_id] = std::move(rule);
    }

    bool has(const std::string& op_id) const { return rules_.count(op_id) != 0; }

    const PullbackFn& lookup(const std::string& op_id) const {
        auto it = rules_.find(op_id);
        if (it == rules_.end())
            throw std::runtime_error("backward: no pullback registered for op '" + op_id + "'");
        return it->second;
    }

    std::vector<std::string> op_ids() const {
        std::vector<std::string> ids;
        ids.reserve(rules_.size());
        for (const auto& kv : rules_) ids.push_back(kv.first);
        return ids;
    }

    /// Registry holding all built-in rules. Populated on first use by
    /// ops.hpp / sparse.hpp registration hooks.
    static PullbackRegistry& builtin();

private:
    std::map<std::string, PullbackFn> rules_;
};

inline PullbackRegistry& PullbackRegistry::builtin() {
    static PullbackRegistry reg;
    return reg;
}

/// Records one forward evaluation as a topologically ordered list of nodes.
/// A tape is confined to a single thread; independent tapes may run in
/// parallel. It is rebuilt from scratch for every optimization iteration.
class Tape {
public:
    explicit Tape(const PullbackRegistry* registry = &PullbackRegistry::builtin())
        : registry_(registry) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Place a value on the tape as a differentiable leaf.
    Tensor leaf(Tensor value) {
        TapeNode n;
        n.op = "leaf";
        n.out_shape = value.shape;
        int id = emit(std::move(n));
        value.tape = this;
        value.node = id;
        return value;
    }

    int emit(TapeNode node) {
        for (int in : node.inputs)
            if (in >= static_cast<int>(nodes_.size()))
                throw std::logic_error("Tape: input id does not precede node");
        nodes_.push_back(std::move(node));
        return static_cast<int>(nodes_.size()) - 1;
    }

    const TapeNode& node(int id) const { return nodes_.at(static_cast<size_t>(id)); }
    int size() const { return static_cast<int>(nodes_.size()); }
    const PullbackRegistry& registry() const { return *registry_; }

private:
    std::vector<TapeNode> nodes_;
    const PullbackRegistry* registry_;
};

/// Adjoints produced by a backward pass, keyed by tape node id. Every entry
/// has the shape of the tensor it is the adjoint of.
class GradientMap {
public:
    bool has(const Tensor& t) const { return t.tracked() && adj_.count(t.node) != 0; }
    bool has(int node_id) const { return adj_.count(node_id) != 0; }

    const Tensor& grad(const Tensor& t) const {
        if (!t.tracked())
            throw std::invalid_argument("GradientMap::grad: tensor is not on a tape");
        return grad(t.node);
    }

    const Tensor& grad(int node_id) const {
        auto it = adj_.find(node_id);
        if (it == adj_.end())
            throw std::invalid_argument("GradientMap::grad: no adjoint for node " +
                                        std::to_string(node_id));
        return it->second;
    }

    /// Accumulate a contribution (fan-out nodes sum their incoming adjoints).
    void accumulate(int node_id, const Tensor& g, const std::vector<int>& expect_shape) {
        if (g.shape != expect_shape)
            throw std::logic_error("GradientMap: adjoint shape " + Tensor::shape_str(g.shape) +
                                   " does not match node shape " +
                                   Tensor::shape_str(expect_shape));
        auto it = adj_.find(node_id);
        if (it == adj_.end()) {
            Tensor d = g.detached();
            adj_.emplace(node_id, std::move(d));
        } else {
            Tensor& a = it->second;
            for (long i = 0; i < a.numel(); ++i) a.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)];
        }
    }

    size_t size() const { return adj_.size(); }

private:
    std::unordered_map<int, Tensor> adj_;
};

/// Reverse pass: seeds the scalar output with adjoint 1 and sweeps the tape
/// from the output node down to node 0, applying each node's registered
/// pullback once its adjoint is fully accumulated. `hook`, when given, is
/// called with the node id right before its pullback runs.
inline GradientMap backward(const Tensor& output, const std::function<void(int)>& hook = {}) {
    if (!output.tracked())
        throw std::invalid_argument("backward: output is not on a tape");
    if (output.numel() != 1)
        throw std::invalid_argument(
            "backward: output must be a scalar (single element), got shape " +
            Tensor::shape_str(output.shape) + "; reverse mode here supports one scalar objective");

    const Tape& tape = *output.tape;
    GradientMap grads;
    grads.accumulate(output.node, Tensor::full(tape.node(output.node).out_shape, 1.0),
                     tape.node(output.node).out_shape);

    for (int id = output.node; id >= 0; --id) {
        if (!grads.has(id)) continue;
        const TapeNode& n = tape.node(id);
        if (n.op == "leaf") continue;
        const PullbackFn& rule = tape.registry().lookup(n.op);
        if (hook) hook(id);
        std::vector<Tensor> in_adj = rule(n, grads.grad(id));
        if (in_adj.size() != n.inputs.size())
            throw std::logic_error("backward: pullback for op '" + n.op + "' returned " +
                                   std::to_string(in_adj.size()) + " adjoints for " +
                                   std::to_string(n.inputs.size()) + " inputs");
        for (size_t k = 0; k < n.inputs.size(); ++k) {
            int in_id = n.inputs[k];
            if (in_id < 0) continue;  // constant operand
            grads.accumulate(in_id, in_adj[k], tape.node(in_id).out_shape);
        }
    }
    return grads;
}

/// register_pullback against the built-in registry (library extension point).
inline void register_pullback(const std::string& op_id, PullbackFn rule) {
    PullbackRegistry::builtin().register_pullback(op_id, std::move(rule));
}

}  // namespace topograd
