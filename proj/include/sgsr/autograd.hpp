#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sgsr/error.hpp"
#include "sgsr/tensor.hpp"

namespace sgsr::ag {

struct Node;
using Var = std::shared_ptr<Node>;

// One vertex of the reverse-mode graph. `value` is the forward result; `grad`
// stays empty until backward touches it. Children own their parents, so a
// graph lives exactly as long as someone holds its root.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<Var> parents;
    // Reads this->grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.empty()) grad = Tensor(value.shape);
    }
};

// Trainable leaf (parameters, checked inputs).
inline Var leaf(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return n;
}

// Non-trainable leaf (fixed kernels, masks, targets).
inline Var constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = "constant";
    return n;
}

inline Var make_node(Tensor value, const char* op, std::vector<Var> parents,
                     std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = op;
    bool needs = false;
    for (const Var& p : parents) needs = needs || (p && p->requires_grad);
    n->requires_grad = needs;
    if (needs) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return n;
}

// Iterative post-order over the parent DAG.
inline std::vector<Node*> topo_order(const Var& root) {
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p && p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

// Reverse sweep from a scalar root; parameter/input grads accumulate in place.
inline void backward(const Var& root) {
    if (!root) throw NumericError("backward: null root");
    if (root->value.size() != 1)
        throw DimensionError("backward: root must be scalar, got " + root->value.shape.str());
    if (!root->requires_grad) return;
    std::vector<Node*> order = topo_order(root);
    root->ensure_grad();
    root->grad.data[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

inline void zero_grad(const Var& v) {
    if (v) v->grad = Tensor();
}

// Walks the graph and rejects any non-finite forward value, naming the op.
inline void assert_all_finite(const Var& root) {
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        if (!all_finite(n->value))
            throw NumericError(std::string("non-finite value produced by op '") + n->op + "'");
        for (const Var& p : n->parents)
            if (p && seen.insert(p.get()).second) stack.push_back(p.get());
    }
}

} // namespace sgsr::ag
