#include "sfac/autograd.hpp"

namespace sfac::autograd {

Value Tape::leaf(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::make_shared<const Tensor>(std::move(v));
    nodes_.push_back(n);
    return {n->value, n};
}

Value Tape::param(const std::string& name, const Tensor& t) {
    auto it = params_.find(name);
    if (it != params_.end()) return {it->second->value, it->second};
    auto n = std::make_shared<Node>();
    n->value = std::make_shared<const Tensor>(t);
    n->param_name = name;
    nodes_.push_back(n);
    params_.emplace(name, n);
    return {n->value, n};
}

Value Tape::record(Tensor out, std::function<void(const Tensor& gy)> vjp) {
    auto n = std::make_shared<Node>();
    n->value = std::make_shared<const Tensor>(std::move(out));
    n->vjp = std::move(vjp);
    nodes_.push_back(n);
    return {n->value, n};
}

void Tape::accumulate(const NodePtr& n, const Tensor& g) {
    if (!n) return;
    if (!n->has_grad) {
        n->grad = Tensor(n->value->shape());
        n->has_grad = true;
    }
    if (!n->grad.same_shape(g)) {
        throw ShapeError("gradient shape " + g.shape_str() + " != value shape " +
                         n->grad.shape_str());
    }
    for (std::size_t i = 0; i < g.numel(); ++i) n->grad[i] += g[i];
}

void Tape::backward(const Value& loss) {
    if (nodes_.empty()) throw ValueError("backward: tape recorded no forward computation");
    if (backward_done_) throw ValueError("backward: tape already replayed");
    if (!loss.node) throw ValueError("backward: loss was not recorded on this tape");
    if (loss.val->numel() != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " + loss.val->shape_str());
    }
    backward_done_ = true;
    accumulate(loss.node, Tensor::scalar(1.0));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = **it;
        if (n.has_grad && n.vjp) n.vjp(n.grad);
    }
    grads_.clear();
    for (auto& [name, node] : params_) {
        if (node->has_grad) {
            grads_.emplace(name, node->grad);
        } else {
            grads_.emplace(name, Tensor(node->value->shape()));
        }
    }
}

const std::map<std::string, Tensor>& Tape::gradients() const { return grads_; }

}  // namespace sfac::autograd
