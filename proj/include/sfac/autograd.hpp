#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sfac/tensor.hpp"

namespace sfac::autograd {

using TensorPtr = std::shared_ptr<const Tensor>;

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One executed primitive. The vjp closure reads this node's output gradient
// and accumulates into its parents' gradient buffers.
struct Node {
    TensorPtr value;
    Tensor grad;  // allocated on first accumulation
    bool has_grad = false;
    std::string param_name;  // non-empty for parameter leaves
    std::function<void(const Tensor& gy)> vjp;
};

// Forward value: always carries the tensor; carries a node only while a tape
// is recording.
struct Value {
    TensorPtr val;
    NodePtr node;

    static Value raw(Tensor t) { return {std::make_shared<const Tensor>(std::move(t)), nullptr}; }
    const Tensor& tensor() const { return *val; }
    bool tracked() const { return node != nullptr; }
};

// Ordered record of executed primitives. Replaying backward visits ops in
// exact reverse execution order; gradients accumulate additively. Single
// threaded; one backward pass per recorded forward.
class Tape {
public:
    Value leaf(Tensor v);
    // Parameter leaf; repeated registration under the same name returns the
    // same node so gradients accumulate into one slot.
    Value param(const std::string& name, const Tensor& t);
    Value record(Tensor out, std::function<void(const Tensor& gy)> vjp);

    static void accumulate(const NodePtr& n, const Tensor& g);

    // loss must be scalar (one element); errors if the tape is empty or
    // backward already ran.
    void backward(const Value& loss);

    // Parameter-name -> gradient for every parameter leaf touched by the
    // recorded computation. Valid after backward().
    const std::map<std::string, Tensor>& gradients() const;

    std::size_t size() const { return nodes_.size(); }

private:
    std::vector<NodePtr> nodes_;
    std::map<std::string, NodePtr> params_;
    std::map<std::string, Tensor> grads_;
    bool backward_done_ = false;
};

}  // namespace sfac::autograd
