#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "stam/error.hpp"

namespace stam {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class PoolMode { Max, Avg };
enum class ActKind { Sigmoid, Relu };

class Tape;

// Dense row-major double tensor. Doubles throughout: the gradient checks
// need the precision and the workloads are desk scale.
struct Tensor {
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad;  // same length as values once touched

    // reverse-mode linkage, populated by make_node for recorded nodes
    std::vector<std::shared_ptr<Tensor>> parents;
    std::function<void()> backward_fn;

    int ndim() const { return static_cast<int>(shape.size()); }
    std::size_t size() const { return values.size(); }

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
    void zero_grad() { grad.assign(values.size(), 0.0); }
};

using TensorPtr = std::shared_ptr<Tensor>;

// Leaf tensors live outside any tape (parameters, inputs).
TensorPtr make_tensor(Shape shape, std::vector<double> values, bool requires_grad = false);
TensorPtr make_tensor(Shape shape, double fill = 0.0, bool requires_grad = false);

// Records the forward computation in creation order, which is already a
// topological order of the graph. One reverse sweep fills every grad.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const { return grad_enabled_; }
    std::size_t node_count() const { return nodes_.size(); }

    // loss must be scalar; accumulates into the grad of every reachable
    // requires_grad tensor
    void backward(const TensorPtr& loss);

private:
    friend TensorPtr make_node(Tape&, Shape, std::vector<double>, std::vector<TensorPtr>);
    std::vector<TensorPtr> nodes_;
    bool grad_enabled_;
};

// Creates a computed node. When gradients are live the caller must then
// assign out->backward_fn (capture raw `Tensor*` for self, TensorPtr for
// parents; the node owns its closure so no cycle forms).
TensorPtr make_node(Tape& tape, Shape shape, std::vector<double> values,
                    std::vector<TensorPtr> parents);

// --- operations ------------------------------------------------------

// input [h,w,c_in], kernel [k,k,c_in,c_out], bias [c_out]; zero padding,
// cross-correlation semantics
TensorPtr conv2d(Tape& tape, const TensorPtr& input, const TensorPtr& kernel,
                 const TensorPtr& bias, int stride, int padding);

// per-channel window max/avg over [h,w,c]; max routes the gradient to the
// first maximum in row-major scan order
TensorPtr pool2d(Tape& tape, const TensorPtr& input, int window, int stride, PoolMode mode);

// reduce the channel axis of [h,w,c] to [h,w,1]
TensorPtr channel_pool(Tape& tape, const TensorPtr& input, PoolMode mode);

TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(Tape& tape, const TensorPtr& a);

// row-stabilized softmax over the last axis of [p,q]
TensorPtr softmax_rows(Tape& tape, const TensorPtr& a);

TensorPtr activation(Tape& tape, const TensorPtr& a, ActKind kind);

// elementwise; b may also be [h,w,1] against an [h,w,c] a (the attention
// gate case) — no other broadcasting exists
TensorPtr mul(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b);

TensorPtr reshape(Tape& tape, const TensorPtr& a, Shape target);
TensorPtr concat(Tape& tape, const std::vector<TensorPtr>& parts, int axis);

TensorPtr scale(Tape& tape, const TensorPtr& a, double factor);
TensorPtr sum(Tape& tape, const TensorPtr& a);          // -> [1]
TensorPtr pick(Tape& tape, const TensorPtr& a, int index);  // -> [1]

// Elementwise mean over same-shaped tensors, computed as deviations from
// the first entry so that identical inputs aggregate bit-exactly.
TensorPtr mean_stack(Tape& tape, const std::vector<TensorPtr>& parts);

// --- verification harness --------------------------------------------

// f rebuilds the scalar loss from the current x->values on a fresh tape.
// Returns max_i |analytic_i - central_i| / max(1e-8, |central_i|).
double finite_difference_check(const std::function<TensorPtr(Tape&)>& f,
                               const TensorPtr& x, double step);

}  // namespace stam
