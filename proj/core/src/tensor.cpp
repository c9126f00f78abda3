#include "palette/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace palette {

namespace detail {

namespace {
thread_local bool g_grad_enabled = true;

std::size_t checked_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) {
            throw std::invalid_argument("tensor shape must be positive, got " + shape_str(shape));
        }
        n *= static_cast<std::size_t>(d);
    }
    return n;
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

std::vector<double>& Node::grad_buffer() {
    if (grad.empty()) {
        grad.assign(data.size(), 0.0);
    }
    return grad;
}

}  // namespace detail

NoGradGuard::NoGradGuard() : prev_(detail::grad_enabled()) {
    detail::g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { detail::g_grad_enabled = prev_; }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    auto node = std::make_shared<detail::Node>();
    const std::size_t n = detail::checked_numel(shape);
    node->shape = std::move(shape);
    node->data.assign(n, value);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    const std::size_t n = detail::checked_numel(shape);
    if (n != data.size()) {
        throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

int Tensor::rows() const {
    return ndim() >= 2 ? node_->shape[0] : 1;
}

int Tensor::cols() const {
    if (ndim() == 0) return 0;
    return ndim() >= 2 ? node_->shape[1] : node_->shape[0];
}

double& Tensor::operator()(int r, int c) {
    return node_->data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) +
                       static_cast<std::size_t>(c)];
}

double Tensor::operator()(int r, int c) const {
    return node_->data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) +
                       static_cast<std::size_t>(c)];
}

double Tensor::value() const {
    if (numel() != 1) {
        throw std::logic_error("value() requires a single-element tensor, shape is " +
                               shape_str(shape()));
    }
    return node_->data[0];
}

const std::vector<double>& Tensor::grad() const {
    if (node_->grad.empty()) {
        throw std::logic_error("gradient has not been accumulated for this tensor");
    }
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_ && !node_->grad.empty()) {
        std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }
}

Tensor Tensor::make_op(std::vector<int> shape, std::vector<double> data,
                       std::vector<Tensor> parents,
                       std::function<void(detail::Node&)> backward) {
    Tensor out = from_data(std::move(shape), std::move(data), false);
    bool needs_grad = false;
    if (detail::grad_enabled()) {
        for (const Tensor& p : parents) {
            if (p.defined() && p.requires_grad()) {
                needs_grad = true;
                break;
            }
        }
    }
    if (needs_grad) {
        out.node_->requires_grad = true;
        out.node_->parents = std::move(parents);
        out.node_->backward = std::move(backward);
    }
    return out;
}

void Tensor::backward() {
    if (!defined()) {
        throw std::logic_error("backward() on an undefined tensor");
    }
    if (numel() != 1) {
        throw std::logic_error("backward() requires a scalar root, shape is " +
                               shape_str(shape()));
    }
    // Post-order DFS (iterative) so children run before parents on replay.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    struct Frame {
        detail::Node* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    if (node_->requires_grad) {
        stack.push_back({node_.get(), 0});
        visited.insert(node_.get());
    }
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            detail::Node* p = f.node->parents[f.next_parent++].node_.get();
            if (p != nullptr && p->requires_grad && visited.insert(p).second) {
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward && !n->grad.empty()) {
            n->backward(*n);
        }
    }
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

}  // namespace palette
