#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace palette {

class Tensor;

namespace detail {

// One node of the reverse-mode tape. Leaves (parameters, inputs) have no
// parents and no backward function; interior nodes accumulate gradients
// into their parents when the tape is replayed.
struct Node {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<Tensor> parents;
    std::function<void(Node&)> backward;

    std::size_t numel() const { return data.size(); }
    // Returns the gradient buffer, zero-filled on first use.
    std::vector<double>& grad_buffer();
};

bool grad_enabled();

}  // namespace detail

// Disables graph construction for the enclosing scope (evaluation passes,
// finite-difference probes). Nest-safe.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

/// Dense n-dimensional double tensor participating in reverse-mode
/// differentiation. Copying a Tensor copies the handle, not the storage;
/// parameters shared between modules (e.g. projection matrices shared
/// across layers) alias the same node and accumulate gradients additively.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    std::size_t numel() const { return node_->data.size(); }
    // Number of rows/cols when viewed as a matrix; a 1-D tensor is one row.
    int rows() const;
    int cols() const;

    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }
    double& operator()(int i) { return node_->data[static_cast<std::size_t>(i)]; }
    double operator()(int i) const { return node_->data[static_cast<std::size_t>(i)]; }
    double& operator()(int r, int c);
    double operator()(int r, int c) const;
    // Value of a single-element tensor.
    double value() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    bool has_grad() const { return node_ && !node_->grad.empty(); }
    std::vector<double>& grad() { return node_->grad_buffer(); }
    const std::vector<double>& grad() const;
    void zero_grad();

    // Reverse-mode sweep from a scalar root. Gradients accumulate into
    // every reachable node with requires_grad set; callers zero them
    // beforehand when reusing parameters across passes.
    void backward();

    // Identity of the underlying storage (true for aliased handles).
    bool same_storage(const Tensor& other) const { return node_ == other.node_; }

    detail::Node* node() { return node_.get(); }
    const detail::Node* node() const { return node_.get(); }

    // Graph-construction hook used by the op library (and by tests that
    // need an op with a deliberately wrong backward). `backward` receives
    // the output node with its gradient fully accumulated.
    static Tensor make_op(std::vector<int> shape, std::vector<double> data,
                          std::vector<Tensor> parents,
                          std::function<void(detail::Node&)> backward);

  private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    std::shared_ptr<detail::Node> node_;
};

std::string shape_str(const std::vector<int>& shape);

}  // namespace palette
