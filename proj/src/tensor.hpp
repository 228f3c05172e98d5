#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "common.hpp"

namespace pairvit {

namespace detail {

// One record of the compute graph. Nodes are created in construction order
// (monotone id); an op node keeps shared ownership of its inputs plus a
// backward closure holding whatever activations the gradient needs, so
// backward never re-runs forward. Reverse-id order is a valid reverse
// topological order by construction.
struct Node {
    std::vector<int> shape;
    std::vector<real> data;
    std::vector<real> grad;  // empty until first needed
    bool requires_grad = false;
    bool is_leaf = true;
    std::uint64_t id = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::size_t numel() const { return data.size(); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), real(0));
    }
};

}  // namespace detail

// Graph recording switch (thread-local). Inside a NoGradGuard scope ops
// compute values only: no parents retained, no backward closures built.
bool grad_enabled();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

// Dense row-major tensor with reverse-mode autodiff. Value-semantic handle
// to a shared graph node. Only leaf tensors (parameters, inputs) should be
// mutated through data(); op outputs are read-only by convention.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, real value, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<real> data,
                            bool requires_grad = false);
    static Tensor scalar(real value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const;
    int ndim() const;
    int dim(int i) const;
    std::size_t numel() const;
    bool requires_grad() const;
    bool is_leaf() const;

    const std::vector<real>& data() const;
    std::vector<real>& data();
    bool has_grad() const;
    const std::vector<real>& grad() const;
    std::vector<real>& grad_data();  // allocates zeros on first use
    void zero_grad();

    real item() const;  // scalar tensors only

    // Value copy detached from the graph.
    Tensor detach() const;

    std::shared_ptr<detail::Node> node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  private:
    std::shared_ptr<detail::Node> node_;
};

std::string shape_str(const std::vector<int>& shape);

// ---- differentiable ops -------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);                 // same shape
Tensor add_row(const Tensor& x, const Tensor& row);           // [r,c] + [c]
Tensor mul(const Tensor& a, const Tensor& b);                 // elementwise
Tensor scale(const Tensor& x, real s);
Tensor matmul(const Tensor& a, const Tensor& b);              // [m,k]x[k,n]
Tensor transpose(const Tensor& x);                            // 2-D
Tensor reshape(const Tensor& x, std::vector<int> shape);
Tensor concat_rows(const std::vector<Tensor>& parts);         // stack axis 0
Tensor concat_cols(const std::vector<Tensor>& parts);         // stack axis 1
Tensor slice_rows(const Tensor& x, int row_begin, int row_end);
Tensor softmax(const Tensor& x);                              // last axis
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps = 1e-6);
Tensor gelu(const Tensor& x);                                 // exact erf form
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& labels);
Tensor cosine_similarity(const Tensor& u, const Tensor& v);   // eps-guarded norms

// Accumulates gradients into every requires_grad leaf reachable from root.
// Repeated calls keep accumulating; the optimizer owns zeroing.
void backward(const Tensor& root);

}  // namespace pairvit
