#include "tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "kernels.hpp"

namespace pairvit {

using detail::Node;

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
        n *= std::size_t(d);
    }
    return n;
}

std::shared_ptr<Node> new_node(std::vector<int> shape) {
    auto node = std::make_shared<Node>();
    node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    node->data.resize(shape_numel(shape));
    node->shape = std::move(shape);
    return node;
}

// Attaches graph edges when recording is on and some input needs gradients.
Tensor finish_op(std::shared_ptr<Node> out, std::vector<std::shared_ptr<Node>> parents,
                 std::function<void(Node&)> backward_fn) {
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& p : parents)
            if (p->requires_grad) needs = true;
    }
    if (needs) {
        out->requires_grad = true;
        out->is_leaf = false;
        out->parents = std::move(parents);
        out->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(out));
}

void require_2d(const Tensor& t, const char* what) {
    if (t.ndim() != 2)
        throw ShapeError(std::string(what) + " expects a 2-D tensor, got " + shape_str(t.shape()));
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    auto node = new_node(std::move(shape));
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::full(std::vector<int> shape, real value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.node()->data.begin(), t.node()->data.end(), value);
    return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<real> data, bool requires_grad) {
    auto node = new_node(std::move(shape));
    if (node->data.size() != data.size())
        throw ShapeError("from_data: " + std::to_string(data.size()) + " values for shape " +
                         shape_str(node->shape));
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(real value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

const std::vector<int>& Tensor::shape() const { return node_->shape; }
int Tensor::ndim() const { return int(node_->shape.size()); }
int Tensor::dim(int i) const { return node_->shape.at(std::size_t(i)); }
std::size_t Tensor::numel() const { return node_->numel(); }
bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::is_leaf() const { return node_->is_leaf; }
const std::vector<real>& Tensor::data() const { return node_->data; }
std::vector<real>& Tensor::data() { return node_->data; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }

const std::vector<real>& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

std::vector<real>& Tensor::grad_data() {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), real(0));
}

real Tensor::item() const {
    if (numel() != 1)
        throw ShapeError("item() on non-scalar tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

Tensor Tensor::detach() const { return from_data(node_->shape, node_->data, false); }

// ---- ops ------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    auto out = new_node(a.shape());
    const auto& av = a.data();
    const auto& bv = b.data();
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = av[i] + bv[i];
    return finish_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            p->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
    });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
    require_2d(x, "add_row");
    const int r = x.dim(0), c = x.dim(1);
    if (row.numel() != std::size_t(c))
        throw ShapeError("add_row: row " + shape_str(row.shape()) + " does not match " +
                         shape_str(x.shape()));
    auto out = new_node(x.shape());
    const auto& xv = x.data();
    const auto& rv = row.data();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            out->data[std::size_t(i) * c + j] = xv[std::size_t(i) * c + j] + rv[std::size_t(j)];
    return finish_op(std::move(out), {x.node(), row.node()}, [r, c](Node& self) {
        auto& xp = *self.parents[0];
        auto& rp = *self.parents[1];
        if (xp.requires_grad) {
            xp.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) xp.grad[i] += self.grad[i];
        }
        if (rp.requires_grad) {
            rp.ensure_grad();
            for (int j = 0; j < c; ++j) {
                real s = 0;
                for (int i = 0; i < r; ++i) s += self.grad[std::size_t(i) * c + j];
                rp.grad[std::size_t(j)] += s;
            }
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    auto out = new_node(a.shape());
    const auto& av = a.data();
    const auto& bv = b.data();
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = av[i] * bv[i];
    return finish_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
        auto& ap = *self.parents[0];
        auto& bp = *self.parents[1];
        if (ap.requires_grad) {
            ap.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                ap.grad[i] += self.grad[i] * bp.data[i];
        }
        if (bp.requires_grad) {
            bp.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                bp.grad[i] += self.grad[i] * ap.data[i];
        }
    });
}

Tensor scale(const Tensor& x, real s) {
    auto out = new_node(x.shape());
    const auto& xv = x.data();
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = xv[i] * s;
    return finish_op(std::move(out), {x.node()}, [s](Node& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * s;
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    auto out = new_node({m, n});
    kernels::matmul_nn(a.data().data(), b.data().data(), out->data.data(), m, k, n, false);
    return finish_op(std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
        auto& ap = *self.parents[0];
        auto& bp = *self.parents[1];
        if (ap.requires_grad) {
            ap.ensure_grad();
            // dA = G * B^T
            kernels::matmul_nt(self.grad.data(), bp.data.data(), ap.grad.data(), m, n, k, true);
        }
        if (bp.requires_grad) {
            bp.ensure_grad();
            // dB = A^T * G
            kernels::matmul_tn(ap.data.data(), self.grad.data(), bp.grad.data(), k, m, n, true);
        }
    });
}

Tensor transpose(const Tensor& x) {
    require_2d(x, "transpose");
    const int r = x.dim(0), c = x.dim(1);
    auto out = new_node({c, r});
    const auto& xv = x.data();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            out->data[std::size_t(j) * r + i] = xv[std::size_t(i) * c + j];
    return finish_op(std::move(out), {x.node()}, [r, c](Node& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
                p.grad[std::size_t(i) * c + j] += self.grad[std::size_t(j) * r + i];
    });
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
    auto out = new_node(std::move(shape));
    if (out->numel() != x.numel())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(out->shape));
    out->data = x.data();
    return finish_op(std::move(out), {x.node()}, [](Node& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    int cols = -1, rows = 0;
    for (const auto& t : parts) {
        require_2d(t, "concat_rows");
        if (cols < 0) cols = t.dim(1);
        if (t.dim(1) != cols)
            throw ShapeError("concat_rows: column mismatch " + shape_str(t.shape()));
        rows += t.dim(0);
    }
    auto out = new_node({rows, cols});
    std::vector<std::shared_ptr<Node>> parents;
    std::size_t off = 0;
    for (const auto& t : parts) {
        std::copy(t.data().begin(), t.data().end(), out->data.begin() + off);
        off += t.numel();
        parents.push_back(t.node());
    }
    return finish_op(std::move(out), std::move(parents), [](Node& self) {
        std::size_t off = 0;
        for (auto& p : self.parents) {
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::size_t i = 0; i < p->numel(); ++i) p->grad[i] += self.grad[off + i];
            }
            off += p->numel();
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    int rows = -1, cols = 0;
    for (const auto& t : parts) {
        require_2d(t, "concat_cols");
        if (rows < 0) rows = t.dim(0);
        if (t.dim(0) != rows) throw ShapeError("concat_cols: row mismatch " + shape_str(t.shape()));
        cols += t.dim(1);
    }
    auto out = new_node({rows, cols});
    std::vector<std::shared_ptr<Node>> parents;
    int coff = 0;
    for (const auto& t : parts) {
        const int c = t.dim(1);
        for (int i = 0; i < rows; ++i)
            std::copy(t.data().begin() + std::size_t(i) * c,
                      t.data().begin() + std::size_t(i + 1) * c,
                      out->data.begin() + std::size_t(i) * cols + coff);
        coff += c;
        parents.push_back(t.node());
    }
    return finish_op(std::move(out), std::move(parents), [rows, cols](Node& self) {
        int coff = 0;
        for (auto& p : self.parents) {
            const int c = p->shape[1];
            if (p->requires_grad) {
                p->ensure_grad();
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < c; ++j)
                        p->grad[std::size_t(i) * c + j] +=
                            self.grad[std::size_t(i) * cols + coff + j];
            }
            coff += c;
        }
    });
}

Tensor slice_rows(const Tensor& x, int row_begin, int row_end) {
    require_2d(x, "slice_rows");
    const int r = x.dim(0), c = x.dim(1);
    if (row_begin < 0 || row_end > r || row_begin >= row_end)
        throw ShapeError("slice_rows: range [" + std::to_string(row_begin) + "," +
                         std::to_string(row_end) + ") out of " + shape_str(x.shape()));
    auto out = new_node({row_end - row_begin, c});
    std::copy(x.data().begin() + std::size_t(row_begin) * c,
              x.data().begin() + std::size_t(row_end) * c, out->data.begin());
    return finish_op(std::move(out), {x.node()}, [row_begin, c](Node& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        const std::size_t off = std::size_t(row_begin) * c;
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[off + i] += self.grad[i];
    });
}

Tensor softmax(const Tensor& x) {
    if (x.ndim() < 1) throw ShapeError("softmax: needs at least one axis");
    const int n = x.shape().back();
    const int rows = int(x.numel() / std::size_t(n));
    auto out = new_node(x.shape());
    kernels::softmax_rows(x.data().data(), out->data.data(), rows, n);
    return finish_op(std::move(out), {x.node()}, [rows, n](Node& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        kernels::softmax_backward_rows(self.data.data(), self.grad.data(), p.grad.data(), rows, n,
                                       true);
    });
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps) {
    const int n = x.shape().back();
    if (gamma.numel() != std::size_t(n) || beta.numel() != std::size_t(n))
        throw ShapeError("layernorm: affine params " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " do not match last axis of " +
                         shape_str(x.shape()));
    if (eps <= 0) throw ShapeError("layernorm: eps must be positive");
    const int rows = int(x.numel() / std::size_t(n));
    auto out = new_node(x.shape());
    auto xhat = std::make_shared<std::vector<real>>(x.numel());
    auto inv_std = std::make_shared<std::vector<real>>(rows);
    kernels::layernorm_rows(x.data().data(), gamma.data().data(), beta.data().data(),
                            out->data.data(), xhat->data(), inv_std->data(), rows, n, eps);
    return finish_op(std::move(out), {x.node(), gamma.node(), beta.node()},
                     [rows, n, xhat, inv_std](Node& self) {
                         auto& xp = *self.parents[0];
                         auto& gp = *self.parents[1];
                         auto& bp = *self.parents[2];
                         xp.ensure_grad();
                         gp.ensure_grad();
                         bp.ensure_grad();
                         kernels::layernorm_backward_rows(xhat->data(), inv_std->data(),
                                                          gp.data.data(), self.grad.data(),
                                                          xp.grad.data(), gp.grad.data(),
                                                          bp.grad.data(), rows, n);
                     });
}

Tensor gelu(const Tensor& x) {
    auto out = new_node(x.shape());
    kernels::gelu(x.data().data(), out->data.data(), x.numel());
    return finish_op(std::move(out), {x.node()}, [](Node& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        kernels::gelu_backward(p.data.data(), self.grad.data(), p.grad.data(), self.grad.size(),
                               true);
    });
}

Tensor sum(const Tensor& x) {
    auto out = new_node({1});
    real s = 0;
    for (real v : x.data()) s += v;
    out->data[0] = s;
    return finish_op(std::move(out), {x.node()}, [](Node& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (auto& g : p.grad) g += self.grad[0];
    });
}

Tensor mean(const Tensor& x) {
    auto out = new_node({1});
    real s = 0;
    for (real v : x.data()) s += v;
    const real inv = real(1) / real(x.numel());
    out->data[0] = s * inv;
    return finish_op(std::move(out), {x.node()}, [inv](Node& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (auto& g : p.grad) g += self.grad[0] * inv;
    });
}

Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& labels) {
    require_2d(logits, "cross_entropy_logits");
    const int b = logits.dim(0), c = logits.dim(1);
    if (c < 2) throw ShapeError("cross_entropy_logits: need at least 2 classes");
    if (labels.size() != std::size_t(b))
        throw ShapeError("cross_entropy_logits: " + std::to_string(labels.size()) +
                         " labels for batch " + std::to_string(b));
    for (int i = 0; i < b; ++i)
        if (labels[std::size_t(i)] < 0 || labels[std::size_t(i)] >= c)
            throw std::out_of_range("cross_entropy_logits: label " +
                                    std::to_string(labels[std::size_t(i)]) + " at row " +
                                    std::to_string(i) + " outside [0," + std::to_string(c) + ")");
    auto out = new_node({1});
    auto probs = std::make_shared<std::vector<real>>(logits.numel());
    const auto& lv = logits.data();
    real loss = 0;
    for (int i = 0; i < b; ++i) {
        const real* row = lv.data() + std::size_t(i) * c;
        real mx = row[0];
        for (int j = 1; j < c; ++j) mx = row[j] > mx ? row[j] : mx;
        real se = 0;
        for (int j = 0; j < c; ++j) se += std::exp(row[j] - mx);
        const real lse = mx + std::log(se);
        for (int j = 0; j < c; ++j)
            (*probs)[std::size_t(i) * c + j] = std::exp(row[j] - lse);
        loss += lse - row[labels[std::size_t(i)]];
    }
    out->data[0] = loss / real(b);
    return finish_op(std::move(out), {logits.node()}, [b, c, probs, labels](Node& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        const real g = self.grad[0] / real(b);
        for (int i = 0; i < b; ++i)
            for (int j = 0; j < c; ++j)
                p.grad[std::size_t(i) * c + j] +=
                    g * ((*probs)[std::size_t(i) * c + j] -
                         (j == labels[std::size_t(i)] ? real(1) : real(0)));
    });
}

Tensor cosine_similarity(const Tensor& u, const Tensor& v) {
    if (u.numel() != v.numel())
        throw ShapeError("cosine_similarity: size mismatch " + shape_str(u.shape()) + " vs " +
                         shape_str(v.shape()));
    constexpr real kNormEps = real(1e-8);
    const auto& uv = u.data();
    const auto& vv = v.data();
    real dot = 0, nu2 = 0, nv2 = 0;
    for (std::size_t i = 0; i < uv.size(); ++i) {
        dot += uv[i] * vv[i];
        nu2 += uv[i] * uv[i];
        nv2 += vv[i] * vv[i];
    }
    const real nu = std::sqrt(nu2), nv = std::sqrt(nv2);
    if (nu < kNormEps || nv < kNormEps)
        warnf("cosine_similarity: near-zero norm (%g, %g), eps-guarded result", double(nu),
              double(nv));
    const real inv = real(1) / ((nu + kNormEps) * (nv + kNormEps));
    auto out = new_node({1});
    out->data[0] = dot * inv;
    return finish_op(std::move(out), {u.node(), v.node()}, [dot, nu, nv, inv](Node& self) {
        auto& up = *self.parents[0];
        auto& vp = *self.parents[1];
        const real g = self.grad[0];
        const real c = dot * inv;
        if (up.requires_grad) {
            up.ensure_grad();
            const real self_term = nu > 0 ? c / ((nu + kNormEps) * nu) : real(0);
            for (std::size_t i = 0; i < up.data.size(); ++i)
                up.grad[i] += g * (vp.data[i] * inv - self_term * up.data[i]);
        }
        if (vp.requires_grad) {
            vp.ensure_grad();
            const real self_term = nv > 0 ? c / ((nv + kNormEps) * nv) : real(0);
            for (std::size_t i = 0; i < vp.data.size(); ++i)
                vp.grad[i] += g * (up.data[i] * inv - self_term * vp.data[i]);
        }
    });
}

void backward(const Tensor& root) {
    if (root.numel() != 1)
        throw ShapeError("backward: root must be scalar, got " + shape_str(root.shape()));
    auto root_node = root.node();
    if (!root_node->requires_grad) return;

    // Reachable requires_grad subgraph, then reverse construction order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root_node.get()};
    seen.insert(root_node.get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents)
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
    std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });

    // Fresh pass state for interior nodes; leaves keep accumulating.
    for (Node* n : order) {
        if (!n->is_leaf) n->grad.assign(n->data.size(), real(0));
        else n->ensure_grad();
    }
    root_node->grad[0] += real(1);
    for (Node* n : order)
        if (n->backward_fn) n->backward_fn(*n);
}

}  // namespace pairvit
