#include "voxmesh/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace voxmesh {

const char* dtype_name(Dtype dt) { return dt == Dtype::F32 ? "f32" : "f64"; }

std::size_t dtype_size(Dtype dt) { return dt == Dtype::F32 ? 4 : 8; }

Dtype dtype_from_name(const std::string& name) {
    if (name == "f32") return Dtype::F32;
    if (name == "f64") return Dtype::F64;
    throw std::runtime_error("unknown dtype name: " + name);
}

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        require(d > 0, "shape extents must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::runtime_error(msg);
}

namespace detail {

void Node::alloc_value() {
    if (dtype == Dtype::F32) {
        vf.assign(static_cast<std::size_t>(n), 0.0f);
    } else {
        vd.assign(static_cast<std::size_t>(n), 0.0);
    }
}

void Node::alloc_grad_zeroed() {
    if (dtype == Dtype::F32) {
        gf.assign(static_cast<std::size_t>(n), 0.0f);
    } else {
        gd.assign(static_cast<std::size_t>(n), 0.0);
    }
    grad_alloc = true;
}

void Node::zero_grad() {
    if (!grad_alloc) return;
    std::fill(gf.begin(), gf.end(), 0.0f);
    std::fill(gd.begin(), gd.end(), 0.0);
}

double Node::value_at(std::int64_t i) const {
    return dtype == Dtype::F32 ? static_cast<double>(vf[static_cast<std::size_t>(i)])
                               : vd[static_cast<std::size_t>(i)];
}

double Node::grad_at(std::int64_t i) const {
    return dtype == Dtype::F32 ? static_cast<double>(gf[static_cast<std::size_t>(i)])
                               : gd[static_cast<std::size_t>(i)];
}

NodePtr make_node(Shape shape, Dtype dt) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->dtype = dt;
    n->n = shape_numel(n->shape);
    n->alloc_value();
    return n;
}

Tensor make_op(Shape shape, Dtype dt, const std::vector<Tensor>& inputs,
               std::function<void(Node&)> backward) {
    auto node = make_node(std::move(shape), dt);
    bool needs = false;
    for (const auto& in : inputs) {
        require(in.defined(), "op input is undefined");
        if (in.requires_grad()) needs = true;
    }
    if (needs) {
        node->requires_grad = true;
        node->parents.reserve(inputs.size());
        for (const auto& in : inputs) node->parents.push_back(in.node());
        node->backward_fn = std::move(backward);
    }
    return Tensor(std::move(node));
}

}  // namespace detail

using detail::Node;
using detail::NodePtr;

Tensor Tensor::zeros(Shape shape, Dtype dt, bool requires_grad) {
    auto n = detail::make_node(std::move(shape), dt);
    n->requires_grad = requires_grad;
    n->leaf = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, double v, Dtype dt, bool requires_grad) {
    Tensor t = zeros(std::move(shape), dt, requires_grad);
    if (dt == Dtype::F32) {
        std::fill(t.node()->vf.begin(), t.node()->vf.end(), static_cast<float>(v));
    } else {
        std::fill(t.node()->vd.begin(), t.node()->vd.end(), v);
    }
    return t;
}

Tensor Tensor::from_values(Shape shape, const std::vector<double>& vals, Dtype dt,
                           bool requires_grad) {
    Tensor t = zeros(std::move(shape), dt, requires_grad);
    require(static_cast<std::int64_t>(vals.size()) == t.numel(),
            "from_values: value count " + std::to_string(vals.size()) + " does not match shape " +
                shape_str(t.shape()));
    if (dt == Dtype::F32) {
        for (std::size_t i = 0; i < vals.size(); ++i) t.node()->vf[i] = static_cast<float>(vals[i]);
    } else {
        t.node()->vd = vals;
    }
    return t;
}

const Shape& Tensor::shape() const { return node_->shape; }

std::int64_t Tensor::dim(int i) const {
    require(i >= 0 && i < rank(), "dim index out of range");
    return node_->shape[static_cast<std::size_t>(i)];
}

int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }

std::int64_t Tensor::numel() const { return node_->n; }

Dtype Tensor::dtype() const { return node_->dtype; }

bool Tensor::requires_grad() const { return node_->requires_grad; }

bool Tensor::is_leaf() const { return node_->leaf; }

double Tensor::item() const {
    require(numel() == 1, "item(): tensor has " + std::to_string(numel()) + " elements");
    return node_->value_at(0);
}

double Tensor::value_at(std::int64_t flat) const {
    require(flat >= 0 && flat < numel(), "value_at: index out of range");
    return node_->value_at(flat);
}

double Tensor::grad_at(std::int64_t flat) const {
    require(has_grad(), "grad_at: no gradient populated");
    require(flat >= 0 && flat < numel(), "grad_at: index out of range");
    return node_->grad_at(flat);
}

std::vector<double> Tensor::values() const {
    std::vector<double> out(static_cast<std::size_t>(numel()));
    for (std::int64_t i = 0; i < numel(); ++i) out[static_cast<std::size_t>(i)] = node_->value_at(i);
    return out;
}

std::vector<double> Tensor::grad_values() const {
    require(has_grad(), "grad_values: no gradient populated");
    std::vector<double> out(static_cast<std::size_t>(numel()));
    for (std::int64_t i = 0; i < numel(); ++i) out[static_cast<std::size_t>(i)] = node_->grad_at(i);
    return out;
}

bool Tensor::has_grad() const { return node_ && node_->grad_alloc; }

void Tensor::zero_grad() {
    if (node_) node_->zero_grad();
}

void Tensor::set_value_at(std::int64_t flat, double v) {
    require(flat >= 0 && flat < numel(), "set_value_at: index out of range");
    if (node_->dtype == Dtype::F32) {
        node_->vf[static_cast<std::size_t>(flat)] = static_cast<float>(v);
    } else {
        node_->vd[static_cast<std::size_t>(flat)] = v;
    }
}

void Tensor::set_values(const std::vector<double>& vals) {
    require(static_cast<std::int64_t>(vals.size()) == numel(), "set_values: size mismatch");
    for (std::int64_t i = 0; i < numel(); ++i) set_value_at(i, vals[static_cast<std::size_t>(i)]);
}

Tensor Tensor::detach(bool requires_grad) const {
    Tensor t = zeros(shape(), dtype(), requires_grad);
    t.node()->vf = node_->vf;
    t.node()->vd = node_->vd;
    return t;
}

Tensor Tensor::to_dtype(Dtype dt) const {
    if (dt == dtype()) return detach();
    Tensor t = zeros(shape(), dt, false);
    for (std::int64_t i = 0; i < numel(); ++i) t.set_value_at(i, node_->value_at(i));
    return t;
}

// ---------------------------------------------------------------------------
// kernels
// ---------------------------------------------------------------------------

namespace {

template <class T>
void axpy(std::int64_t n, T alpha, const T* x, T* y) {
    for (std::int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void accum(std::int64_t n, const T* x, T* y) {
    for (std::int64_t i = 0; i < n; ++i) y[i] += x[i];
}

void check_binary(const Tensor& a, const Tensor& b, const char* op) {
    require(a.defined() && b.defined(), std::string(op) + ": undefined input");
    require(a.dtype() == b.dtype(), std::string(op) + ": dtype mismatch");
    require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                        " vs " + shape_str(b.shape()));
}

template <class T>
void dispatch_fill_binary(Node& out, const Node& a, const Node& b, int mode) {
    const T* pa = a.val<T>();
    const T* pb = b.val<T>();
    T* po = out.val<T>();
    switch (mode) {
        case 0: for (std::int64_t i = 0; i < out.n; ++i) po[i] = pa[i] + pb[i]; break;
        case 1: for (std::int64_t i = 0; i < out.n; ++i) po[i] = pa[i] - pb[i]; break;
        case 2: for (std::int64_t i = 0; i < out.n; ++i) po[i] = pa[i] * pb[i]; break;
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_binary(a, b, "add");
    NodePtr pa = a.node(), pb = b.node();
    Tensor out = detail::make_op(a.shape(), a.dtype(), {a, b}, [pa, pb](Node& o) {
        if (o.dtype == Dtype::F32) {
            if (pa->requires_grad) accum<float>(o.n, o.grad<float>(), pa->grad<float>());
            if (pb->requires_grad) accum<float>(o.n, o.grad<float>(), pb->grad<float>());
        } else {
            if (pa->requires_grad) accum<double>(o.n, o.grad<double>(), pa->grad<double>());
            if (pb->requires_grad) accum<double>(o.n, o.grad<double>(), pb->grad<double>());
        }
    });
    if (a.dtype() == Dtype::F32) dispatch_fill_binary<float>(*out.node(), *pa, *pb, 0);
    else dispatch_fill_binary<double>(*out.node(), *pa, *pb, 0);
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_binary(a, b, "sub");
    NodePtr pa = a.node(), pb = b.node();
    Tensor out = detail::make_op(a.shape(), a.dtype(), {a, b}, [pa, pb](Node& o) {
        if (o.dtype == Dtype::F32) {
            if (pa->requires_grad) accum<float>(o.n, o.grad<float>(), pa->grad<float>());
            if (pb->requires_grad) axpy<float>(o.n, -1.0f, o.grad<float>(), pb->grad<float>());
        } else {
            if (pa->requires_grad) accum<double>(o.n, o.grad<double>(), pa->grad<double>());
            if (pb->requires_grad) axpy<double>(o.n, -1.0, o.grad<double>(), pb->grad<double>());
        }
    });
    if (a.dtype() == Dtype::F32) dispatch_fill_binary<float>(*out.node(), *pa, *pb, 1);
    else dispatch_fill_binary<double>(*out.node(), *pa, *pb, 1);
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_binary(a, b, "mul");
    NodePtr pa = a.node(), pb = b.node();
    Tensor out = detail::make_op(a.shape(), a.dtype(), {a, b}, [pa, pb](Node& o) {
        if (o.dtype == Dtype::F32) {
            const float* g = o.grad<float>();
            if (pa->requires_grad) {
                float* ga = pa->grad<float>();
                const float* vb = pb->val<float>();
                for (std::int64_t i = 0; i < o.n; ++i) ga[i] += g[i] * vb[i];
            }
            if (pb->requires_grad) {
                float* gb = pb->grad<float>();
                const float* va = pa->val<float>();
                for (std::int64_t i = 0; i < o.n; ++i) gb[i] += g[i] * va[i];
            }
        } else {
            const double* g = o.grad<double>();
            if (pa->requires_grad) {
                double* ga = pa->grad<double>();
                const double* vb = pb->val<double>();
                for (std::int64_t i = 0; i < o.n; ++i) ga[i] += g[i] * vb[i];
            }
            if (pb->requires_grad) {
                double* gb = pb->grad<double>();
                const double* va = pa->val<double>();
                for (std::int64_t i = 0; i < o.n; ++i) gb[i] += g[i] * va[i];
            }
        }
    });
    if (a.dtype() == Dtype::F32) dispatch_fill_binary<float>(*out.node(), *pa, *pb, 2);
    else dispatch_fill_binary<double>(*out.node(), *pa, *pb, 2);
    return out;
}

Tensor scale(const Tensor& a, double c) {
    require(a.defined(), "scale: undefined input");
    NodePtr pa = a.node();
    Tensor out = detail::make_op(a.shape(), a.dtype(), {a}, [pa, c](Node& o) {
        if (o.dtype == Dtype::F32) {
            axpy<float>(o.n, static_cast<float>(c), o.grad<float>(), pa->grad<float>());
        } else {
            axpy<double>(o.n, c, o.grad<double>(), pa->grad<double>());
        }
    });
    Node& o = *out.node();
    if (a.dtype() == Dtype::F32) {
        const float* p = pa->val<float>();
        float* q = o.val<float>();
        const float cf = static_cast<float>(c);
        for (std::int64_t i = 0; i < o.n; ++i) q[i] = cf * p[i];
    } else {
        const double* p = pa->val<double>();
        double* q = o.val<double>();
        for (std::int64_t i = 0; i < o.n; ++i) q[i] = c * p[i];
    }
    return out;
}

Tensor add_scalar(const Tensor& a, double c) {
    require(a.defined(), "add_scalar: undefined input");
    NodePtr pa = a.node();
    Tensor out = detail::make_op(a.shape(), a.dtype(), {a}, [pa](Node& o) {
        if (o.dtype == Dtype::F32) accum<float>(o.n, o.grad<float>(), pa->grad<float>());
        else accum<double>(o.n, o.grad<double>(), pa->grad<double>());
    });
    Node& o = *out.node();
    if (a.dtype() == Dtype::F32) {
        const float* p = pa->val<float>();
        float* q = o.val<float>();
        const float cf = static_cast<float>(c);
        for (std::int64_t i = 0; i < o.n; ++i) q[i] = p[i] + cf;
    } else {
        const double* p = pa->val<double>();
        double* q = o.val<double>();
        for (std::int64_t i = 0; i < o.n; ++i) q[i] = p[i] + c;
    }
    return out;
}

namespace {

template <class T>
Tensor reduce_impl(const Tensor& a, bool take_mean) {
    NodePtr pa = a.node();
    const double inv = take_mean ? 1.0 / static_cast<double>(a.numel()) : 1.0;
    Tensor out = detail::make_op({1}, a.dtype(), {a}, [pa, inv](Node& o) {
        const T g = o.grad<T>()[0] * static_cast<T>(inv);
        T* ga = pa->grad<T>();
        for (std::int64_t i = 0; i < pa->n; ++i) ga[i] += g;
    });
    const T* p = pa->val<T>();
    double acc = 0.0;
    for (std::int64_t i = 0; i < pa->n; ++i) acc += static_cast<double>(p[i]);
    out.node()->val<T>()[0] = static_cast<T>(acc * inv);
    return out;
}

}  // namespace

Tensor sum(const Tensor& a) {
    require(a.defined(), "sum: undefined input");
    return a.dtype() == Dtype::F32 ? reduce_impl<float>(a, false) : reduce_impl<double>(a, false);
}

Tensor mean(const Tensor& a) {
    require(a.defined(), "mean: undefined input");
    return a.dtype() == Dtype::F32 ? reduce_impl<float>(a, true) : reduce_impl<double>(a, true);
}

namespace {

template <class T>
void relu_fill(Node& o, const Node& a) {
    const T* p = a.val<T>();
    T* q = o.val<T>();
    for (std::int64_t i = 0; i < o.n; ++i) q[i] = p[i] > T(0) ? p[i] : T(0);
}

template <class T>
void tanh_fill(Node& o, const Node& a) {
    const T* p = a.val<T>();
    T* q = o.val<T>();
    for (std::int64_t i = 0; i < o.n; ++i) q[i] = std::tanh(p[i]);
}

}  // namespace

Tensor relu(const Tensor& a) {
    require(a.defined(), "relu: undefined input");
    NodePtr pa = a.node();
    Tensor out = detail::make_op(a.shape(), a.dtype(), {a}, [pa](Node& o) {
        if (o.dtype == Dtype::F32) {
            const float* g = o.grad<float>();
            const float* v = pa->val<float>();
            float* ga = pa->grad<float>();
            for (std::int64_t i = 0; i < o.n; ++i)
                if (v[i] > 0.0f) ga[i] += g[i];
        } else {
            const double* g = o.grad<double>();
            const double* v = pa->val<double>();
            double* ga = pa->grad<double>();
            for (std::int64_t i = 0; i < o.n; ++i)
                if (v[i] > 0.0) ga[i] += g[i];
        }
    });
    if (a.dtype() == Dtype::F32) relu_fill<float>(*out.node(), *pa);
    else relu_fill<double>(*out.node(), *pa);
    return out;
}

Tensor tanh(const Tensor& a) {
    require(a.defined(), "tanh: undefined input");
    NodePtr pa = a.node();
    Tensor out = detail::make_op(a.shape(), a.dtype(), {a}, [pa](Node& o) {
        if (o.dtype == Dtype::F32) {
            const float* g = o.grad<float>();
            const float* y = o.val<float>();
            float* ga = pa->grad<float>();
            for (std::int64_t i = 0; i < o.n; ++i) ga[i] += g[i] * (1.0f - y[i] * y[i]);
        } else {
            const double* g = o.grad<double>();
            const double* y = o.val<double>();
            double* ga = pa->grad<double>();
            for (std::int64_t i = 0; i < o.n; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        }
    });
    if (a.dtype() == Dtype::F32) tanh_fill<float>(*out.node(), *pa);
    else tanh_fill<double>(*out.node(), *pa);
    return out;
}

Tensor reshape(const Tensor& a, Shape s) {
    require(a.defined(), "reshape: undefined input");
    require(shape_numel(s) == a.numel(), "reshape: element count mismatch: " + shape_str(a.shape()) +
                                             " -> " + shape_str(s));
    NodePtr pa = a.node();
    Tensor out = detail::make_op(std::move(s), a.dtype(), {a}, [pa](Node& o) {
        if (o.dtype == Dtype::F32) accum<float>(o.n, o.grad<float>(), pa->grad<float>());
        else accum<double>(o.n, o.grad<double>(), pa->grad<double>());
    });
    out.node()->vf = pa->vf;
    out.node()->vd = pa->vd;
    return out;
}

Tensor flatten(const Tensor& a) { return reshape(a, {a.numel()}); }

Tensor concat(const std::vector<Tensor>& xs, int dim) {
    require(!xs.empty(), "concat: empty input list");
    const int r = xs[0].rank();
    require(dim >= 0 && dim < r, "concat: dim out of range");
    const Dtype dt = xs[0].dtype();
    Shape out_shape = xs[0].shape();
    std::int64_t cat_total = 0;
    for (const auto& x : xs) {
        require(x.dtype() == dt, "concat: dtype mismatch");
        require(x.rank() == r, "concat: rank mismatch");
        for (int i = 0; i < r; ++i) {
            if (i == dim) continue;
            require(x.dim(i) == out_shape[static_cast<std::size_t>(i)],
                    "concat: shape mismatch on dim " + std::to_string(i));
        }
        cat_total += x.dim(dim);
    }
    out_shape[static_cast<std::size_t>(dim)] = cat_total;

    // outer = product of dims before `dim`, inner = product after
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < dim; ++i) outer *= xs[0].dim(i);
    for (int i = dim + 1; i < r; ++i) inner *= xs[0].dim(i);

    std::vector<NodePtr> parents;
    parents.reserve(xs.size());
    for (const auto& x : xs) parents.push_back(x.node());

    auto bw = [parents, outer, inner, cat_total](Node& o) {
        std::int64_t offset = 0;
        for (const auto& p : parents) {
            const std::int64_t k = p->n / (outer * inner);
            if (p->requires_grad) {
                if (o.dtype == Dtype::F32) {
                    const float* g = o.grad<float>();
                    float* gp = p->grad<float>();
                    for (std::int64_t u = 0; u < outer; ++u)
                        for (std::int64_t c = 0; c < k; ++c)
                            accum<float>(inner, g + (u * cat_total + offset + c) * inner,
                                         gp + (u * k + c) * inner);
                } else {
                    const double* g = o.grad<double>();
                    double* gp = p->grad<double>();
                    for (std::int64_t u = 0; u < outer; ++u)
                        for (std::int64_t c = 0; c < k; ++c)
                            accum<double>(inner, g + (u * cat_total + offset + c) * inner,
                                         gp + (u * k + c) * inner);
                }
            }
            offset += k;
        }
    };
    Tensor out = detail::make_op(out_shape, dt, xs, bw);
    Node& o = *out.node();
    std::int64_t offset = 0;
    for (const auto& p : parents) {
        const std::int64_t k = p->n / (outer * inner);
        if (dt == Dtype::F32) {
            const float* v = p->val<float>();
            float* q = o.val<float>();
            for (std::int64_t u = 0; u < outer; ++u)
                for (std::int64_t c = 0; c < k; ++c)
                    std::copy_n(v + (u * k + c) * inner, inner,
                                q + (u * cat_total + offset + c) * inner);
        } else {
            const double* v = p->val<double>();
            double* q = o.val<double>();
            for (std::int64_t u = 0; u < outer; ++u)
                for (std::int64_t c = 0; c < k; ++c)
                    std::copy_n(v + (u * k + c) * inner, inner,
                                q + (u * cat_total + offset + c) * inner);
        }
        offset += k;
    }
    return out;
}

// ---------------------------------------------------------------------------
// reverse sweep
// ---------------------------------------------------------------------------

void backward(const Tensor& loss) {
    require(loss.defined(), "backward: undefined loss");
    require(loss.numel() == 1, "backward: loss must be scalar, got shape " + shape_str(loss.shape()));

    // Iterative post-order DFS over grad-requiring nodes; order is fixed by
    // the recorded parent lists, so the sweep is deterministic.
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    Node* root = loss.node().get();
    if (!root->requires_grad) {
        // Nothing reachable requires grad; still a valid (no-op) call.
        return;
    }
    stack.push_back({root, 0});
    visited.insert(root);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Node* p = f.node->parents[f.next_parent++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            topo.push_back(f.node);
            stack.pop_back();
        }
    }

    // Gradient buffers: leaves accumulate across calls, intermediates reset.
    for (Node* nd : topo) {
        if (!nd->grad_alloc) {
            nd->alloc_grad_zeroed();
        } else if (!nd->leaf) {
            nd->zero_grad();
        }
    }

    if (root->dtype == Dtype::F32) root->grad<float>()[0] += 1.0f;
    else root->grad<double>()[0] += 1.0;

    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* nd = *it;
        if (nd->backward_fn) nd->backward_fn(*nd);
    }
}

}  // namespace voxmesh
