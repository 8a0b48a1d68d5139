#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace voxmesh {

enum class Dtype { F32, F64 };

const char* dtype_name(Dtype dt);
std::size_t dtype_size(Dtype dt);
Dtype dtype_from_name(const std::string& name);

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Always-on precondition check; throws std::runtime_error with the message.
void require(bool cond, const std::string& msg);

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One value in the autodiff graph. Values are written once when the node is
// created and treated as immutable afterwards (leaf parameters are the one
// exception: the optimizer rewrites them between steps, when no tape refers
// to them any more).
struct Node {
    Shape shape;
    Dtype dtype = Dtype::F32;
    std::int64_t n = 0;  // numel

    std::vector<float> vf;
    std::vector<double> vd;

    bool requires_grad = false;  // participates in some grad path
    bool leaf = false;           // user-created; grad persists across backward calls
    std::vector<float> gf;
    std::vector<double> gd;
    bool grad_alloc = false;

    std::vector<NodePtr> parents;
    // Reads this node's grad buffer and accumulates into the parents' buffers.
    // Only set on nodes with requires_grad and at least one parent.
    std::function<void(Node&)> backward_fn;

    template <class T> std::vector<T>& value();
    template <class T> const std::vector<T>& value() const;
    template <class T> std::vector<T>& grad_storage();

    template <class T> T* val() { return value<T>().data(); }
    template <class T> const T* val() const { return value<T>().data(); }
    template <class T> T* grad() { return grad_storage<T>().data(); }

    void alloc_value();
    void alloc_grad_zeroed();
    void zero_grad();
    double value_at(std::int64_t i) const;
    double grad_at(std::int64_t i) const;
};

template <> inline std::vector<float>& Node::value<float>() { return vf; }
template <> inline std::vector<double>& Node::value<double>() { return vd; }
template <> inline const std::vector<float>& Node::value<float>() const { return vf; }
template <> inline const std::vector<double>& Node::value<double>() const { return vd; }
template <> inline std::vector<float>& Node::grad_storage<float>() { return gf; }
template <> inline std::vector<double>& Node::grad_storage<double>() { return gd; }

NodePtr make_node(Shape shape, Dtype dt);

}  // namespace detail

// Value-semantic handle to a graph node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}

    static Tensor zeros(Shape shape, Dtype dt = Dtype::F32, bool requires_grad = false);
    static Tensor full(Shape shape, double v, Dtype dt = Dtype::F32, bool requires_grad = false);
    static Tensor from_values(Shape shape, const std::vector<double>& vals,
                              Dtype dt = Dtype::F32, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::int64_t dim(int i) const;
    int rank() const;
    std::int64_t numel() const;
    Dtype dtype() const;
    bool requires_grad() const;
    bool is_leaf() const;

    double item() const;  // requires numel() == 1
    double value_at(std::int64_t flat) const;
    double grad_at(std::int64_t flat) const;
    std::vector<double> values() const;
    std::vector<double> grad_values() const;
    bool has_grad() const;
    void zero_grad();

    // Leaf-only in-place edit (optimizer updates, finite-difference probes).
    void set_value_at(std::int64_t flat, double v);
    void set_values(const std::vector<double>& vals);

    template <class T> T* data() { return node_->val<T>(); }
    template <class T> const T* data() const { return node_->val<T>(); }

    // Value copy detached from the graph.
    Tensor detach(bool requires_grad = false) const;
    // Same values, other dtype, detached.
    Tensor to_dtype(Dtype dt) const;

    detail::NodePtr node() const { return node_; }

private:
    detail::NodePtr node_;
};

namespace detail {
// Creates an op output node. Storage is zero-initialized; the caller fills it
// and supplies the backward closure (ignored when no input requires grad).
Tensor make_op(Shape shape, Dtype dt, const std::vector<Tensor>& inputs,
               std::function<void(Node&)> backward);
}

// ---- elementwise / reduction / shape ops ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor sum(const Tensor& a);   // -> shape {1}
Tensor mean(const Tensor& a);  // -> shape {1}
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor reshape(const Tensor& a, Shape s);
Tensor flatten(const Tensor& a);  // -> shape {numel}
Tensor concat(const std::vector<Tensor>& xs, int dim);

// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
// calls; intermediate gradients are reset per call.
void backward(const Tensor& loss);

}  // namespace voxmesh
