#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "sst/rng.hpp"

namespace sst {

// All math is double precision; desk-scale sizes make this affordable and it
// tightens gradient-check tolerances.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct TensorNode {
    Matrix value;
    Matrix grad;  // empty until first accumulation
    bool requires_grad = false;

    Matrix& ensure_grad() {
        if (grad.rows() != value.rows() || grad.cols() != value.cols())
            grad = Matrix::Zero(value.rows(), value.cols());
        return grad;
    }
};

// Shared-ownership handle over a 2-D tensor. Copies alias the same storage;
// gradients accumulate (sum) across fan-out and are zeroed explicitly.
class Tensor {
public:
    Tensor() : node_(std::make_shared<TensorNode>()) {}
    explicit Tensor(Matrix v, bool requires_grad = false)
        : node_(std::make_shared<TensorNode>()) {
        node_->value = std::move(v);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Index r, Index c, bool requires_grad = false) {
        return Tensor(Matrix::Zero(r, c), requires_grad);
    }
    static Tensor constant(Index r, Index c, double v, bool requires_grad = false) {
        return Tensor(Matrix::Constant(r, c, v), requires_grad);
    }
    static Tensor gaussian(Index r, Index c, double stddev, Rng& rng,
                           bool requires_grad = false) {
        Matrix m(r, c);
        for (Index i = 0; i < r; ++i)
            for (Index j = 0; j < c; ++j) m(i, j) = rng.gaussian(0.0, stddev);
        return Tensor(std::move(m), requires_grad);
    }

    // A Tensor is a handle: accessors are const even when they mutate the
    // shared node.
    Matrix& value() const { return node_->value; }
    Matrix& grad() const { return node_->ensure_grad(); }
    bool has_grad() const { return node_->grad.size() > 0; }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool b) const { node_->requires_grad = b; }
    void zero_grad() const {
        if (node_->grad.size() > 0) node_->grad.setZero();
    }

    Index rows() const { return node_->value.rows(); }
    Index cols() const { return node_->value.cols(); }
    Index size() const { return node_->value.size(); }
    double item() const {
        if (size() != 1) throw std::logic_error("Tensor::item: tensor is not scalar");
        return node_->value(0, 0);
    }

    std::shared_ptr<TensorNode> node() const { return node_; }
    bool same_storage(const Tensor& o) const { return node_ == o.node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

// Reverse-mode tape: operations are appended in execution order, so inputs
// always precede their consumers; backward() replays the adjoint rules in
// reverse.
class Tape {
public:
    void record(std::function<void()> backward_rule) {
        ops_.push_back(std::move(backward_rule));
    }
    void backward() {
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }
    std::size_t size() const { return ops_.size(); }
    void clear() { ops_.clear(); }

private:
    std::vector<std::function<void()>> ops_;
};

// ---- elementwise / linear algebra -----------------------------------------

Tensor add(const Tensor& a, const Tensor& b, Tape* tape);
Tensor sub(const Tensor& a, const Tensor& b, Tape* tape);
Tensor cmul(const Tensor& a, const Tensor& b, Tape* tape);  // coefficient-wise
Tensor scale(const Tensor& a, double s, Tape* tape);
Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape);
// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b, Tape* tape);
// x[T×in] * W[in×out] + broadcast bias[1×out]
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b, Tape* tape);
Tensor sum_all(const Tensor& a, Tape* tape);  // 1×1

// ---- shape ----------------------------------------------------------------

Tensor slice_rows(const Tensor& x, Index start, Index n, Tape* tape);
Tensor slice_cols(const Tensor& x, Index start, Index n, Tape* tape);
Tensor concat_rows(const std::vector<Tensor>& xs, Tape* tape);
Tensor concat_cols(const std::vector<Tensor>& xs, Tape* tape);

// ---- nonlinearities -------------------------------------------------------

Tensor softmax_rows(const Tensor& x, Tape* tape);
Tensor gelu(const Tensor& x, Tape* tape);
// Per-last-axis standardization, then affine: gain/bias are 1×d.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                  Tape* tape);

// ---- model-specific primitives --------------------------------------------

// Kernel layout: row (tap*d_in + c_in), column c_out, i.e. a [k*d_in × d_out]
// matrix holding k taps stacked along rows. No padding: T' = (T-k)/s + 1.
Tensor conv1d(const Tensor& x, const Tensor& kernel, Index k, Index stride, Tape* tape);

// Mean negative log-likelihood over positions with mask=1.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<std::uint8_t>& mask, Tape* tape);

// Pairwise 2-D rotations with frequencies base^(-2i/d) where d = cols (even).
// Row t is rotated by angle positions[t] * freq_i on the pair (2i, 2i+1).
Tensor rope_rows(const Tensor& x, const std::vector<std::int64_t>& positions,
                 double base, Tape* tape);

// Rows of `table` gathered by id; table is [V×d].
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids, Tape* tape);

// Seeds `loss.grad` with 1 and replays the tape. `loss` must be scalar.
void backward(Tensor loss, Tape& tape);

// Plain (non-autograd) helpers shared by forward-only code paths.
Matrix softmax_rows_value(const Matrix& x);
void rope_rows_inplace(Matrix& x, const std::vector<std::int64_t>& positions, double base);

}  // namespace sst
