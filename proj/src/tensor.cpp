#include "sst/tensor.hpp"

#include <cmath>

namespace sst {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
    check_same_shape(a, b, "add");
    Tensor out(a.value() + b.value());
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([a, b, out]() mutable {
            if (a.requires_grad()) a.grad() += out.grad();
            if (b.requires_grad()) b.grad() += out.grad();
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b, Tape* tape) {
    check_same_shape(a, b, "sub");
    Tensor out(a.value() - b.value());
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([a, b, out]() mutable {
            if (a.requires_grad()) a.grad() += out.grad();
            if (b.requires_grad()) b.grad() -= out.grad();
        });
    }
    return out;
}

Tensor cmul(const Tensor& a, const Tensor& b, Tape* tape) {
    check_same_shape(a, b, "cmul");
    Tensor out(a.value().cwiseProduct(b.value()));
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([a, b, out]() mutable {
            if (a.requires_grad()) a.grad() += out.grad().cwiseProduct(b.value());
            if (b.requires_grad()) b.grad() += out.grad().cwiseProduct(a.value());
        });
    }
    return out;
}

Tensor scale(const Tensor& a, double s, Tape* tape) {
    Tensor out(a.value() * s);
    if (tape && a.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([a, out, s]() mutable { a.grad() += out.grad() * s; });
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner extents differ");
    Tensor out(a.value() * b.value());
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([a, b, out]() mutable {
            if (a.requires_grad()) a.grad() += out.grad() * b.value().transpose();
            if (b.requires_grad()) b.grad() += a.value().transpose() * out.grad();
        });
    }
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b, Tape* tape) {
    if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner extents differ");
    Tensor out(a.value() * b.value().transpose());
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([a, b, out]() mutable {
            if (a.requires_grad()) a.grad() += out.grad() * b.value();
            if (b.requires_grad()) b.grad() += out.grad().transpose() * a.value();
        });
    }
    return out;
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b, Tape* tape) {
    if (x.cols() != w.rows()) throw std::invalid_argument("affine: inner extents differ");
    if (b.rows() != 1 || b.cols() != w.cols())
        throw std::invalid_argument("affine: bias must be 1 x out");
    Matrix v = x.value() * w.value();
    v.rowwise() += b.value().row(0);
    Tensor out(std::move(v));
    if (tape && (x.requires_grad() || w.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([x, w, b, out]() mutable {
            if (x.requires_grad()) x.grad() += out.grad() * w.value().transpose();
            if (w.requires_grad()) w.grad() += x.value().transpose() * out.grad();
            if (b.requires_grad()) b.grad().row(0) += out.grad().colwise().sum();
        });
    }
    return out;
}

Tensor sum_all(const Tensor& a, Tape* tape) {
    Tensor out(Matrix::Constant(1, 1, a.value().sum()));
    if (tape && a.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([a, out]() mutable {
            a.grad().array() += out.grad()(0, 0);
        });
    }
    return out;
}

Tensor slice_rows(const Tensor& x, Index start, Index n, Tape* tape) {
    if (start < 0 || n < 0 || start + n > x.rows())
        throw std::invalid_argument("slice_rows: range out of bounds");
    Tensor out(Matrix(x.value().middleRows(start, n)));
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([x, out, start, n]() mutable {
            x.grad().middleRows(start, n) += out.grad();
        });
    }
    return out;
}

Tensor slice_cols(const Tensor& x, Index start, Index n, Tape* tape) {
    if (start < 0 || n < 0 || start + n > x.cols())
        throw std::invalid_argument("slice_cols: range out of bounds");
    Tensor out(Matrix(x.value().middleCols(start, n)));
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([x, out, start, n]() mutable {
            x.grad().middleCols(start, n) += out.grad();
        });
    }
    return out;
}

Tensor concat_rows(const std::vector<Tensor>& xs, Tape* tape) {
    if (xs.empty()) throw std::invalid_argument("concat_rows: empty input");
    Index rows = 0;
    const Index cols = xs.front().cols();
    bool any_grad = false;
    for (const auto& x : xs) {
        if (x.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
        rows += x.rows();
        any_grad = any_grad || x.requires_grad();
    }
    Matrix v(rows, cols);
    Index at = 0;
    for (const auto& x : xs) {
        v.middleRows(at, x.rows()) = x.value();
        at += x.rows();
    }
    Tensor out(std::move(v));
    if (tape && any_grad) {
        out.set_requires_grad(true);
        tape->record([xs, out]() mutable {
            Index at = 0;
            for (auto& x : xs) {
                if (x.requires_grad()) x.grad() += out.grad().middleRows(at, x.rows());
                at += x.rows();
            }
        });
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& xs, Tape* tape) {
    if (xs.empty()) throw std::invalid_argument("concat_cols: empty input");
    Index cols = 0;
    const Index rows = xs.front().rows();
    bool any_grad = false;
    for (const auto& x : xs) {
        if (x.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += x.cols();
        any_grad = any_grad || x.requires_grad();
    }
    Matrix v(rows, cols);
    Index at = 0;
    for (const auto& x : xs) {
        v.middleCols(at, x.cols()) = x.value();
        at += x.cols();
    }
    Tensor out(std::move(v));
    if (tape && any_grad) {
        out.set_requires_grad(true);
        tape->record([xs, out]() mutable {
            Index at = 0;
            for (auto& x : xs) {
                if (x.requires_grad()) x.grad() += out.grad().middleCols(at, x.cols());
                at += x.cols();
            }
        });
    }
    return out;
}

Matrix softmax_rows_value(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
        const double m = x.row(i).maxCoeff();
        if (!std::isfinite(m))
            throw std::domain_error("softmax: row has no finite entry");
        out.row(i) = (x.row(i).array() - m).exp();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

Tensor softmax_rows(const Tensor& x, Tape* tape) {
    Tensor out(softmax_rows_value(x.value()));
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([x, out]() mutable {
            // dx = (g - rowdot(g, y)) .* y
            for (Index i = 0; i < out.rows(); ++i) {
                const double dot = out.grad().row(i).dot(out.value().row(i));
                x.grad().row(i) +=
                    ((out.grad().row(i).array() - dot) * out.value().row(i).array())
                        .matrix();
            }
        });
    }
    return out;
}

Tensor gelu(const Tensor& x, Tape* tape) {
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    Matrix v = x.value().unaryExpr(
        [inv_sqrt2](double t) { return 0.5 * t * (1.0 + std::erf(t * inv_sqrt2)); });
    Tensor out(std::move(v));
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([x, out, inv_sqrt2]() mutable {
            const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
            Matrix d = x.value().unaryExpr([&](double t) {
                return 0.5 * (1.0 + std::erf(t * inv_sqrt2)) +
                       t * inv_sqrt2pi * std::exp(-0.5 * t * t);
            });
            x.grad() += out.grad().cwiseProduct(d);
        });
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                  Tape* tape) {
    if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
    const Index d = x.cols();
    if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d)
        throw std::invalid_argument("layer_norm: gain/bias must be 1 x d");
    Matrix xhat(x.rows(), d);
    Eigen::VectorXd inv_std(x.rows());
    for (Index i = 0; i < x.rows(); ++i) {
        const double mu = x.value().row(i).mean();
        const double var = (x.value().row(i).array() - mu).square().mean();
        inv_std(i) = 1.0 / std::sqrt(var + eps);
        xhat.row(i) = (x.value().row(i).array() - mu) * inv_std(i);
    }
    Matrix v = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
    v.rowwise() += bias.value().row(0);
    Tensor out(std::move(v));
    if (tape && (x.requires_grad() || gain.requires_grad() || bias.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([x, gain, bias, out, xhat, inv_std]() mutable {
            const Index d = x.cols();
            for (Index i = 0; i < x.rows(); ++i) {
                Eigen::RowVectorXd dy = out.grad().row(i);
                if (gain.requires_grad())
                    gain.grad().row(0).array() += dy.array() * xhat.row(i).array();
                if (bias.requires_grad()) bias.grad().row(0) += dy;
                if (x.requires_grad()) {
                    Eigen::RowVectorXd dxhat =
                        (dy.array() * gain.value().row(0).array()).matrix();
                    const double m1 = dxhat.mean();
                    const double m2 = (dxhat.array() * xhat.row(i).array()).mean();
                    x.grad().row(i).array() +=
                        inv_std(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2);
                    (void)d;
                }
            }
        });
    }
    return out;
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, Index k, Index stride, Tape* tape) {
    const Index t_in = x.rows();
    const Index d_in = x.cols();
    if (k < 1 || stride < 1) throw std::invalid_argument("conv1d: bad kernel/stride");
    if (t_in < k) throw std::invalid_argument("conv1d: input shorter than kernel");
    if (kernel.rows() != k * d_in)
        throw std::invalid_argument("conv1d: kernel rows must be k * d_in");
    const Index d_out = kernel.cols();
    const Index t_out = (t_in - k) / stride + 1;

    Matrix v = Matrix::Zero(t_out, d_out);
    for (Index tap = 0; tap < k; ++tap) {
        Matrix xt(t_out, d_in);
        for (Index t = 0; t < t_out; ++t) xt.row(t) = x.value().row(t * stride + tap);
        v.noalias() += xt * kernel.value().middleRows(tap * d_in, d_in);
    }
    Tensor out(std::move(v));
    if (tape && (x.requires_grad() || kernel.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([x, kernel, out, k, stride, d_in, t_out]() mutable {
            for (Index tap = 0; tap < k; ++tap) {
                const auto ktap = kernel.value().middleRows(tap * d_in, d_in);
                if (x.requires_grad()) {
                    Matrix dx = out.grad() * ktap.transpose();
                    for (Index t = 0; t < t_out; ++t)
                        x.grad().row(t * stride + tap) += dx.row(t);
                }
                if (kernel.requires_grad()) {
                    Matrix xt(t_out, d_in);
                    for (Index t = 0; t < t_out; ++t)
                        xt.row(t) = x.value().row(t * stride + tap);
                    kernel.grad().middleRows(tap * d_in, d_in) +=
                        xt.transpose() * out.grad();
                }
            }
        });
    }
    return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<std::uint8_t>& mask, Tape* tape) {
    const Index t_len = logits.rows();
    const Index v_size = logits.cols();
    if (static_cast<Index>(targets.size()) != t_len ||
        static_cast<Index>(mask.size()) != t_len)
        throw std::invalid_argument("cross_entropy: targets/mask length mismatch");
    Index n_masked = 0;
    for (Index t = 0; t < t_len; ++t) {
        if (!mask[t]) continue;
        ++n_masked;
        if (targets[t] < 0 || targets[t] >= v_size)
            throw std::invalid_argument("cross_entropy: target out of vocabulary");
    }
    if (n_masked == 0) throw std::invalid_argument("cross_entropy: all-zero mask");

    double total = 0.0;
    for (Index t = 0; t < t_len; ++t) {
        if (!mask[t]) continue;
        const double m = logits.value().row(t).maxCoeff();
        const double lse = m + std::log((logits.value().row(t).array() - m).exp().sum());
        total += lse - logits.value()(t, targets[t]);
    }
    Tensor out(Matrix::Constant(1, 1, total / static_cast<double>(n_masked)));
    if (tape && logits.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([logits, out, targets, mask, n_masked]() mutable {
            const double g = out.grad()(0, 0) / static_cast<double>(n_masked);
            for (Index t = 0; t < logits.rows(); ++t) {
                if (!mask[t]) continue;
                const double m = logits.value().row(t).maxCoeff();
                Eigen::RowVectorXd p = (logits.value().row(t).array() - m).exp().matrix();
                p /= p.sum();
                logits.grad().row(t) += g * p;
                logits.grad()(t, targets[t]) -= g;
            }
        });
    }
    return out;
}

void rope_rows_inplace(Matrix& x, const std::vector<std::int64_t>& positions,
                       double base) {
    const Index d = x.cols();
    if (d % 2 != 0) throw std::invalid_argument("rope: head_dim must be even");
    if (static_cast<Index>(positions.size()) != x.rows())
        throw std::invalid_argument("rope: positions length mismatch");
    for (Index t = 0; t < x.rows(); ++t) {
        if (positions[t] < 0) throw std::invalid_argument("rope: negative position");
        for (Index i = 0; i < d / 2; ++i) {
            const double freq =
                std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
            const double theta = static_cast<double>(positions[t]) * freq;
            const double c = std::cos(theta), s = std::sin(theta);
            const double x0 = x(t, 2 * i), x1 = x(t, 2 * i + 1);
            x(t, 2 * i) = x0 * c - x1 * s;
            x(t, 2 * i + 1) = x0 * s + x1 * c;
        }
    }
}

Tensor rope_rows(const Tensor& x, const std::vector<std::int64_t>& positions,
                 double base, Tape* tape) {
    Matrix v = x.value();
    rope_rows_inplace(v, positions, base);
    Tensor out(std::move(v));
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([x, out, positions, base]() mutable {
            // adjoint of a rotation is the inverse rotation
            Matrix g = out.grad();
            std::vector<std::int64_t> pos = positions;
            const Index d = g.cols();
            for (Index t = 0; t < g.rows(); ++t) {
                for (Index i = 0; i < d / 2; ++i) {
                    const double freq = std::pow(
                        base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
                    const double theta = -static_cast<double>(pos[t]) * freq;
                    const double c = std::cos(theta), s = std::sin(theta);
                    const double g0 = g(t, 2 * i), g1 = g(t, 2 * i + 1);
                    g(t, 2 * i) = g0 * c - g1 * s;
                    g(t, 2 * i + 1) = g0 * s + g1 * c;
                }
            }
            x.grad() += g;
        });
    }
    return out;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids, Tape* tape) {
    Matrix v(static_cast<Index>(ids.size()), table.cols());
    for (std::size_t t = 0; t < ids.size(); ++t) {
        if (ids[t] < 0 || ids[t] >= table.rows())
            throw std::invalid_argument("embedding_lookup: id out of range");
        v.row(static_cast<Index>(t)) = table.value().row(ids[t]);
    }
    Tensor out(std::move(v));
    if (tape && table.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([table, out, ids]() mutable {
            for (std::size_t t = 0; t < ids.size(); ++t)
                table.grad().row(ids[t]) += out.grad().row(static_cast<Index>(t));
        });
    }
    return out;
}

void backward(Tensor loss, Tape& tape) {
    if (loss.size() != 1) throw std::logic_error("backward: loss must be scalar");
    loss.grad()(0, 0) += 1.0;
    tape.backward();
}

}  // namespace sst
