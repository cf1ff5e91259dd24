// SPDX-License-Identifier: Apache-2.0
#include "crome/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace crome {

namespace {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

NodePtr make_node(Shape shape, std::vector<Scalar> values) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    return n;
}

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
    for (const Tensor* t : ts)
        if (t->requires_grad()) return true;
    return false;
}

// Wires the op into the graph only when a gradient can flow to it.
Tensor finish_op(NodePtr out, std::initializer_list<const Tensor*> inputs,
                 std::function<void(TensorNode&)> backprop) {
    if (any_requires_grad(inputs)) {
        out->requires_grad = true;
        for (const Tensor* t : inputs) out->parents.push_back(t->node_ptr());
        out->backprop = std::move(backprop);
    }
    return Tensor(std::move(out));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    for (int64_t d : shape)
        if (d <= 0) throw ShapeError("zeros: nonpositive extent in " + shape_str(shape));
    auto n = make_node(std::move(shape), {});
    n->value.assign(static_cast<size_t>(shape_numel(n->shape)), 0.0);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<Scalar> values,
                    bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
        throw ShapeError("from: " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " elements");
    auto n = make_node(std::move(shape), std::move(values));
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(Scalar v) { return from({1}, {v}); }

Tensor Tensor::randn(Shape shape, Rng& rng, Scalar std_dev,
                     bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (Scalar& v : t.values()) v = rng.normal() * std_dev;
    return t;
}

int64_t Tensor::rows() const {
    if (shape().size() != 2) throw ShapeError("rows: tensor is not 2D: " + shape_str(shape()));
    return shape()[0];
}

int64_t Tensor::cols() const {
    if (shape().size() != 2) throw ShapeError("cols: tensor is not 2D: " + shape_str(shape()));
    return shape()[1];
}

Scalar Tensor::item() const {
    if (numel() != 1) throw ContractError("item: tensor has " + std::to_string(numel()) + " elements");
    return values()[0];
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    auto out = make_node(a.shape(), a.values());
    for (size_t i = 0; i < out->value.size(); ++i) out->value[i] += b.values()[i];
    return finish_op(std::move(out), {&a, &b}, [](TensorNode& self) {
        for (int k = 0; k < 2; ++k) {
            TensorNode& p = *self.parents[k];
            if (!p.requires_grad) continue;
            auto& g = p.ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    auto out = make_node(a.shape(), a.values());
    for (size_t i = 0; i < out->value.size(); ++i) out->value[i] -= b.values()[i];
    return finish_op(std::move(out), {&a, &b}, [](TensorNode& self) {
        TensorNode& pa = *self.parents[0];
        TensorNode& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& ga = pa.ensure_grad();
            for (size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            auto& gb = pb.ensure_grad();
            for (size_t i = 0; i < gb.size(); ++i) gb[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    auto out = make_node(a.shape(), a.values());
    for (size_t i = 0; i < out->value.size(); ++i) out->value[i] *= b.values()[i];
    return finish_op(std::move(out), {&a, &b}, [](TensorNode& self) {
        TensorNode& pa = *self.parents[0];
        TensorNode& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& ga = pa.ensure_grad();
            for (size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            auto& gb = pb.ensure_grad();
            for (size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i] * pa.value[i];
        }
    });
}

Tensor scale(const Tensor& a, Scalar c) {
    auto out = make_node(a.shape(), a.values());
    for (Scalar& v : out->value) v *= c;
    return finish_op(std::move(out), {&a}, [c](TensorNode& self) {
        if (!self.parents[0]->requires_grad) return;
        auto& g = self.parents[0]->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += c * self.grad[i];
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 ||
        a.shape()[1] != b.shape()[0])
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
    const int64_t n = a.shape()[0], k = a.shape()[1], p = b.shape()[1];
    auto out = make_node({n, p}, std::vector<Scalar>(static_cast<size_t>(n * p), 0.0));
    const Scalar* av = a.values().data();
    const Scalar* bv = b.values().data();
    Scalar* ov = out->value.data();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t l = 0; l < k; ++l) {
            const Scalar ail = av[i * k + l];
            if (ail == 0.0) continue;
            for (int64_t j = 0; j < p; ++j) ov[i * p + j] += ail * bv[l * p + j];
        }
    return finish_op(std::move(out), {&a, &b}, [n, k, p](TensorNode& self) {
        TensorNode& pa = *self.parents[0];
        TensorNode& pb = *self.parents[1];
        const Scalar* g = self.grad.data();
        if (pa.requires_grad) {
            auto& ga = pa.ensure_grad();
            const Scalar* bv = pb.value.data();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < p; ++j) {
                    const Scalar gij = g[i * p + j];
                    if (gij == 0.0) continue;
                    for (int64_t l = 0; l < k; ++l) ga[i * k + l] += gij * bv[l * p + j];
                }
        }
        if (pb.requires_grad) {
            auto& gb = pb.ensure_grad();
            const Scalar* av = pa.value.data();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t l = 0; l < k; ++l) {
                    const Scalar ail = av[i * k + l];
                    if (ail == 0.0) continue;
                    for (int64_t j = 0; j < p; ++j) gb[l * p + j] += ail * g[i * p + j];
                }
        }
    });
}

Tensor transpose(const Tensor& a) {
    const int64_t n = a.rows(), m = a.cols();
    auto out = make_node({m, n}, std::vector<Scalar>(a.values().size()));
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j) out->value[j * n + i] = a.values()[i * m + j];
    return finish_op(std::move(out), {&a}, [n, m](TensorNode& self) {
        if (!self.parents[0]->requires_grad) return;
        auto& g = self.parents[0]->ensure_grad();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < m; ++j) g[i * m + j] += self.grad[j * n + i];
    });
}

namespace {

Scalar sigmoid_s(Scalar x) { return 1.0 / (1.0 + std::exp(-x)); }

// Elementwise op with derivative computed from (x, y).
Tensor unary_op(const Tensor& x, Scalar (*f)(Scalar),
                Scalar (*df)(Scalar, Scalar)) {
    auto out = make_node(x.shape(), x.values());
    for (Scalar& v : out->value) v = f(v);
    return finish_op(std::move(out), {&x}, [df](TensorNode& self) {
        TensorNode& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (size_t i = 0; i < g.size(); ++i)
            g[i] += self.grad[i] * df(p.value[i], self.value[i]);
    });
}

}  // namespace

Tensor silu(const Tensor& x) {
    return unary_op(
        x, +[](Scalar v) { return v * sigmoid_s(v); },
        +[](Scalar v, Scalar) {
            const Scalar s = sigmoid_s(v);
            return s * (1.0 + v * (1.0 - s));
        });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        x, +[](Scalar v) { return sigmoid_s(v); },
        +[](Scalar, Scalar y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
    return unary_op(
        x, +[](Scalar v) { return v > 0 ? v : 0.0; },
        +[](Scalar v, Scalar) { return v > 0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
    return unary_op(
        x, +[](Scalar v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); },
        +[](Scalar v, Scalar) {
            const Scalar cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
            const Scalar pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
            return cdf + v * pdf;
        });
}

Tensor softmax_rows(const Tensor& x) {
    if (x.shape().empty()) throw ShapeError("softmax_rows: empty shape");
    const int64_t d = x.shape().back();
    const int64_t rows = x.numel() / d;
    auto out = make_node(x.shape(), x.values());
    for (int64_t r = 0; r < rows; ++r) {
        Scalar* row = out->value.data() + r * d;
        Scalar mx = row[0];
        for (int64_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
        Scalar z = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            row[j] = std::exp(row[j] - mx);
            z += row[j];
        }
        for (int64_t j = 0; j < d; ++j) row[j] /= z;
    }
    return finish_op(std::move(out), {&x}, [rows, d](TensorNode& self) {
        if (!self.parents[0]->requires_grad) return;
        auto& g = self.parents[0]->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const Scalar* y = self.value.data() + r * d;
            const Scalar* dy = self.grad.data() + r * d;
            Scalar dot = 0.0;
            for (int64_t j = 0; j < d; ++j) dot += y[j] * dy[j];
            for (int64_t j = 0; j < d; ++j) g[r * d + j] += y[j] * (dy[j] - dot);
        }
    });
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 Scalar eps) {
    const int64_t d = x.shape().back();
    const int64_t rows = x.numel() / d;
    if (gain.numel() != d || bias.numel() != d)
        throw ShapeError("layernorm: gain/bias length must equal trailing dim");
    auto out = make_node(x.shape(), std::vector<Scalar>(x.values().size()));
    // Cache xhat and inv-sigma per row for the backward pass.
    auto xhat = std::make_shared<std::vector<Scalar>>(x.values().size());
    auto rstd = std::make_shared<std::vector<Scalar>>(rows);
    for (int64_t r = 0; r < rows; ++r) {
        const Scalar* xr = x.values().data() + r * d;
        Scalar mu = 0.0;
        for (int64_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<Scalar>(d);
        Scalar var = 0.0;
        for (int64_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<Scalar>(d);
        const Scalar rs = 1.0 / std::sqrt(var + eps);
        (*rstd)[r] = rs;
        for (int64_t j = 0; j < d; ++j) {
            const Scalar xh = (xr[j] - mu) * rs;
            (*xhat)[r * d + j] = xh;
            out->value[r * d + j] = xh * gain.values()[j] + bias.values()[j];
        }
    }
    return finish_op(
        std::move(out), {&x, &gain, &bias},
        [rows, d, xhat, rstd](TensorNode& self) {
            TensorNode& px = *self.parents[0];
            TensorNode& pg = *self.parents[1];
            TensorNode& pb = *self.parents[2];
            for (int64_t r = 0; r < rows; ++r) {
                const Scalar* dy = self.grad.data() + r * d;
                const Scalar* xh = xhat->data() + r * d;
                if (pg.requires_grad) {
                    auto& gg = pg.ensure_grad();
                    for (int64_t j = 0; j < d; ++j) gg[j] += dy[j] * xh[j];
                }
                if (pb.requires_grad) {
                    auto& gb = pb.ensure_grad();
                    for (int64_t j = 0; j < d; ++j) gb[j] += dy[j];
                }
                if (!px.requires_grad) continue;
                auto& gx = px.ensure_grad();
                Scalar m1 = 0.0, m2 = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    const Scalar dxh = dy[j] * pg.value[j];
                    m1 += dxh;
                    m2 += dxh * xh[j];
                }
                m1 /= static_cast<Scalar>(d);
                m2 /= static_cast<Scalar>(d);
                for (int64_t j = 0; j < d; ++j) {
                    const Scalar dxh = dy[j] * pg.value[j];
                    gx[r * d + j] += (*rstd)[r] * (dxh - m1 - xh[j] * m2);
                }
            }
        });
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
    const int64_t V = table.rows(), d = table.cols();
    for (int id : ids)
        if (id < 0 || id >= V)
            throw VocabError("embedding_rows: token id " + std::to_string(id) +
                             " out of range [0," + std::to_string(V) + ")");
    const int64_t T = static_cast<int64_t>(ids.size());
    auto out = make_node({T, d}, std::vector<Scalar>(static_cast<size_t>(T * d)));
    for (int64_t t = 0; t < T; ++t)
        std::copy_n(table.values().data() + static_cast<int64_t>(ids[t]) * d, d,
                    out->value.data() + t * d);
    auto ids_copy = std::make_shared<std::vector<int>>(ids);
    return finish_op(std::move(out), {&table}, [d, ids_copy](TensorNode& self) {
        if (!self.parents[0]->requires_grad) return;
        auto& g = self.parents[0]->ensure_grad();
        for (size_t t = 0; t < ids_copy->size(); ++t) {
            Scalar* dst = g.data() + static_cast<int64_t>((*ids_copy)[t]) * d;
            const Scalar* src = self.grad.data() + static_cast<int64_t>(t) * d;
            for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: no parts");
    const int64_t d = parts[0].cols();
    int64_t n = 0;
    bool rg = false;
    for (const Tensor& p : parts) {
        if (p.cols() != d)
            throw ShapeError("concat_rows: column mismatch " + shape_str(p.shape()));
        n += p.rows();
        rg = rg || p.requires_grad();
    }
    auto out = make_node({n, d}, std::vector<Scalar>(static_cast<size_t>(n * d)));
    int64_t off = 0;
    for (const Tensor& p : parts) {
        std::copy(p.values().begin(), p.values().end(), out->value.begin() + off * d);
        off += p.rows();
    }
    if (!rg) return Tensor(std::move(out));
    out->requires_grad = true;
    for (const Tensor& p : parts) out->parents.push_back(p.node_ptr());
    out->backprop = [d](TensorNode& self) {
        int64_t off = 0;
        for (auto& pp : self.parents) {
            const int64_t r = pp->shape[0];
            if (pp->requires_grad) {
                auto& g = pp->ensure_grad();
                for (int64_t i = 0; i < r * d; ++i) g[i] += self.grad[off * d + i];
            }
            off += r;
        }
    };
    return Tensor(std::move(out));
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no parts");
    const int64_t n = parts[0].rows();
    int64_t d = 0;
    bool rg = false;
    for (const Tensor& p : parts) {
        if (p.rows() != n)
            throw ShapeError("concat_cols: row mismatch " + shape_str(p.shape()));
        d += p.cols();
        rg = rg || p.requires_grad();
    }
    auto out = make_node({n, d}, std::vector<Scalar>(static_cast<size_t>(n * d)));
    int64_t off = 0;
    for (const Tensor& p : parts) {
        const int64_t pc = p.cols();
        for (int64_t i = 0; i < n; ++i)
            std::copy_n(p.values().data() + i * pc, pc,
                        out->value.data() + i * d + off);
        off += pc;
    }
    if (!rg) return Tensor(std::move(out));
    out->requires_grad = true;
    for (const Tensor& p : parts) out->parents.push_back(p.node_ptr());
    out->backprop = [n, d](TensorNode& self) {
        int64_t off = 0;
        for (auto& pp : self.parents) {
            const int64_t pc = pp->shape[1];
            if (pp->requires_grad) {
                auto& g = pp->ensure_grad();
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < pc; ++j)
                        g[i * pc + j] += self.grad[i * d + off + j];
            }
            off += pc;
        }
    };
    return Tensor(std::move(out));
}

Tensor slice_rows(const Tensor& x, int64_t start, int64_t count) {
    const int64_t n = x.rows(), d = x.cols();
    if (start < 0 || count < 0 || start + count > n)
        throw ShapeError("slice_rows: [" + std::to_string(start) + "," +
                         std::to_string(start + count) + ") out of " + std::to_string(n));
    auto out = make_node({count, d}, std::vector<Scalar>(static_cast<size_t>(count * d)));
    std::copy_n(x.values().data() + start * d, count * d, out->value.data());
    return finish_op(std::move(out), {&x}, [start, count, d](TensorNode& self) {
        if (!self.parents[0]->requires_grad) return;
        auto& g = self.parents[0]->ensure_grad();
        for (int64_t i = 0; i < count * d; ++i) g[start * d + i] += self.grad[i];
    });
}

Tensor slice_cols(const Tensor& x, int64_t start, int64_t count) {
    const int64_t n = x.rows(), d = x.cols();
    if (start < 0 || count < 0 || start + count > d)
        throw ShapeError("slice_cols: [" + std::to_string(start) + "," +
                         std::to_string(start + count) + ") out of " + std::to_string(d));
    auto out = make_node({n, count}, std::vector<Scalar>(static_cast<size_t>(n * count)));
    for (int64_t i = 0; i < n; ++i)
        std::copy_n(x.values().data() + i * d + start, count,
                    out->value.data() + i * count);
    return finish_op(std::move(out), {&x}, [n, d, start, count](TensorNode& self) {
        if (!self.parents[0]->requires_grad) return;
        auto& g = self.parents[0]->ensure_grad();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < count; ++j)
                g[i * d + start + j] += self.grad[i * count + j];
    });
}

Tensor causal_mask_apply(const Tensor& scores) {
    const int64_t n = scores.rows();
    if (scores.cols() != n)
        throw ShapeError("causal_mask_apply: square matrix required, got " +
                         shape_str(scores.shape()));
    auto out = make_node(scores.shape(), scores.values());
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = i + 1; j < n; ++j) out->value[i * n + j] = -1e30;
    return finish_op(std::move(out), {&scores}, [n](TensorNode& self) {
        if (!self.parents[0]->requires_grad) return;
        auto& g = self.parents[0]->ensure_grad();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j <= i; ++j) g[i * n + j] += self.grad[i * n + j];
    });
}

Tensor cross_entropy_next_token(const Tensor& logits,
                                const std::vector<int>& targets,
                                const std::vector<uint8_t>& mask) {
    const int64_t T = logits.rows(), V = logits.cols();
    if (static_cast<int64_t>(targets.size()) != T ||
        static_cast<int64_t>(mask.size()) != T)
        throw ShapeError("cross_entropy_next_token: targets/mask length must equal " +
                         std::to_string(T));
    int64_t count = 0;
    for (int64_t t = 0; t < T; ++t) {
        if (!mask[t]) continue;
        ++count;
        if (targets[t] < 0 || targets[t] >= V)
            throw VocabError("cross_entropy_next_token: target id " +
                             std::to_string(targets[t]) + " out of vocabulary " +
                             std::to_string(V));
    }
    if (count == 0)
        throw ContractError("cross_entropy_next_token: all positions masked out");

    // Cache per-row softmax for the backward pass.
    auto probs = std::make_shared<std::vector<Scalar>>(logits.values().size(), 0.0);
    Scalar loss = 0.0;
    for (int64_t t = 0; t < T; ++t) {
        if (!mask[t]) continue;
        const Scalar* row = logits.values().data() + t * V;
        Scalar mx = row[0];
        for (int64_t j = 1; j < V; ++j) mx = std::max(mx, row[j]);
        Scalar z = 0.0;
        for (int64_t j = 0; j < V; ++j) z += std::exp(row[j] - mx);
        const Scalar lse = mx + std::log(z);
        loss += lse - row[targets[t]];
        for (int64_t j = 0; j < V; ++j)
            (*probs)[t * V + j] = std::exp(row[j] - lse);
    }
    loss /= static_cast<Scalar>(count);

    auto out = make_node({1}, {loss});
    auto tcopy = std::make_shared<std::vector<int>>(targets);
    auto mcopy = std::make_shared<std::vector<uint8_t>>(mask);
    return finish_op(std::move(out), {&logits},
                     [T, V, count, probs, tcopy, mcopy](TensorNode& self) {
                         if (!self.parents[0]->requires_grad) return;
                         auto& g = self.parents[0]->ensure_grad();
                         const Scalar go = self.grad[0] / static_cast<Scalar>(count);
                         for (int64_t t = 0; t < T; ++t) {
                             if (!(*mcopy)[t]) continue;
                             for (int64_t j = 0; j < V; ++j)
                                 g[t * V + j] += go * (*probs)[t * V + j];
                             g[t * V + (*tcopy)[t]] -= go;
                         }
                     });
}

Tensor sum(const Tensor& x) {
    Scalar s = 0.0;
    for (Scalar v : x.values()) s += v;
    auto out = make_node({1}, {s});
    return finish_op(std::move(out), {&x}, [](TensorNode& self) {
        if (!self.parents[0]->requires_grad) return;
        auto& g = self.parents[0]->ensure_grad();
        for (Scalar& v : g) v += self.grad[0];
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<Scalar>(x.numel())); }

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ContractError("backward: loss must be a defined scalar");
    using detail::TensorNode;
    TensorNode* root = loss.node();
    if (!root->requires_grad) return;

    // Iterative post-order DFS; each node visited once.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, size_t>> stack{{root, 0}};
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorNode* p = node->parents[idx++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
}

double grad_check(const std::function<Tensor(const Tensor&)>& fn, Tensor input,
                  double eps) {
    if (eps <= 0) throw ContractError("grad_check: eps must be positive");
    input.set_requires_grad(true);
    input.zero_grad();
    Tensor loss = fn(input);
    backward(loss);
    std::vector<Scalar> analytic = input.has_grad()
                                       ? input.grad()
                                       : std::vector<Scalar>(input.numel(), 0.0);

    double worst = 0.0;
    for (int64_t i = 0; i < input.numel(); ++i) {
        const Scalar orig = input.values()[i];
        input.values()[i] = orig + eps;
        const Scalar fp = fn(input).item();
        input.values()[i] = orig - eps;
        const Scalar fm = fn(input).item();
        input.values()[i] = orig;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace crome
