#include "vamae/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace vamae::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

thread_local bool g_grad_enabled = true;

void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

void require_2d(const Tensor& t, const char* op) {
    require(t.defined() && t.shape().size() == 2, std::string(op) + ": expected a 2-D tensor, got " +
                                                      (t.defined() ? shape_str(t.shape()) : "undefined"));
}

bool wants(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }
std::vector<double>& pgrad(Node& self, std::size_t i) { return self.parents[i]->grad_buffer(); }
const std::vector<double>& pvalue(const Node& self, std::size_t i) { return self.parents[i]->value; }

}  // namespace

std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d < 0) throw ShapeError("negative dimension in " + shape_str(s));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) { return leaf(std::move(shape), std::move(values), false); }

Tensor Tensor::zeros(Shape shape) {
    const std::size_t n = numel(shape);
    return leaf(std::move(shape), std::vector<double>(n, 0.0), false);
}

Tensor Tensor::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
    if (numel(shape) != values.size()) {
        throw ShapeError("tensor of shape " + shape_str(shape) + " given " + std::to_string(values.size()) +
                         " values");
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
               std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->is_leaf = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) n->requires_grad = n->requires_grad || p.requires_grad();
        if (n->requires_grad) {
            n->parents.reserve(parents.size());
            for (const auto& p : parents) n->parents.push_back(p.node_ptr());
            n->backward_fn = std::move(backward);
        }
    }
    return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) throw ShapeError("backward: loss must be a scalar");
    if (!loss.requires_grad()) throw std::logic_error("backward: loss does not depend on any trainable tensor");

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
    visited.insert(loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
    // Free intermediate gradients so the graph can be reused for inspection
    // without holding stale buffers.
    for (Node* n : order)
        if (!n->is_leaf) n->grad.clear();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    require(b.rows() == k, "matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::vector<double> out(static_cast<std::size_t>(m) * n);
    MapMat(out.data(), m, n).noalias() = CMapMat(a.value().data(), m, k) * CMapMat(b.value().data(), k, n);
    return make_op({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
        CMapMat g(self.grad.data(), m, n);
        if (wants(self, 0)) {
            MapMat(pgrad(self, 0).data(), m, k).noalias() += g * CMapMat(pvalue(self, 1).data(), k, n).transpose();
        }
        if (wants(self, 1)) {
            MapMat(pgrad(self, 1).data(), k, n).noalias() += CMapMat(pvalue(self, 0).data(), m, k).transpose() * g;
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_2d(a, "transpose");
    const int m = a.rows(), n = a.cols();
    std::vector<double> out(a.size());
    MapMat(out.data(), n, m) = CMapMat(a.value().data(), m, n).transpose();
    return make_op({n, m}, std::move(out), {a}, [m, n](Node& self) {
        MapMat(pgrad(self, 0).data(), m, n) += CMapMat(self.grad.data(), n, m).transpose();
    });
}

namespace {

Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name, int kind) {
    require(a.shape() == b.shape(), std::string(name) + ": shapes differ, " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
    std::vector<double> out(a.size());
    auto av = a.value();
    auto bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = kind == 0 ? av[i] + bv[i] : kind == 1 ? av[i] - bv[i] : av[i] * bv[i];
    }
    return make_op(a.shape(), std::move(out), {a, b}, [kind](Node& self) {
        const auto& g = self.grad;
        if (wants(self, 0)) {
            auto& ga = pgrad(self, 0);
            if (kind == 2) {
                const auto& bv = pvalue(self, 1);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
            } else {
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
        }
        if (wants(self, 1)) {
            auto& gb = pgrad(self, 1);
            if (kind == 2) {
                const auto& av = pvalue(self, 0);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
            } else {
                const double sign = kind == 1 ? -1.0 : 1.0;
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign * g[i];
            }
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_elementwise(a, b, "add", 0); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_elementwise(a, b, "sub", 1); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_elementwise(a, b, "mul", 2); }

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.value().begin(), a.value().end());
    for (auto& v : out) v *= s;
    return make_op(a.shape(), std::move(out), {a}, [s](Node& self) {
        auto& ga = pgrad(self, 0);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * self.grad[i];
    });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
    require_2d(a, "add_row");
    const int m = a.rows(), n = a.cols();
    require(bias.size() == static_cast<std::size_t>(n),
            "add_row: bias of shape " + shape_str(bias.shape()) + " does not match " + shape_str(a.shape()));
    std::vector<double> out(a.value().begin(), a.value().end());
    auto bv = bias.value();
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) out[static_cast<std::size_t>(r) * n + c] += bv[c];
    return make_op(a.shape(), std::move(out), {a, bias}, [m, n](Node& self) {
        const auto& g = self.grad;
        if (wants(self, 0)) {
            auto& ga = pgrad(self, 0);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (wants(self, 1)) {
            auto& gb = pgrad(self, 1);
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < n; ++c) gb[c] += g[static_cast<std::size_t>(r) * n + c];
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) { return add_row(matmul(x, weight), bias); }

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_2d(x, "layer_norm");
    const int m = x.rows(), n = x.cols();
    require(gamma.size() == static_cast<std::size_t>(n) && beta.size() == static_cast<std::size_t>(n),
            "layer_norm: affine parameters do not match feature dimension");
    auto xv = x.value();
    auto gv = gamma.value();
    auto bv = beta.value();
    std::vector<double> out(x.size());
    auto xhat = std::make_shared<std::vector<double>>(x.size());
    auto inv_sd = std::make_shared<std::vector<double>>(m);
    for (int r = 0; r < m; ++r) {
        const double* row = xv.data() + static_cast<std::size_t>(r) * n;
        double mu = 0.0;
        for (int c = 0; c < n; ++c) mu += row[c];
        mu /= n;
        double var = 0.0;
        for (int c = 0; c < n; ++c) var += (row[c] - mu) * (row[c] - mu);
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_sd)[r] = is;
        for (int c = 0; c < n; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * n + c;
            (*xhat)[i] = (row[c] - mu) * is;
            out[i] = (*xhat)[i] * gv[c] + bv[c];
        }
    }
    return make_op(x.shape(), std::move(out), {x, gamma, beta}, [m, n, xhat, inv_sd](Node& self) {
        const auto& g = self.grad;
        const auto& gv = pvalue(self, 1);
        if (wants(self, 1)) {
            auto& gg = pgrad(self, 1);
            for (std::size_t i = 0; i < g.size(); ++i) gg[i % n] += g[i] * (*xhat)[i];
        }
        if (wants(self, 2)) {
            auto& gb = pgrad(self, 2);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
        }
        if (wants(self, 0)) {
            auto& gx = pgrad(self, 0);
            std::vector<double> dxhat(n);
            for (int r = 0; r < m; ++r) {
                const std::size_t base = static_cast<std::size_t>(r) * n;
                double mean_d = 0.0, mean_dx = 0.0;
                for (int c = 0; c < n; ++c) {
                    dxhat[c] = g[base + c] * gv[c];
                    mean_d += dxhat[c];
                    mean_dx += dxhat[c] * (*xhat)[base + c];
                }
                mean_d /= n;
                mean_dx /= n;
                for (int c = 0; c < n; ++c) {
                    gx[base + c] += (*inv_sd)[r] * (dxhat[c] - mean_d - (*xhat)[base + c] * mean_dx);
                }
            }
        }
    });
}

Tensor gelu(const Tensor& x) {
    auto xv = x.value();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] / std::sqrt(2.0)));
    return make_op(x.shape(), std::move(out), {x}, [](Node& self) {
        const auto& xv = pvalue(self, 0);
        auto& gx = pgrad(self, 0);
        constexpr double inv_sqrt_2pi = 0.3989422804014327;
        for (std::size_t i = 0; i < xv.size(); ++i) {
            const double v = xv[i];
            const double cdf = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            gx[i] += self.grad[i] * (cdf + v * pdf);
        }
    });
}

Tensor relu(const Tensor& x) {
    auto xv = x.value();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    return make_op(x.shape(), std::move(out), {x}, [](Node& self) {
        const auto& xv = pvalue(self, 0);
        auto& gx = pgrad(self, 0);
        for (std::size_t i = 0; i < xv.size(); ++i)
            if (xv[i] > 0.0) gx[i] += self.grad[i];
    });
}

Tensor softmax_rows(const Tensor& x) {
    require_2d(x, "softmax_rows");
    const int m = x.rows(), n = x.cols();
    auto xv = x.value();
    std::vector<double> out(x.size());
    for (int r = 0; r < m; ++r) {
        const double* row = xv.data() + static_cast<std::size_t>(r) * n;
        double* o = out.data() + static_cast<std::size_t>(r) * n;
        const double mx = *std::max_element(row, row + n);
        double z = 0.0;
        for (int c = 0; c < n; ++c) z += (o[c] = std::exp(row[c] - mx));
        for (int c = 0; c < n; ++c) o[c] /= z;
    }
    auto y = std::make_shared<std::vector<double>>(out);
    return make_op(x.shape(), std::move(out), {x}, [m, n, y](Node& self) {
        auto& gx = pgrad(self, 0);
        for (int r = 0; r < m; ++r) {
            const std::size_t base = static_cast<std::size_t>(r) * n;
            double dot = 0.0;
            for (int c = 0; c < n; ++c) dot += self.grad[base + c] * (*y)[base + c];
            for (int c = 0; c < n; ++c) gx[base + c] += (*y)[base + c] * (self.grad[base + c] - dot);
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    require(numel(shape) == x.size(), "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    std::vector<double> out(x.value().begin(), x.value().end());
    return make_op(std::move(shape), std::move(out), {x}, [](Node& self) {
        auto& gx = pgrad(self, 0);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    });
}

Tensor slice_cols(const Tensor& x, int start, int count) {
    require_2d(x, "slice_cols");
    const int m = x.rows(), n = x.cols();
    require(start >= 0 && count > 0 && start + count <= n, "slice_cols: range out of bounds");
    std::vector<double> out(static_cast<std::size_t>(m) * count);
    auto xv = x.value();
    for (int r = 0; r < m; ++r)
        std::copy_n(xv.data() + static_cast<std::size_t>(r) * n + start, count,
                    out.data() + static_cast<std::size_t>(r) * count);
    return make_op({m, count}, std::move(out), {x}, [m, n, start, count](Node& self) {
        auto& gx = pgrad(self, 0);
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < count; ++c)
                gx[static_cast<std::size_t>(r) * n + start + c] += self.grad[static_cast<std::size_t>(r) * count + c];
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    const int m = parts[0].rows();
    std::vector<int> offsets;
    int n = 0;
    for (const auto& p : parts) {
        require_2d(p, "concat_cols");
        require(p.rows() == m, "concat_cols: row counts differ");
        offsets.push_back(n);
        n += p.cols();
    }
    std::vector<double> out(static_cast<std::size_t>(m) * n);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const int w = parts[k].cols();
        auto pv = parts[k].value();
        for (int r = 0; r < m; ++r)
            std::copy_n(pv.data() + static_cast<std::size_t>(r) * w, w,
                        out.data() + static_cast<std::size_t>(r) * n + offsets[k]);
    }
    return make_op({m, n}, std::move(out), parts, [m, n, offsets](Node& self) {
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
            if (!wants(self, k)) continue;
            const int w = self.parents[k]->shape[1];
            auto& g = pgrad(self, k);
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < w; ++c)
                    g[static_cast<std::size_t>(r) * w + c] += self.grad[static_cast<std::size_t>(r) * n + offsets[k] + c];
        }
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_rows: no inputs");
    const int n = parts[0].cols();
    int m = 0;
    for (const auto& p : parts) {
        require_2d(p, "concat_rows");
        require(p.cols() == n, "concat_rows: column counts differ");
        m += p.rows();
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m) * n);
    for (const auto& p : parts) out.insert(out.end(), p.value().begin(), p.value().end());
    return make_op({m, n}, std::move(out), parts, [](Node& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
            const std::size_t len = self.parents[k]->value.size();
            if (wants(self, k)) {
                auto& g = pgrad(self, k);
                for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[offset + i];
            }
            offset += len;
        }
    });
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& index) {
    require_2d(x, "gather_rows");
    const int m = x.rows(), n = x.cols();
    for (int i : index) require(i >= 0 && i < m, "gather_rows: index " + std::to_string(i) + " out of range");
    const int k = static_cast<int>(index.size());
    std::vector<double> out(static_cast<std::size_t>(k) * n);
    auto xv = x.value();
    for (int r = 0; r < k; ++r)
        std::copy_n(xv.data() + static_cast<std::size_t>(index[r]) * n, n, out.data() + static_cast<std::size_t>(r) * n);
    return make_op({k, n}, std::move(out), {x}, [index, n](Node& self) {
        auto& gx = pgrad(self, 0);
        for (std::size_t r = 0; r < index.size(); ++r)
            for (int c = 0; c < n; ++c)
                gx[static_cast<std::size_t>(index[r]) * n + c] += self.grad[r * n + c];
    });
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.value()) s += v;
    return make_op({1}, {s}, {x}, [](Node& self) {
        auto& gx = pgrad(self, 0);
        for (auto& g : gx) g += self.grad[0];
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor mse(const Tensor& pred, const Tensor& target) {
    require(pred.shape() == target.shape(), "mse: shapes differ");
    auto pv = pred.value();
    auto tv = target.value();
    double s = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) s += (pv[i] - tv[i]) * (pv[i] - tv[i]);
    const double inv_n = 1.0 / static_cast<double>(pv.size());
    return make_op({1}, {s * inv_n}, {pred, target}, [inv_n](Node& self) {
        const auto& pv = pvalue(self, 0);
        const auto& tv = pvalue(self, 1);
        const double g = self.grad[0] * 2.0 * inv_n;
        if (wants(self, 0)) {
            auto& gp = pgrad(self, 0);
            for (std::size_t i = 0; i < pv.size(); ++i) gp[i] += g * (pv[i] - tv[i]);
        }
        if (wants(self, 1)) {
            auto& gt = pgrad(self, 1);
            for (std::size_t i = 0; i < pv.size(); ++i) gt[i] -= g * (pv[i] - tv[i]);
        }
    });
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double log_sigmoid(double z) { return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

Tensor bce_with_logits(const Tensor& logits, const Tensor& target) {
    require(logits.shape() == target.shape(), "bce_with_logits: shapes differ");
    auto zv = logits.value();
    auto tv = target.value();
    double s = 0.0;
    for (std::size_t i = 0; i < zv.size(); ++i) {
        if (tv[i] < 0.0 || tv[i] > 1.0) throw std::invalid_argument("bce_with_logits: targets must lie in [0,1]");
        s -= tv[i] * log_sigmoid(zv[i]) + (1.0 - tv[i]) * log_sigmoid(-zv[i]);
    }
    const double inv_n = 1.0 / static_cast<double>(zv.size());
    return make_op({1}, {s * inv_n}, {logits, target}, [inv_n](Node& self) {
        const auto& zv = pvalue(self, 0);
        const auto& tv = pvalue(self, 1);
        const double g = self.grad[0] * inv_n;
        if (wants(self, 0)) {
            auto& gz = pgrad(self, 0);
            for (std::size_t i = 0; i < zv.size(); ++i) gz[i] += g * (sigmoid(zv[i]) - tv[i]);
        }
        if (wants(self, 1)) {
            auto& gt = pgrad(self, 1);
            for (std::size_t i = 0; i < zv.size(); ++i) gt[i] -= g * zv[i];
        }
    });
}

namespace {

// cols[(c*k + ky)*k + kx, y*W + x] = x[c, y+ky-pad, x+kx-pad]
void im2col(const double* x, int c, int h, int w, int k, int pad, double* cols) {
    const int hw = h * w;
    for (int ch = 0; ch < c; ++ch)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                double* row = cols + static_cast<std::size_t>((ch * k + ky) * k + kx) * hw;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - pad;
                    for (int xx = 0; xx < w; ++xx) {
                        const int sx = xx + kx - pad;
                        row[y * w + xx] = (sy < 0 || sy >= h || sx < 0 || sx >= w)
                                              ? 0.0
                                              : x[(static_cast<std::size_t>(ch) * h + sy) * w + sx];
                    }
                }
            }
}

void col2im(const double* cols, int c, int h, int w, int k, int pad, double* x) {
    const int hw = h * w;
    for (int ch = 0; ch < c; ++ch)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const double* row = cols + static_cast<std::size_t>((ch * k + ky) * k + kx) * hw;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - pad;
                    if (sy < 0 || sy >= h) continue;
                    for (int xx = 0; xx < w; ++xx) {
                        const int sx = xx + kx - pad;
                        if (sx < 0 || sx >= w) continue;
                        x[(static_cast<std::size_t>(ch) * h + sy) * w + sx] += row[y * w + xx];
                    }
                }
            }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int pad) {
    require(x.shape().size() == 3, "conv2d: input must be [C,H,W], got " + shape_str(x.shape()));
    require(weight.shape().size() == 4, "conv2d: weight must be [O,C,k,k]");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int o = weight.dim(0), k = weight.dim(2);
    require(weight.dim(1) == c && weight.dim(3) == k, "conv2d: weight " + shape_str(weight.shape()) +
                                                          " does not match input " + shape_str(x.shape()));
    require(bias.size() == static_cast<std::size_t>(o), "conv2d: bias size mismatch");
    require(2 * pad == k - 1, "conv2d: only same-size convolutions are supported");
    const int hw = h * w;
    const int ck = c * k * k;
    auto cols = std::make_shared<std::vector<double>>(static_cast<std::size_t>(ck) * hw);
    im2col(x.value().data(), c, h, w, k, pad, cols->data());

    std::vector<double> out(static_cast<std::size_t>(o) * hw);
    MapMat om(out.data(), o, hw);
    om.noalias() = CMapMat(weight.value().data(), o, ck) * CMapMat(cols->data(), ck, hw);
    auto bv = bias.value();
    for (int oc = 0; oc < o; ++oc) om.row(oc).array() += bv[oc];

    return make_op({o, h, w}, std::move(out), {x, weight, bias}, [=](Node& self) {
        CMapMat g(self.grad.data(), o, hw);
        if (wants(self, 1)) MapMat(pgrad(self, 1).data(), o, ck).noalias() += g * CMapMat(cols->data(), ck, hw).transpose();
        if (wants(self, 2)) {
            auto& gb = pgrad(self, 2);
            for (int oc = 0; oc < o; ++oc) gb[oc] += g.row(oc).sum();
        }
        if (wants(self, 0)) {
            std::vector<double> dcols(static_cast<std::size_t>(ck) * hw);
            MapMat(dcols.data(), ck, hw).noalias() = CMapMat(pvalue(self, 1).data(), o, ck).transpose() * g;
            col2im(dcols.data(), c, h, w, k, pad, pgrad(self, 0).data());
        }
    });
}

Tensor conv_transpose2x2(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require(x.shape().size() == 3, "conv_transpose2x2: input must be [C,H,W], got " + shape_str(x.shape()));
    require(weight.shape().size() == 4 && weight.dim(2) == 2 && weight.dim(3) == 2,
            "conv_transpose2x2: weight must be [C,O,2,2]");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int o = weight.dim(1);
    require(weight.dim(0) == c, "conv_transpose2x2: channel mismatch");
    require(bias.size() == static_cast<std::size_t>(o), "conv_transpose2x2: bias size mismatch");
    const int hw = h * w;
    const int o4 = o * 4;
    const int ow = 2 * w;

    RowMat y = CMapMat(weight.value().data(), c, o4).transpose() * CMapMat(x.value().data(), c, hw);
    std::vector<double> out(static_cast<std::size_t>(o) * 4 * hw);
    auto bv = bias.value();
    for (int oc = 0; oc < o; ++oc)
        for (int d = 0; d < 4; ++d) {
            const int dy = d / 2, dx = d % 2;
            for (int yy = 0; yy < h; ++yy)
                for (int xx = 0; xx < w; ++xx)
                    out[(static_cast<std::size_t>(oc) * 2 * h + 2 * yy + dy) * ow + 2 * xx + dx] =
                        y(oc * 4 + d, yy * w + xx) + bv[oc];
        }

    return make_op({o, 2 * h, 2 * w}, std::move(out), {x, weight, bias}, [=](Node& self) {
        RowMat gy(o4, hw);
        for (int oc = 0; oc < o; ++oc)
            for (int d = 0; d < 4; ++d) {
                const int dy = d / 2, dx = d % 2;
                for (int yy = 0; yy < h; ++yy)
                    for (int xx = 0; xx < w; ++xx)
                        gy(oc * 4 + d, yy * w + xx) =
                            self.grad[(static_cast<std::size_t>(oc) * 2 * h + 2 * yy + dy) * ow + 2 * xx + dx];
            }
        if (wants(self, 2)) {
            auto& gb = pgrad(self, 2);
            for (int oc = 0; oc < o; ++oc) gb[oc] += gy.middleRows(oc * 4, 4).sum();
        }
        if (wants(self, 1)) {
            MapMat(pgrad(self, 1).data(), c, o4).noalias() += CMapMat(pvalue(self, 0).data(), c, hw) * gy.transpose();
        }
        if (wants(self, 0)) {
            MapMat(pgrad(self, 0).data(), c, hw).noalias() += CMapMat(pvalue(self, 1).data(), c, o4) * gy;
        }
    });
}

}  // namespace vamae::ad
