#include "smcvi/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "smcvi/error.hpp"

namespace smcvi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Tape* common_tape(std::span<const TapeVar> parents) {
    Tape* tape = nullptr;
    for (const auto& p : parents) {
        if (p.tape() == nullptr) {
            continue;
        }
        require(tape == nullptr || tape == p.tape(), "operands recorded on different tapes");
        tape = p.tape();
    }
    return tape;
}

TapeVar make_node(Tensor value, std::span<const TapeVar> parents, VjpRule rule) {
    Tape* tape = common_tape(parents);
    if (tape == nullptr) {
        return TapeVar(std::move(value));
    }
    return tape->record(std::move(value), parents, std::move(rule));
}

TapeVar make_node(Tensor value, std::initializer_list<TapeVar> parents, VjpRule rule) {
    return make_node(std::move(value), std::span<const TapeVar>(parents.begin(), parents.size()),
                     std::move(rule));
}

double softplus_value(double x) {
    // log(1 + e^x) without overflow on either tail.
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid_value(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double unary_value(UnaryOp op, double x) {
    switch (op) {
        case UnaryOp::Neg:
            return -x;
        case UnaryOp::Exp:
            return std::exp(x);
        case UnaryOp::Log:
            if (x < 0.0) {
                throw std::domain_error("log of a negative value");
            }
            return x == 0.0 ? -kInf : std::log(x);
        case UnaryOp::Sqrt:
            if (x < 0.0) {
                throw std::domain_error("sqrt of a negative value");
            }
            return std::sqrt(x);
        case UnaryOp::Erf:
            return std::erf(x);
        case UnaryOp::Sigmoid:
            return sigmoid_value(x);
        case UnaryOp::LeakyRelu:
            return x >= 0.0 ? x : kLeakyReluSlope * x;
        case UnaryOp::Tanh:
            return std::tanh(x);
        case UnaryOp::Softplus:
            return softplus_value(x);
    }
    return 0.0;
}

// d op(x)/dx given input x and output y.
double unary_derivative(UnaryOp op, double x, double y) {
    switch (op) {
        case UnaryOp::Neg:
            return -1.0;
        case UnaryOp::Exp:
            return y;
        case UnaryOp::Log:
            return 1.0 / x;
        case UnaryOp::Sqrt:
            return 0.5 / y;
        case UnaryOp::Erf:
            return 2.0 * std::numbers::inv_sqrtpi * std::exp(-x * x);
        case UnaryOp::Sigmoid:
            return y * (1.0 - y);
        case UnaryOp::LeakyRelu:
            return x >= 0.0 ? 1.0 : kLeakyReluSlope;
        case UnaryOp::Tanh:
            return 1.0 - y * y;
        case UnaryOp::Softplus:
            return sigmoid_value(x);
    }
    return 0.0;
}

Tensor sum_to_scalar(const Tensor& t) {
    double s = 0.0;
    for (double v : t.values()) {
        s += v;
    }
    return Tensor::scalar(s);
}

}  // namespace

TapeVar::TapeVar(Tensor value) : value_(std::make_shared<const Tensor>(std::move(value))) {}

TapeVar Tape::variable(Tensor value) {
    nodes_.push_back(Node{});
    return TapeVar(std::make_shared<const Tensor>(std::move(value)), this, nodes_.size() - 1);
}

TapeVar Tape::record(Tensor value, std::span<const TapeVar> parents, VjpRule rule) {
    Node node;
    node.parents.reserve(parents.size());
    node.parent_shapes.reserve(parents.size());
    for (const auto& p : parents) {
        require(p.tape() == nullptr || p.tape() == this, "operand belongs to another tape");
        node.parents.push_back(p.node());
        node.parent_shapes.emplace_back(p.rows(), p.cols());
    }
    node.rule = std::move(rule);
    nodes_.push_back(std::move(node));
    return TapeVar(std::make_shared<const Tensor>(std::move(value)), this, nodes_.size() - 1);
}

std::vector<Tensor> Tape::grad(const TapeVar& loss, std::span<const TapeVar> wrt) const {
    require(loss.value().is_scalar(), "grad needs a scalar loss, got " +
                                          loss.value().shape_string());
    std::vector<Tensor> cotangents(nodes_.size());
    if (!loss.is_constant()) {
        require(loss.tape() == this, "loss belongs to another tape");
        cotangents[loss.node()] = Tensor::scalar(1.0);
        for (std::size_t k = loss.node() + 1; k-- > 0;) {
            const Node& node = nodes_[k];
            if (cotangents[k].empty() || !node.rule) {
                continue;
            }
            std::vector<Tensor> parent_cts = node.rule(cotangents[k]);
            require(parent_cts.size() == node.parents.size(),
                    "backward rule returned the wrong number of cotangents");
            for (std::size_t p = 0; p < parent_cts.size(); ++p) {
                Tensor& ct = parent_cts[p];
                if (ct.empty() || node.parents[p] == TapeVar::kNoNode) {
                    continue;
                }
                const auto [r, c] = node.parent_shapes[p];
                require(ct.rows() == r && ct.cols() == c,
                        "backward rule returned cotangent " + ct.shape_string() +
                            " for a parent of shape [" + std::to_string(r) + "x" +
                            std::to_string(c) + "]");
                Tensor& acc = cotangents[node.parents[p]];
                if (acc.empty()) {
                    acc = std::move(ct);
                } else {
                    acc += ct;
                }
            }
        }
    }
    std::vector<Tensor> out;
    out.reserve(wrt.size());
    for (const auto& w : wrt) {
        if (w.is_constant() || cotangents[w.node()].empty()) {
            out.emplace_back(w.rows(), w.cols(), 0.0);
        } else {
            require(w.tape() == this, "gradient requested for a variable on another tape");
            out.push_back(cotangents[w.node()]);
        }
    }
    return out;
}

std::vector<Tensor> grad(const TapeVar& loss, std::span<const TapeVar> wrt) {
    if (loss.is_constant()) {
        require(loss.value().is_scalar(), "grad needs a scalar loss");
        std::vector<Tensor> out;
        for (const auto& w : wrt) {
            out.emplace_back(w.rows(), w.cols(), 0.0);
        }
        return out;
    }
    return loss.tape()->grad(loss, wrt);
}

TapeVar custom_vjp(Tensor forward, std::span<const TapeVar> parents, VjpRule rule) {
    return make_node(std::move(forward), parents, std::move(rule));
}

TapeVar custom_vjp(Tensor forward, std::initializer_list<TapeVar> parents, VjpRule rule) {
    return make_node(std::move(forward), parents, std::move(rule));
}

TapeVar elementwise(UnaryOp op, const TapeVar& a) {
    const Tensor& x = a.value();
    Tensor y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = unary_value(op, x[i]);
    }
    if (a.is_constant()) {
        return TapeVar(std::move(y));
    }
    auto out = std::make_shared<Tensor>(y);
    auto in = a;
    return make_node(std::move(y), {a}, [op, in, out](const Tensor& g) {
        const Tensor& xv = in.value();
        Tensor d(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) {
            d[i] = g[i] * unary_derivative(op, xv[i], (*out)[i]);
        }
        return std::vector<Tensor>{std::move(d)};
    });
}

TapeVar elementwise(BinaryOp op, const TapeVar& a, const TapeVar& b) {
    const Tensor& x = a.value();
    const Tensor& z = b.value();
    const bool same = x.same_shape(z);
    require(same || x.is_scalar() || z.is_scalar(),
            "elementwise operands must match or be scalar: " + x.shape_string() + " vs " +
                z.shape_string());
    const std::size_t rows = same || z.is_scalar() ? x.rows() : z.rows();
    const std::size_t cols = same || z.is_scalar() ? x.cols() : z.cols();
    const bool xs = !same && x.is_scalar();
    const bool zs = !same && z.is_scalar();
    Tensor y(rows, cols);
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double u = xs ? x[0] : x[i];
        const double v = zs ? z[0] : z[i];
        switch (op) {
            case BinaryOp::Add:
                y[i] = u + v;
                break;
            case BinaryOp::Sub:
                y[i] = u - v;
                break;
            case BinaryOp::Mul:
                y[i] = u * v;
                break;
            case BinaryOp::Div:
                y[i] = u / v;
                break;
        }
    }
    if (a.is_constant() && b.is_constant()) {
        return TapeVar(std::move(y));
    }
    return make_node(std::move(y), {a, b}, [op, a, b, xs, zs](const Tensor& g) {
        const Tensor& xv = a.value();
        const Tensor& zv = b.value();
        Tensor ga(g.rows(), g.cols());
        Tensor gb(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double u = xs ? xv[0] : xv[i];
            const double v = zs ? zv[0] : zv[i];
            switch (op) {
                case BinaryOp::Add:
                    ga[i] = g[i];
                    gb[i] = g[i];
                    break;
                case BinaryOp::Sub:
                    ga[i] = g[i];
                    gb[i] = -g[i];
                    break;
                case BinaryOp::Mul:
                    ga[i] = g[i] * v;
                    gb[i] = g[i] * u;
                    break;
                case BinaryOp::Div:
                    ga[i] = g[i] / v;
                    gb[i] = -g[i] * u / (v * v);
                    break;
            }
        }
        if (a.is_constant()) {
            ga = Tensor();
        } else if (xs) {
            ga = sum_to_scalar(ga);
        }
        if (b.is_constant()) {
            gb = Tensor();
        } else if (zs) {
            gb = sum_to_scalar(gb);
        }
        return std::vector<Tensor>{std::move(ga), std::move(gb)};
    });
}

TapeVar reduce(ReduceOp op, const TapeVar& a, std::optional<std::size_t> axis) {
    const Tensor& x = a.value();
    require(!x.empty(), "empty reduction");
    require(!axis || *axis <= 1, "reduction axis must be 0 or 1");
    // Each output element reduces a strided group of inputs.
    const std::size_t groups = !axis ? 1 : (*axis == 0 ? x.cols() : x.rows());
    const std::size_t length = !axis ? x.size() : (*axis == 0 ? x.rows() : x.cols());
    auto index = [&x, axis](std::size_t g, std::size_t k) -> std::size_t {
        if (!axis) {
            return k;
        }
        return *axis == 0 ? k * x.cols() + g : g * x.cols() + k;
    };
    Tensor y = !axis ? Tensor(1, 1) : (*axis == 0 ? Tensor(1, x.cols()) : Tensor(x.rows(), 1));
    // Per-input backward weights: 1 for sum, argmax indicator, or softmax weights.
    Tensor weights(x.rows(), x.cols());
    for (std::size_t g = 0; g < groups; ++g) {
        if (op == ReduceOp::Sum) {
            double s = 0.0;
            for (std::size_t k = 0; k < length; ++k) {
                s += x[index(g, k)];
                weights[index(g, k)] = 1.0;
            }
            y[g] = s;
            continue;
        }
        std::size_t arg = 0;
        double m = x[index(g, 0)];
        for (std::size_t k = 1; k < length; ++k) {
            if (x[index(g, k)] > m) {
                m = x[index(g, k)];
                arg = k;
            }
        }
        if (op == ReduceOp::Max) {
            y[g] = m;
            weights[index(g, arg)] = 1.0;
            continue;
        }
        if (m == -kInf) {
            // All entries carry zero mass; the result is -inf with no gradient.
            y[g] = -kInf;
            continue;
        }
        double s = 0.0;
        for (std::size_t k = 0; k < length; ++k) {
            const double e = std::exp(x[index(g, k)] - m);
            weights[index(g, k)] = e;
            s += e;
        }
        y[g] = m + std::log(s);
        for (std::size_t k = 0; k < length; ++k) {
            weights[index(g, k)] /= s;
        }
    }
    if (a.is_constant()) {
        return TapeVar(std::move(y));
    }
    auto w = std::make_shared<const Tensor>(std::move(weights));
    const std::size_t cols = x.cols();
    return make_node(std::move(y), {a}, [w, axis, cols](const Tensor& g) {
        Tensor d(w->rows(), w->cols());
        for (std::size_t i = 0; i < d.size(); ++i) {
            const std::size_t r = i / cols;
            const std::size_t c = i % cols;
            const double gi = !axis ? g[0] : (*axis == 0 ? g[c] : g[r]);
            d[i] = gi * (*w)[i];
        }
        return std::vector<Tensor>{std::move(d)};
    });
}

TapeVar matmul(const TapeVar& a, const TapeVar& b) {
    Tensor y = matmul(a.value(), b.value());
    return make_node(std::move(y), {a, b}, [a, b](const Tensor& g) {
        Tensor ga = a.is_constant() ? Tensor() : matmul(g, b.value().transposed());
        Tensor gb = b.is_constant() ? Tensor() : matmul(a.value().transposed(), g);
        return std::vector<Tensor>{std::move(ga), std::move(gb)};
    });
}

TapeVar transpose(const TapeVar& a) {
    return make_node(a.value().transposed(), {a}, [](const Tensor& g) {
        return std::vector<Tensor>{g.transposed()};
    });
}

TapeVar stop_gradient(const TapeVar& a) { return TapeVar(a.value()); }

TapeVar broadcast_to(const TapeVar& a, std::size_t rows, std::size_t cols) {
    const Tensor& x = a.value();
    const bool row_like = x.rows() == 1 && (x.cols() == cols || x.cols() == 1);
    const bool col_like = x.cols() == 1 && (x.rows() == rows || x.rows() == 1);
    require(row_like || col_like, "cannot broadcast " + x.shape_string() + " to [" +
                                      std::to_string(rows) + "x" + std::to_string(cols) + "]");
    const std::size_t xr = x.rows();
    const std::size_t xc = x.cols();
    Tensor y(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            y(r, c) = x(xr == 1 ? 0 : r, xc == 1 ? 0 : c);
        }
    }
    return make_node(std::move(y), {a}, [xr, xc](const Tensor& g) {
        Tensor d(xr, xc);
        for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < g.cols(); ++c) {
                d(xr == 1 ? 0 : r, xc == 1 ? 0 : c) += g(r, c);
            }
        }
        return std::vector<Tensor>{std::move(d)};
    });
}

TapeVar gather_rows(const TapeVar& a, std::span<const std::size_t> indices) {
    const Tensor& x = a.value();
    Tensor y(indices.size(), x.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        require(indices[i] < x.rows(), "gather index out of range");
        std::copy_n(x.row_span(indices[i]).begin(), x.cols(), y.row_span(i).begin());
    }
    if (a.is_constant()) {
        return TapeVar(std::move(y));
    }
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    const std::size_t rows = x.rows();
    return make_node(std::move(y), {a}, [idx = std::move(idx), rows](const Tensor& g) {
        Tensor d(rows, g.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            for (std::size_t c = 0; c < g.cols(); ++c) {
                d(idx[i], c) += g(i, c);
            }
        }
        return std::vector<Tensor>{std::move(d)};
    });
}

TapeVar concat_rows(std::span<const TapeVar> parts) {
    require(!parts.empty(), "concat of nothing");
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    for (const auto& p : parts) {
        require(p.cols() == cols, "concat_rows column mismatch");
        rows += p.rows();
    }
    std::vector<double> data;
    data.reserve(rows * cols);
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        offsets.push_back(data.size() / (cols == 0 ? 1 : cols));
        data.insert(data.end(), p.value().values().begin(), p.value().values().end());
    }
    std::vector<std::size_t> heights;
    for (const auto& p : parts) {
        heights.push_back(p.rows());
    }
    return make_node(Tensor(rows, cols, std::move(data)), parts,
                     [offsets, heights, cols](const Tensor& g) {
                         std::vector<Tensor> out;
                         out.reserve(heights.size());
                         for (std::size_t k = 0; k < heights.size(); ++k) {
                             auto first = g.values().begin() +
                                          static_cast<std::ptrdiff_t>(offsets[k] * cols);
                             out.emplace_back(heights[k], cols,
                                              std::vector<double>(
                                                  first, first + static_cast<std::ptrdiff_t>(
                                                                     heights[k] * cols)));
                         }
                         return out;
                     });
}

TapeVar concat_cols(std::span<const TapeVar> parts) {
    require(!parts.empty(), "concat of nothing");
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
        require(p.rows() == rows, "concat_cols row mismatch");
        widths.push_back(p.cols());
        cols += p.cols();
    }
    Tensor y(rows, cols);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < p.cols(); ++c) {
                y(r, offset + c) = p.value()(r, c);
            }
        }
        offset += p.cols();
    }
    return make_node(std::move(y), parts, [widths, rows](const Tensor& g) {
        std::vector<Tensor> out;
        std::size_t off = 0;
        for (std::size_t w : widths) {
            Tensor d(rows, w);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < w; ++c) {
                    d(r, c) = g(r, off + c);
                }
            }
            off += w;
            out.push_back(std::move(d));
        }
        return out;
    });
}

TapeVar slice_cols(const TapeVar& a, std::size_t begin, std::size_t count) {
    const Tensor& x = a.value();
    require(begin + count <= x.cols(), "column slice out of range");
    Tensor y(x.rows(), count);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < count; ++c) {
            y(r, c) = x(r, begin + c);
        }
    }
    const std::size_t rows = x.rows();
    const std::size_t cols = x.cols();
    return make_node(std::move(y), {a}, [rows, cols, begin, count](const Tensor& g) {
        Tensor d(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < count; ++c) {
                d(r, begin + c) = g(r, c);
            }
        }
        return std::vector<Tensor>{std::move(d)};
    });
}

TapeVar slice_rows(const TapeVar& a, std::size_t begin, std::size_t count) {
    const Tensor& x = a.value();
    require(begin + count <= x.rows(), "row slice out of range");
    auto first = x.values().begin() + static_cast<std::ptrdiff_t>(begin * x.cols());
    Tensor y(count, x.cols(),
             std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * x.cols())));
    const std::size_t rows = x.rows();
    const std::size_t cols = x.cols();
    return make_node(std::move(y), {a}, [rows, cols, begin](const Tensor& g) {
        Tensor d(rows, cols);
        std::copy(g.values().begin(), g.values().end(),
                  d.values().begin() + static_cast<std::ptrdiff_t>(begin * cols));
        return std::vector<Tensor>{std::move(d)};
    });
}

TapeVar operator+(const TapeVar& a, const TapeVar& b) { return elementwise(BinaryOp::Add, a, b); }
TapeVar operator-(const TapeVar& a, const TapeVar& b) { return elementwise(BinaryOp::Sub, a, b); }
TapeVar operator*(const TapeVar& a, const TapeVar& b) { return elementwise(BinaryOp::Mul, a, b); }
TapeVar operator/(const TapeVar& a, const TapeVar& b) { return elementwise(BinaryOp::Div, a, b); }
TapeVar operator-(const TapeVar& a) { return elementwise(UnaryOp::Neg, a); }
TapeVar operator+(const TapeVar& a, double b) { return a + constant(b); }
TapeVar operator-(const TapeVar& a, double b) { return a - constant(b); }
TapeVar operator*(const TapeVar& a, double b) { return a * constant(b); }
TapeVar operator*(double a, const TapeVar& b) { return constant(a) * b; }
TapeVar operator/(const TapeVar& a, double b) { return a / constant(b); }

double finite_diff_check(const std::function<TapeVar(std::span<const TapeVar>)>& f,
                         std::span<const Tensor> point, double step) {
    Tape tape;
    std::vector<TapeVar> vars;
    vars.reserve(point.size());
    for (const auto& p : point) {
        vars.push_back(tape.variable(p));
    }
    const TapeVar loss = f(vars);
    const std::vector<Tensor> analytic = tape.grad(loss, vars);

    auto evaluate = [&f](const std::vector<Tensor>& at) {
        std::vector<TapeVar> consts;
        consts.reserve(at.size());
        for (const auto& t : at) {
            consts.emplace_back(t);
        }
        return f(consts).item();
    };

    std::vector<Tensor> shifted(point.begin(), point.end());
    double worst = 0.0;
    for (std::size_t p = 0; p < point.size(); ++p) {
        for (std::size_t i = 0; i < point[p].size(); ++i) {
            const double x0 = point[p][i];
            shifted[p][i] = x0 + step;
            const double up = evaluate(shifted);
            shifted[p][i] = x0 - step;
            const double down = evaluate(shifted);
            shifted[p][i] = x0;
            const double numeric = (up - down) / (2.0 * step);
            const double err =
                std::abs(analytic[p][i] - numeric) / std::max(1.0, std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace smcvi
