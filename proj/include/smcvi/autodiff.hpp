#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "smcvi/tensor.hpp"

namespace smcvi {

class Tape;

/// A tensor value, optionally tied to a node on a recording tape.
/// Values without a tape are constants: they carry no gradient and every
/// operation whose inputs are all constants produces a constant without recording.
class TapeVar {
  public:
    static constexpr std::size_t kNoNode = std::numeric_limits<std::size_t>::max();

    TapeVar() = default;
    explicit TapeVar(Tensor value);

    const Tensor& value() const { return *value_; }
    std::size_t rows() const { return value_->rows(); }
    std::size_t cols() const { return value_->cols(); }
    double item() const { return value_->item(); }

    bool is_constant() const noexcept { return tape_ == nullptr; }
    Tape* tape() const noexcept { return tape_; }
    std::size_t node() const noexcept { return node_; }

  private:
    friend class Tape;
    TapeVar(std::shared_ptr<const Tensor> value, Tape* tape, std::size_t node)
        : value_(std::move(value)), tape_(tape), node_(node) {}

    std::shared_ptr<const Tensor> value_ = std::make_shared<const Tensor>();
    Tape* tape_ = nullptr;
    std::size_t node_ = kNoNode;
};

/// Maps the cotangent of a node's output to one cotangent per parent.
/// An empty Tensor in the result means "no contribution".
using VjpRule = std::function<std::vector<Tensor>(const Tensor& cotangent)>;

/// Append-only record of a define-by-run computation. Node ids increase in
/// creation order, so reverse id order is a valid reverse topological order.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    TapeVar variable(Tensor value);
    TapeVar record(Tensor value, std::span<const TapeVar> parents, VjpRule rule);

    /// Gradients of a scalar `loss` with respect to each entry of `wrt`.
    /// Constants in `wrt` get zero tensors.
    std::vector<Tensor> grad(const TapeVar& loss, std::span<const TapeVar> wrt) const;

    std::size_t size() const noexcept { return nodes_.size(); }

  private:
    struct Node {
        std::vector<std::size_t> parents;
        std::vector<std::pair<std::size_t, std::size_t>> parent_shapes;
        VjpRule rule;
    };
    std::vector<Node> nodes_;
};

std::vector<Tensor> grad(const TapeVar& loss, std::span<const TapeVar> wrt);

/// Records `forward` as a node whose backward pass is the caller's rule.
TapeVar custom_vjp(Tensor forward, std::span<const TapeVar> parents, VjpRule rule);
TapeVar custom_vjp(Tensor forward, std::initializer_list<TapeVar> parents, VjpRule rule);

enum class UnaryOp { Neg, Exp, Log, Sqrt, Erf, Sigmoid, LeakyRelu, Tanh, Softplus };
enum class BinaryOp { Add, Sub, Mul, Div };
enum class ReduceOp { Sum, Max, LogSumExp };

inline constexpr double kLeakyReluSlope = 0.01;

TapeVar elementwise(UnaryOp op, const TapeVar& a);
/// Operands must have equal shapes, or one of them must be 1x1.
TapeVar elementwise(BinaryOp op, const TapeVar& a, const TapeVar& b);

/// axis 0 reduces over rows (result 1xC), axis 1 over columns (result Rx1),
/// no axis reduces everything to 1x1.
TapeVar reduce(ReduceOp op, const TapeVar& a, std::optional<std::size_t> axis = std::nullopt);

TapeVar matmul(const TapeVar& a, const TapeVar& b);
TapeVar transpose(const TapeVar& a);
TapeVar stop_gradient(const TapeVar& a);

/// Repeats a 1xC row or Rx1 column (or a 1x1 scalar) to the requested shape.
TapeVar broadcast_to(const TapeVar& a, std::size_t rows, std::size_t cols);
TapeVar gather_rows(const TapeVar& a, std::span<const std::size_t> indices);
TapeVar concat_rows(std::span<const TapeVar> parts);
TapeVar concat_cols(std::span<const TapeVar> parts);
TapeVar slice_cols(const TapeVar& a, std::size_t begin, std::size_t count);
TapeVar slice_rows(const TapeVar& a, std::size_t begin, std::size_t count);

inline TapeVar neg(const TapeVar& a) { return elementwise(UnaryOp::Neg, a); }
inline TapeVar exp(const TapeVar& a) { return elementwise(UnaryOp::Exp, a); }
inline TapeVar log(const TapeVar& a) { return elementwise(UnaryOp::Log, a); }
inline TapeVar sqrt(const TapeVar& a) { return elementwise(UnaryOp::Sqrt, a); }
inline TapeVar erf(const TapeVar& a) { return elementwise(UnaryOp::Erf, a); }
inline TapeVar sigmoid(const TapeVar& a) { return elementwise(UnaryOp::Sigmoid, a); }
inline TapeVar leaky_relu(const TapeVar& a) { return elementwise(UnaryOp::LeakyRelu, a); }
inline TapeVar tanh(const TapeVar& a) { return elementwise(UnaryOp::Tanh, a); }
inline TapeVar softplus(const TapeVar& a) { return elementwise(UnaryOp::Softplus, a); }

inline TapeVar sum(const TapeVar& a, std::optional<std::size_t> axis = std::nullopt) {
    return reduce(ReduceOp::Sum, a, axis);
}
inline TapeVar max(const TapeVar& a, std::optional<std::size_t> axis = std::nullopt) {
    return reduce(ReduceOp::Max, a, axis);
}
inline TapeVar logsumexp(const TapeVar& a, std::optional<std::size_t> axis = std::nullopt) {
    return reduce(ReduceOp::LogSumExp, a, axis);
}

TapeVar operator+(const TapeVar& a, const TapeVar& b);
TapeVar operator-(const TapeVar& a, const TapeVar& b);
TapeVar operator*(const TapeVar& a, const TapeVar& b);
TapeVar operator/(const TapeVar& a, const TapeVar& b);
TapeVar operator-(const TapeVar& a);
TapeVar operator+(const TapeVar& a, double b);
TapeVar operator-(const TapeVar& a, double b);
TapeVar operator*(const TapeVar& a, double b);
TapeVar operator*(double a, const TapeVar& b);
TapeVar operator/(const TapeVar& a, double b);

inline TapeVar constant(Tensor value) { return TapeVar(std::move(value)); }
inline TapeVar constant(double value) { return TapeVar(Tensor::scalar(value)); }

/// Central-difference check of the tape gradient of a scalar function.
/// Returns max over coordinates of |autodiff - numeric| / max(1, |numeric|).
double finite_diff_check(const std::function<TapeVar(std::span<const TapeVar>)>& f,
                         std::span<const Tensor> point, double step = 1e-5);

}  // namespace smcvi
