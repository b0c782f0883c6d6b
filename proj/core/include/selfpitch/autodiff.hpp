// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation over dense real tensors,
// sized for small pitch networks and the analysis-by-synthesis fit. One
// Graph is a single-owner tape: nodes are appended in creation order (which
// is a topological order) and backward() walks the tape once in reverse.
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "selfpitch/common.hpp"

namespace selfpitch::ad {

struct Shape {
    int rank = 0;
    std::array<int, 3> d{1, 1, 1};

    int numel() const {
        int n = 1;
        for (int i = 0; i < rank; ++i) n *= d[i];
        return n;
    }
    int last() const { return rank == 0 ? 1 : d[rank - 1]; }
    int rows() const { return rank == 0 ? 1 : numel() / last(); }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

inline Shape make_shape(int a) { return Shape{1, {a, 1, 1}}; }
inline Shape make_shape(int a, int b) { return Shape{2, {a, b, 1}}; }
inline Shape make_shape(int a, int b, int c) { return Shape{3, {a, b, c}}; }

/// Plain dense tensor; doubles as parameter storage (value + gradient slot).
template <typename Real>
struct Tensor {
    Shape shape;
    std::vector<Real> v;
    std::vector<Real> g;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(s), v(s.numel(), Real(0)), g(s.numel(), Real(0)) {}
    Tensor(Shape s, std::vector<Real> values) : shape(s), v(std::move(values)), g(s.numel(), Real(0)) {
        if (int(v.size()) != s.numel())
            throw ShapeError("tensor init: " + std::to_string(v.size()) + " values for shape " + s.str());
    }
    int numel() const { return shape.numel(); }
    void zero_grad() { std::fill(g.begin(), g.end(), Real(0)); }
};

enum class PadMode { kZero, kReplicate, kCircular };

enum class Op : std::uint8_t {
    kLeaf, kConst,
    kAdd, kMul, kDiv, kAffine, kMatmul, kConv1d,
    kRelu, kSoftplus, kSin, kExp, kLog, kAbs,
    kCumsum, kSoftmax, kLogSoftmax, kCrossEntropy, kHuber,
    kRoll, kRollRows,
    kUpsampleLinear, kUpsampleNearest,
    kStftMag,
    kSum, kMean, kSumRows, kSumAxis0,
    kChannelNorm,
};

const char* op_name(Op op);

/// Windowed real-DFT-as-matrix plan for one STFT resolution. The cos/sin
/// rows carry the Hann window so forward/backward are plain dot products.
template <typename Real>
struct StftPlan {
    int fft = 0;
    int hop = 0;
    int bins = 0;
    std::vector<Real> cos_w;  // bins x fft, row-major
    std::vector<Real> sin_w;  // bins x fft
};

template <typename Real>
StftPlan<Real> make_stft_plan(int fft_size, int hop);

template <typename Real>
class Graph {
  public:
    using Id = int;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // -- graph inputs ------------------------------------------------------
    Id leaf(Tensor<Real>& param);                    // gradient flows to param.g
    Id constant(Shape s, std::span<const Real> data);
    Id constant(const Tensor<Real>& t) { return constant(t.shape, std::span<const Real>(t.v)); }
    Id scalar(Real value);

    // -- elementwise / binary ----------------------------------------------
    Id add(Id a, Id b);            // same shape, or b scalar
    Id mul(Id a, Id b);            // same shape, or b scalar
    Id div(Id a, Id b);            // same shape, or b scalar
    Id sub(Id a, Id b) { return add(a, affine(b, Real(-1), Real(0))); }
    Id affine(Id a, Real scale, Real shift);
    Id relu(Id a);
    Id softplus(Id a);
    Id sin(Id a);
    Id exp(Id a);
    Id log(Id a);                  // inputs must be strictly positive
    Id abs(Id a);
    Id huber(Id a, Real delta);

    // -- linear algebra / structure ------------------------------------------
    Id matmul(Id a, Id b);         // (m,k) x (k,n) -> (m,n)
    Id conv1d(Id x, Id w, Id bias, int stride, int pad, int groups, PadMode mode);
    Id channel_norm(Id x, Id gamma, Id beta, Real eps);  // (N,C,L), stats over L

    // -- rows = all leading axes flattened, last axis is the row ------------
    Id cumsum(Id a);
    Id softmax(Id a);
    Id log_softmax(Id a);
    Id cross_entropy(Id logits, Id target);  // target must be grad-free; out: one value per row
    Id roll(Id a, int delta);                // circular along last axis
    Id roll_rows(Id a, std::span<const int> deltas);
    Id sum_rows(Id a);

    // -- resampling (rows = frames axis last) --------------------------------
    Id upsample_linear(Id a, int hop, int out_len);
    Id upsample_nearest(Id a, int hop, int out_len);

    // -- spectral -------------------------------------------------------------
    Id stft_mag(Id a, const StftPlan<Real>& plan);  // 1-D signal -> (frames, bins)

    // -- reductions ------------------------------------------------------------
    Id sum(Id a);
    Id mean(Id a);
    Id sum_axis0(Id a);  // (A,B) -> (B)

    // -- execution ---------------------------------------------------------
    const std::vector<Real>& val(Id id) const { return nodes_[std::size_t(id)].val; }
    /// gradient buffer of a node after backward(root, /*free_buffers=*/false);
    /// empty when the node is not on any path to the root
    const std::vector<Real>& grad(Id id) const { return nodes_[std::size_t(id)].grad; }
    const Shape& shape(Id id) const { return nodes_[std::size_t(id)].shape; }
    /// Backpropagate from a scalar root; accumulates into leaf tensors' .g.
    /// Node buffers are released as the walk passes them when free_buffers.
    void backward(Id root, bool free_buffers = true);
    std::size_t node_count() const { return nodes_.size(); }
    /// Throws NumericError if any live node holds a non-finite value.
    void check_finite(const std::string& context) const;

  private:
    struct Node {
        Op op = Op::kConst;
        Shape shape;
        std::vector<Real> val;
        std::vector<Real> grad;  // allocated lazily during backward
        int a = -1, b = -1, c = -1;
        Real p0 = 0, p1 = 0;
        int i0 = 0, i1 = 0, i2 = 0, i3 = 0;
        std::vector<int> deltas;       // kRollRows
        std::vector<Real> saved;       // op-specific activations
        Tensor<Real>* param = nullptr; // kLeaf
        const StftPlan<Real>* plan = nullptr;
    };

    Id push(Node n) {
        nodes_.push_back(std::move(n));
        return Id(nodes_.size() - 1);
    }
    Node& at(Id id) { return nodes_[std::size_t(id)]; }
    void ensure_grad(Node& n) {
        if (n.grad.empty()) n.grad.assign(n.val.size(), Real(0));
    }
    void backward_node(Id id);

    std::vector<Node> nodes_;
    bool ran_backward_ = false;
};

using GraphF = Graph<float>;
using GraphD = Graph<double>;

}  // namespace selfpitch::ad
