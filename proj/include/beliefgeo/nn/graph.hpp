#pragma once

#include "beliefgeo/common.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace beliefgeo::nn {

using beliefgeo::Mat;

// ---------------------------------------------------------------------------
// Parameter: trainable tensor plus AdamW state. Moments start at zero.
// ---------------------------------------------------------------------------

template <class Real>
struct Parameter {
  std::string name;
  Mat<Real> value;
  Mat<Real> grad;
  Mat<Real> m;  // first moment
  Mat<Real> v;  // second moment
  long step_count = 0;
  bool weight_decay = true;  // LayerNorm gains and biases opt out

  Parameter(std::string n, Mat<Real> init, bool decay = true)
      : name(std::move(n)),
        value(std::move(init)),
        grad(Mat<Real>::Zero(value.rows(), value.cols())),
        m(Mat<Real>::Zero(value.rows(), value.cols())),
        v(Mat<Real>::Zero(value.rows(), value.cols())),
        weight_decay(decay) {}

  void zero_grad() { grad.setZero(); }
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// One decoupled-weight-decay Adam step over all parameters with populated
// gradients. Deterministic given identical state; empty set is a no-op.
template <class Real>
void adamw_step(std::span<Parameter<Real>* const> params, const AdamWConfig& cfg);

// Uniform init scaled by 1/sqrt(fan_in).
template <class Real>
Mat<Real> fan_in_init(int rows, int cols, int fan_in, Rng& rng);

enum class OpKind {
  kInput,
  kParam,
  kMatMul,
  kAdd,
  kAddRowBias,
  kMul,
  kScale,
  kLayerNorm,
  kSoftmax,
  kGelu,
  kRelu,
  kTopK,
  kAppendZeroCol,
  kCausalAttention,
  kEmbedding,
  kSoftmaxCrossEntropy,
  kMse,
  kSimplexPenalty,
};

const char* op_name(OpKind k);

// ---------------------------------------------------------------------------
// Graph: a replayable tape over 2-D tensors. Build once (shapes fixed), then
// per step: set_input/set_ids, forward(), backward(loss). backward accumulates
// into Parameter::grad so callers control zeroing.
// ---------------------------------------------------------------------------

template <class Real>
class Graph {
 public:
  using NodeId = int;

  NodeId input(int rows, int cols, std::string name = "input");
  NodeId param(Parameter<Real>& p);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId add_row_bias(NodeId x, NodeId bias);  // bias is [1 x cols]
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, Real s);
  NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, Real eps = Real(1e-5));
  NodeId softmax(NodeId x);  // row-wise
  NodeId gelu(NodeId x);
  NodeId relu(NodeId x);
  // Keeps the k largest entries per row (value desc, index asc on ties),
  // skipping exact zeros; everything else is zeroed.
  NodeId topk(NodeId x, int k);
  // [n x c] -> [n x c+1] with a fixed zero last column
  NodeId append_zero_col(NodeId x);
  // Multi-head causal self-attention over q,k,v of shape [B*T x d].
  NodeId causal_attention(NodeId q, NodeId k, NodeId v, int n_heads, int seq_len);
  // Gathers rows of `table` by ids; ids are mutable via set_ids.
  NodeId embedding(NodeId table, std::vector<int> ids);
  // Mean cross-entropy between row-wise softmax(logits) and target ids.
  NodeId softmax_cross_entropy(NodeId logits, std::vector<int> targets);
  NodeId mse(NodeId pred, NodeId target);  // mean over all entries
  // lambda1*(1 - ||b||_1) + lambda2*sum_i |b_i| 1(b_i<0), averaged over rows.
  NodeId simplex_penalty(NodeId bary, Real lambda1, Real lambda2);

  void set_input(NodeId id, const Mat<Real>& value);
  void set_ids(NodeId id, std::span<const int> ids);

  // Recomputes every node in insertion order. Throws NumericalError naming
  // the eagerly detected op if the final node is non-finite.
  void forward();
  Real scalar(NodeId id) const;
  void backward(NodeId loss);

  const Mat<Real>& value(NodeId id) const { return nodes_[id].val; }
  const Mat<Real>& gradient(NodeId id) const { return nodes_[id].grad; }
  int rows(NodeId id) const { return static_cast<int>(nodes_[id].val.rows()); }
  int cols(NodeId id) const { return static_cast<int>(nodes_[id].val.cols()); }

 private:
  struct Node {
    OpKind op;
    int a = -1, b = -1, c = -1;      // operands
    Mat<Real> val;
    Mat<Real> grad;
    Parameter<Real>* parameter = nullptr;
    std::vector<int> ids;            // embedding / cross-entropy targets
    Real attr0 = Real(0), attr1 = Real(0);
    int heads = 0, seq_len = 0, k = 0;
    Mat<Real> cache0;                // op-specific forward cache
    Mat<Real> cache1;
    std::vector<int> mask;           // topk selection
  };

  NodeId push(Node n);
  void compute(Node& n);
  void accumulate(Node& n);
  void check_shape(bool cond, const char* what) const;

  std::vector<Node> nodes_;
};

using Graphd = Graph<double>;
using Graphf = Graph<float>;

}  // namespace beliefgeo::nn
