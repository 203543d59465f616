#include "beliefgeo/nn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace beliefgeo::nn {

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::kInput: return "input";
    case OpKind::kParam: return "param";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kAddRowBias: return "add_row_bias";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kGelu: return "gelu";
    case OpKind::kRelu: return "relu";
    case OpKind::kTopK: return "topk";
    case OpKind::kAppendZeroCol: return "append_zero_col";
    case OpKind::kCausalAttention: return "causal_attention";
    case OpKind::kEmbedding: return "embedding";
    case OpKind::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
    case OpKind::kMse: return "mse";
    case OpKind::kSimplexPenalty: return "simplex_penalty";
  }
  return "?";
}

template <class Real>
Mat<Real> fan_in_init(int rows, int cols, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
  Mat<Real> m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = static_cast<Real>(rng.uniform(-bound, bound));
  return m;
}

template <class Real>
void adamw_step(std::span<Parameter<Real>* const> params, const AdamWConfig& cfg) {
  BG_CHECK(cfg.lr > 0.0, "adamw_step: lr must be positive");
  for (Parameter<Real>* p : params) {
    p->step_count += 1;
    const double t = static_cast<double>(p->step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    const Real b1 = static_cast<Real>(cfg.beta1), b2 = static_cast<Real>(cfg.beta2);
    p->m = b1 * p->m + (Real(1) - b1) * p->grad;
    p->v = b2 * p->v + (Real(1) - b2) * p->grad.cwiseProduct(p->grad);
    const Real lr = static_cast<Real>(cfg.lr);
    const Real eps = static_cast<Real>(cfg.eps);
    Mat<Real> mhat = p->m / static_cast<Real>(bc1);
    Mat<Real> vhat = p->v / static_cast<Real>(bc2);
    p->value.array() -= lr * (mhat.array() / (vhat.array().sqrt() + eps));
    if (p->weight_decay && cfg.weight_decay != 0.0) {
      p->value.array() -= lr * static_cast<Real>(cfg.weight_decay) * p->value.array();
    }
  }
}

// ---------------------------------------------------------------------------

template <class Real>
typename Graph<Real>::NodeId Graph<Real>::push(Node n) {
  nodes_.push_back(std::move(n));
  Node& nn = nodes_.back();
  if (nn.op != OpKind::kInput && nn.op != OpKind::kParam) compute(nn);
  nn.grad = Mat<Real>::Zero(nn.val.rows(), nn.val.cols());
  return static_cast<NodeId>(nodes_.size()) - 1;
}

template <class Real>
void Graph<Real>::check_shape(bool cond, const char* what) const {
  if (!cond) throw ContractError(std::string("graph: shape mismatch in ") + what);
}

template <class Real>
typename Graph<Real>::NodeId Graph<Real>::input(int rows, int cols, std::string) {
  Node n;
  n.op = OpKind::kInput;
  n.val = Mat<Real>::Zero(rows, cols);
  return push(std::move(n));
}

template <class Real>
typename Graph<Real>::NodeId Graph<Real>::param(Parameter<Real>& p) {
  Node n;
  n.op = OpKind::kParam;
  n.parameter = &p;
  n.val = p.value;
  return push(std::move(n));
}

template <class Real>
typename Graph<Real>::NodeId Graph<Real>::matmul(NodeId a, NodeId b) {
  check_shape(cols(a) == rows(b), "matmul");
  Node n;
  n.op = OpKind::kMatMul;
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

template <class Real>
typename Graph<Real>::NodeId Graph<Real>::add(NodeId a, NodeId b) {
  check_shape(rows(a) == rows(b) && cols(a) == cols(b), "add");
  Node n;
  n.op = OpKind::kAdd;
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

template <class Real>
typename Graph<Real>::NodeId Graph<Real>::add_row_bias(NodeId x, NodeId bias) {
  check_shape(rows(bias) == 1 && cols(bias) == cols(x), "add_row_bias");
  Node n;
  n.op = OpKind::kAddRowBias;
  n.a = x;
  n.b = bias;
  return push(std::move(n));
}

template <class Real>
typename Graph<Real>::NodeId Graph<Real>::mul(NodeId a, NodeId b) {
  check_shape(rows(a) == rows(b) && cols(a) == cols(b), "mul");
  Node n;
  n.op = OpKind::kMul;
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

template <class Real>
typename Graph<Real>::NodeId Graph<Real>::scale(NodeId a, Real s) {
  Node n;
  n.op = OpKind::kScale;
  n.a = a;
  n.attr0 = s;
  return push(std::move(n));
}

template <class Real>
typename Graph<Real>::NodeId Graph<Real>::layer_norm(NodeId x, NodeId gamma, NodeId beta, Real eps) {
  check_shape(rows(gamma) == 1 && cols(gamma) == cols(x), "layer_norm gamma");
  check_shape(rows(beta) == 1 && cols(beta) == cols(x), "layer_norm beta");
  Node n;
  n.op = OpKind::kLayerNorm;
  n.a = x;
  n.b = gamma;
  n.c = beta;
  n.attr0 = eps;
  return push(std::move(n));
}

template <class Real>
typename Graph<Real>::NodeId Graph<Real>::softmax(NodeId x) {
  Node n;
  n.op = OpKind::kSoftmax;
  n.a = x;
  return push(std::move(n));
}

template <class Real>
typename Graph<Real>::NodeId Graph<Real>::gelu(NodeId x) {
  Node n;
  n.op = OpKind::kGelu;
  n.a = x;
  return push(std::move(n));
}

template <class Real>
typename Graph<Real>::NodeId Graph<Real>::relu(NodeId x) {
  Node n;
  n.op = OpKind::kRelu;
  n.a = x;
  return push(std::move(n));
}

template <class Real>
typename Graph<Real>::NodeId Graph<Real>::topk(NodeId x, int k) {
  BG_CHECK(k >= 1, "topk: k must be >= 1");
  Node n;
  n.op = OpKind::kTopK;
  n.a = x;
  n.k = k;
  return push(std::move(n));
}

template <class Real>
typename Graph<Real>::NodeId Graph<Real>::append_zero_col(NodeId x) {
  Node n;
  n.op = OpKind::kAppendZeroCol;
  n.a = x;
  return push(std::move(n));
}

template <class Real>
typename Graph<Real>::NodeId Graph<Real>::causal_attention(NodeId q, NodeId k, NodeId v, int n_heads, int seq_len) {
  const int d = cols(q);
  check_shape(cols(k) == d && cols(v) == d, "attention qkv width");
  check_shape(rows(q) == rows(k) && rows(q) == rows(v), "attention qkv rows");
  BG_CHECK(d % n_heads == 0, "attention: d_model must divide by n_heads");
  BG_CHECK(rows(q) % seq_len == 0, "attention: rows must be a multiple of seq_len");
  Node n;
  n.op = OpKind::kCausalAttention;
  n.a = q;
  n.b = k;
  n.c = v;
  n.heads = n_heads;
  n.seq_len = seq_len;
  return push(std::move(n));
}

template <class Real>
typename Graph<Real>::NodeId Graph<Real>::embedding(NodeId table, std::vector<int> ids) {
  Node n;
  n.op = OpKind::kEmbedding;
  n.a = table;
  n.ids = std::move(ids);
  return push(std::move(n));
}

template <class Real>
typename Graph<Real>::NodeId Graph<Real>::softmax_cross_entropy(NodeId logits, std::vector<int> targets) {
  check_shape(static_cast<int>(targets.size()) == rows(logits), "cross_entropy targets");
  Node n;
  n.op = OpKind::kSoftmaxCrossEntropy;
  n.a = logits;
  n.ids = std::move(targets);
  return push(std::move(n));
}

template <class Real>
typename Graph<Real>::NodeId Graph<Real>::mse(NodeId pred, NodeId target) {
  check_shape(rows(pred) == rows(target) && cols(pred) == cols(target), "mse");
  Node n;
  n.op = OpKind::kMse;
  n.a = pred;
  n.b = target;
  return push(std::move(n));
}

template <class Real>
typename Graph<Real>::NodeId Graph<Real>::simplex_penalty(NodeId bary, Real lambda1, Real lambda2) {
  Node n;
  n.op = OpKind::kSimplexPenalty;
  n.a = bary;
  n.attr0 = lambda1;
  n.attr1 = lambda2;
  return push(std::move(n));
}

template <class Real>
void Graph<Real>::set_input(NodeId id, const Mat<Real>& value) {
  Node& n = nodes_[id];
  BG_CHECK(n.op == OpKind::kInput, "set_input: node is not an input");
  check_shape(n.val.rows() == value.rows() && n.val.cols() == value.cols(), "set_input");
  n.val = value;
}

template <class Real>
void Graph<Real>::set_ids(NodeId id, std::span<const int> ids) {
  Node& n = nodes_[id];
  BG_CHECK(n.op == OpKind::kEmbedding || n.op == OpKind::kSoftmaxCrossEntropy,
           "set_ids: node has no id payload");
  BG_CHECK(ids.size() == n.ids.size(), "set_ids: id count is fixed after build");
  std::copy(ids.begin(), ids.end(), n.ids.begin());
}

template <class Real>
Real Graph<Real>::scalar(NodeId id) const {
  const Node& n = nodes_[id];
  BG_CHECK(n.val.size() == 1, "scalar: node is not 1x1");
  return n.val(0, 0);
}

template <class Real>
void Graph<Real>::forward() {
  for (Node& n : nodes_) {
    if (n.op == OpKind::kParam) {
      n.val = n.parameter->value;
    } else if (n.op != OpKind::kInput) {
      compute(n);
    }
  }
  const Node& last = nodes_.back();
  if (last.val.size() == 1 && !std::isfinite(static_cast<double>(last.val(0, 0)))) {
    for (const Node& n : nodes_) {
      if (!n.val.allFinite()) {
        throw NumericalError(std::string("non-finite value produced by op '") + op_name(n.op) + "'");
      }
    }
    throw NumericalError("non-finite loss");
  }
}

template <class Real>
void Graph<Real>::compute(Node& n) {
  const auto A = [&](int i) -> const Mat<Real>& { return nodes_[i].val; };
  switch (n.op) {
    case OpKind::kInput:
    case OpKind::kParam:
      break;
    case OpKind::kMatMul:
      n.val.noalias() = A(n.a) * A(n.b);
      break;
    case OpKind::kAdd:
      n.val = A(n.a) + A(n.b);
      break;
    case OpKind::kAddRowBias:
      n.val = A(n.a).rowwise() + A(n.b).row(0);
      break;
    case OpKind::kMul:
      n.val = A(n.a).cwiseProduct(A(n.b));
      break;
    case OpKind::kScale:
      n.val = n.attr0 * A(n.a);
      break;
    case OpKind::kLayerNorm: {
      const Mat<Real>& x = A(n.a);
      const int R = static_cast<int>(x.rows()), C = static_cast<int>(x.cols());
      if (n.cache0.rows() != R) n.cache0.resize(R, C);  // normalized x
      if (n.cache1.rows() != R) n.cache1.resize(R, 1);  // 1/std per row
      n.val.resize(R, C);
      for (int i = 0; i < R; ++i) {
        const Real mu = x.row(i).mean();
        const Real var = (x.row(i).array() - mu).square().mean();
        const Real inv = Real(1) / std::sqrt(var + n.attr0);
        n.cache1(i, 0) = inv;
        n.cache0.row(i) = (x.row(i).array() - mu) * inv;
      }
      n.val = (n.cache0.array().rowwise() * A(n.b).row(0).array()).rowwise() + A(n.c).row(0).array();
      break;
    }
    case OpKind::kSoftmax: {
      const Mat<Real>& x = A(n.a);
      n.val.resize(x.rows(), x.cols());
      for (int i = 0; i < x.rows(); ++i) {
        const Real m = x.row(i).maxCoeff();
        n.val.row(i) = (x.row(i).array() - m).exp();
        n.val.row(i) /= n.val.row(i).sum();
      }
      break;
    }
    case OpKind::kGelu: {
      const Mat<Real>& x = A(n.a);
      constexpr double kInvSqrt2 = 0.70710678118654752440;
      n.val = x.unaryExpr([](Real t) {
        return static_cast<Real>(0.5 * static_cast<double>(t) *
                                 (1.0 + std::erf(static_cast<double>(t) * kInvSqrt2)));
      });
      break;
    }
    case OpKind::kRelu:
      n.val = A(n.a).cwiseMax(Real(0));
      break;
    case OpKind::kTopK: {
      const Mat<Real>& x = A(n.a);
      const int R = static_cast<int>(x.rows()), C = static_cast<int>(x.cols());
      n.val = Mat<Real>::Zero(R, C);
      n.mask.assign(static_cast<std::size_t>(R) * n.k, -1);
      std::vector<int> idx(C);
      for (int i = 0; i < R; ++i) {
        int m = 0;
        for (int j = 0; j < C; ++j)
          if (x(i, j) != Real(0)) idx[m++] = j;
        const int keep = std::min(n.k, m);
        std::partial_sort(idx.begin(), idx.begin() + keep, idx.begin() + m, [&](int p, int q) {
          if (x(i, p) != x(i, q)) return x(i, p) > x(i, q);
          return p < q;
        });
        for (int t = 0; t < keep; ++t) {
          n.val(i, idx[t]) = x(i, idx[t]);
          n.mask[static_cast<std::size_t>(i) * n.k + t] = idx[t];
        }
      }
      break;
    }
    case OpKind::kAppendZeroCol: {
      const Mat<Real>& x = A(n.a);
      n.val.resize(x.rows(), x.cols() + 1);
      n.val.leftCols(x.cols()) = x;
      n.val.col(x.cols()).setZero();
      break;
    }
    case OpKind::kCausalAttention: {
      const Mat<Real>& q = A(n.a);
      const Mat<Real>& k = A(n.b);
      const Mat<Real>& v = A(n.c);
      const int T = n.seq_len, H = n.heads;
      const int B = static_cast<int>(q.rows()) / T;
      const int dh = static_cast<int>(q.cols()) / H;
      const Real sc = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(dh)));
      n.val.resize(q.rows(), q.cols());
      if (n.cache0.rows() != static_cast<long>(B) * H * T) n.cache0.resize(static_cast<long>(B) * H * T, T);
      n.cache0.setZero();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (int bh = 0; bh < B * H; ++bh) {
        const int b = bh / H, h = bh % H;
        const auto Q = q.block(b * T, h * dh, T, dh);
        const auto K = k.block(b * T, h * dh, T, dh);
        const auto V = v.block(b * T, h * dh, T, dh);
        auto P = n.cache0.middleRows(static_cast<long>(bh) * T, T);
        for (int i = 0; i < T; ++i) {
          Real mx = std::numeric_limits<Real>::lowest();
          for (int j = 0; j <= i; ++j) {
            P(i, j) = sc * Q.row(i).dot(K.row(j));
            mx = std::max(mx, P(i, j));
          }
          Real denom = Real(0);
          for (int j = 0; j <= i; ++j) {
            P(i, j) = std::exp(P(i, j) - mx);
            denom += P(i, j);
          }
          for (int j = 0; j <= i; ++j) P(i, j) /= denom;
        }
        n.val.block(b * T, h * dh, T, dh).noalias() = P * V;
      }
      break;
    }
    case OpKind::kEmbedding: {
      const Mat<Real>& table = A(n.a);
      n.val.resize(static_cast<long>(n.ids.size()), table.cols());
      for (std::size_t i = 0; i < n.ids.size(); ++i) {
        BG_CHECK(n.ids[i] >= 0 && n.ids[i] < table.rows(), "embedding: id out of range");
        n.val.row(static_cast<long>(i)) = table.row(n.ids[i]);
      }
      break;
    }
    case OpKind::kSoftmaxCrossEntropy: {
      const Mat<Real>& x = A(n.a);
      const int R = static_cast<int>(x.rows());
      if (n.cache0.rows() != R) n.cache0.resize(R, x.cols());
      Real total = Real(0);
      for (int i = 0; i < R; ++i) {
        const Real m = x.row(i).maxCoeff();
        n.cache0.row(i) = (x.row(i).array() - m).exp();
        const Real s = n.cache0.row(i).sum();
        n.cache0.row(i) /= s;
        total += std::log(s) + m - x(i, n.ids[i]);
      }
      n.val.resize(1, 1);
      n.val(0, 0) = total / static_cast<Real>(R);
      break;
    }
    case OpKind::kMse: {
      const Mat<Real>& p = A(n.a);
      const Mat<Real>& t = A(n.b);
      n.val.resize(1, 1);
      n.val(0, 0) = (p - t).squaredNorm() / static_cast<Real>(p.size());
      break;
    }
    case OpKind::kSimplexPenalty: {
      const Mat<Real>& b = A(n.a);
      Real acc = Real(0);
      for (int i = 0; i < b.rows(); ++i) {
        Real l1 = Real(0), negsum = Real(0);
        for (int j = 0; j < b.cols(); ++j) {
          const Real t = b(i, j);
          l1 += std::abs(t);
          if (t < Real(0)) negsum += -t;
        }
        acc += n.attr0 * (Real(1) - l1) + n.attr1 * negsum;
      }
      n.val.resize(1, 1);
      n.val(0, 0) = acc / static_cast<Real>(b.rows());
      break;
    }
  }
}

template <class Real>
void Graph<Real>::backward(NodeId loss) {
  for (Node& n : nodes_) n.grad.setZero();
  BG_CHECK(nodes_[loss].val.size() == 1, "backward: loss must be scalar");
  nodes_[loss].grad(0, 0) = Real(1);
  for (int i = loss; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.isZero(Real(0)) && n.op != OpKind::kParam) continue;
    accumulate(n);
  }
  for (Node& n : nodes_) {
    if (n.op == OpKind::kParam) n.parameter->grad += n.grad;
  }
}

template <class Real>
void Graph<Real>::accumulate(Node& n) {
  const auto A = [&](int i) -> const Mat<Real>& { return nodes_[i].val; };
  const auto G = [&](int i) -> Mat<Real>& { return nodes_[i].grad; };
  const Mat<Real>& g = n.grad;
  switch (n.op) {
    case OpKind::kInput:
    case OpKind::kParam:
      break;
    case OpKind::kMatMul:
      G(n.a).noalias() += g * A(n.b).transpose();
      G(n.b).noalias() += A(n.a).transpose() * g;
      break;
    case OpKind::kAdd:
      G(n.a) += g;
      G(n.b) += g;
      break;
    case OpKind::kAddRowBias:
      G(n.a) += g;
      G(n.b).row(0) += g.colwise().sum();
      break;
    case OpKind::kMul:
      G(n.a) += g.cwiseProduct(A(n.b));
      G(n.b) += g.cwiseProduct(A(n.a));
      break;
    case OpKind::kScale:
      G(n.a) += n.attr0 * g;
      break;
    case OpKind::kLayerNorm: {
      const Mat<Real>& gamma = A(n.b);
      Mat<Real>& gx = G(n.a);
      for (int i = 0; i < g.rows(); ++i) {
        const auto xh = n.cache0.row(i).array();
        const auto gy = g.row(i).array() * gamma.row(0).array();
        const Real mg = gy.mean();
        const Real mgx = (gy * xh).mean();
        gx.row(i).array() += n.cache1(i, 0) * (gy - mg - xh * mgx);
      }
      G(n.b).row(0) += (g.array() * n.cache0.array()).colwise().sum().matrix();
      G(n.c).row(0) += g.colwise().sum();
      break;
    }
    case OpKind::kSoftmax: {
      Mat<Real>& gx = G(n.a);
      for (int i = 0; i < g.rows(); ++i) {
        const auto p = n.val.row(i).array();
        const Real dot = (p * g.row(i).array()).sum();
        gx.row(i).array() += p * (g.row(i).array() - dot);
      }
      break;
    }
    case OpKind::kGelu: {
      const Mat<Real>& x = A(n.a);
      constexpr double kInvSqrt2 = 0.70710678118654752440;
      constexpr double kInvSqrt2Pi = 0.39894228040143267794;
      G(n.a) += g.cwiseProduct(x.unaryExpr([](Real t) {
        const double td = static_cast<double>(t);
        const double cdf = 0.5 * (1.0 + std::erf(td * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * td * td);
        return static_cast<Real>(cdf + td * pdf);
      }));
      break;
    }
    case OpKind::kRelu:
      G(n.a) += g.cwiseProduct(
          A(n.a).unaryExpr([](Real t) { return t > Real(0) ? Real(1) : Real(0); }));
      break;
    case OpKind::kTopK: {
      Mat<Real>& gx = G(n.a);
      for (int i = 0; i < g.rows(); ++i) {
        for (int t = 0; t < n.k; ++t) {
          const int j = n.mask[static_cast<std::size_t>(i) * n.k + t];
          if (j >= 0) gx(i, j) += g(i, j);
        }
      }
      break;
    }
    case OpKind::kAppendZeroCol:
      G(n.a) += g.leftCols(g.cols() - 1);
      break;
    case OpKind::kCausalAttention: {
      const Mat<Real>& q = A(n.a);
      const Mat<Real>& k = A(n.b);
      const Mat<Real>& v = A(n.c);
      const int T = n.seq_len, H = n.heads;
      const int B = static_cast<int>(q.rows()) / T;
      const int dh = static_cast<int>(q.cols()) / H;
      const Real sc = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(dh)));
      Mat<Real>&gq = G(n.a), &gk = G(n.b), &gv = G(n.c);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (int bh = 0; bh < B * H; ++bh) {
        const int b = bh / H, h = bh % H;
        const auto Q = q.block(b * T, h * dh, T, dh);
        const auto K = k.block(b * T, h * dh, T, dh);
        const auto V = v.block(b * T, h * dh, T, dh);
        const auto P = n.cache0.middleRows(static_cast<long>(bh) * T, T);
        const auto gO = g.block(b * T, h * dh, T, dh);
        Mat<Real> gP = gO * V.transpose();          // [T x T]
        Mat<Real> gS = Mat<Real>::Zero(T, T);
        for (int i = 0; i < T; ++i) {
          Real dot = Real(0);
          for (int j = 0; j <= i; ++j) dot += P(i, j) * gP(i, j);
          for (int j = 0; j <= i; ++j) gS(i, j) = P(i, j) * (gP(i, j) - dot);
        }
        gv.block(b * T, h * dh, T, dh).noalias() += P.transpose() * gO;
        gq.block(b * T, h * dh, T, dh).noalias() += sc * (gS * K);
        gk.block(b * T, h * dh, T, dh).noalias() += sc * (gS.transpose() * Q);
      }
      break;
    }
    case OpKind::kEmbedding: {
      Mat<Real>& gt = G(n.a);
      for (std::size_t i = 0; i < n.ids.size(); ++i) {
        gt.row(n.ids[i]) += g.row(static_cast<long>(i));
      }
      break;
    }
    case OpKind::kSoftmaxCrossEntropy: {
      const Real s = g(0, 0) / static_cast<Real>(n.cache0.rows());
      Mat<Real>& gx = G(n.a);
      gx += s * n.cache0;
      for (int i = 0; i < n.cache0.rows(); ++i) gx(i, n.ids[i]) -= s;
      break;
    }
    case OpKind::kMse: {
      const Real s = g(0, 0) * Real(2) / static_cast<Real>(A(n.a).size());
      G(n.a) += s * (A(n.a) - A(n.b));
      G(n.b) -= s * (A(n.a) - A(n.b));
      break;
    }
    case OpKind::kSimplexPenalty: {
      const Mat<Real>& b = A(n.a);
      const Real s = g(0, 0) / static_cast<Real>(b.rows());
      Mat<Real>& gx = G(n.a);
      for (int i = 0; i < b.rows(); ++i) {
        for (int j = 0; j < b.cols(); ++j) {
          const Real t = b(i, j);
          Real d = Real(0);
          if (t > Real(0)) d -= n.attr0;
          if (t < Real(0)) d += n.attr0 - n.attr1;
          gx(i, j) += s * d;
        }
      }
      break;
    }
  }
}

template class Graph<float>;
template class Graph<double>;
template void adamw_step<float>(std::span<Parameter<float>* const>, const AdamWConfig&);
template void adamw_step<double>(std::span<Parameter<double>* const>, const AdamWConfig&);
template Mat<float> fan_in_init<float>(int, int, int, Rng&);
template Mat<double> fan_in_init<double>(int, int, int, Rng&);

}  // namespace beliefgeo::nn
