#pragma once

#include "beliefgeo/nn/graph.hpp"
#include "beliefgeo/process.hpp"

#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace beliefgeo {

struct LmConfig {
  int d_model = 128;
  int n_heads = 4;
  int n_layers = 3;
  int context_length = 16;
  int vocab = 432;

  int steps = 20000;
  int batch = 64;
  double lr = 1e-3;  // cosine-decayed to zero over `steps`
  double weight_decay = 0.01;
  int eval_every = 500;
  int eval_sequences = 400;
  double early_stop_accuracy = 0.0;  // stop once held-out top-1 reaches this; 0 disables

  void validate() const;
};

struct TrainMetrics {
  double heldout_accuracy = 0.0;
  double final_loss = 0.0;
  int steps_run = 0;
  std::vector<std::pair<int, double>> loss_curve;      // (step, training loss)
  std::vector<std::pair<int, double>> accuracy_curve;  // (step, held-out accuracy)
};

struct ResidualCapture {
  int layer = 0;
  std::vector<int> seq_ids;
  std::vector<int> positions;
  Matf vectors;  // [rows x d_model], row-aligned with the metadata above
  Matf beliefs;  // [rows x belief_dim]
};

enum class SteerMode { kType1, kType2, kType3 };

SteerMode steer_mode_from_string(const std::string& s);
std::string to_string(SteerMode m);

// Pre-norm decoder-only transformer with learned positional embeddings and a
// GELU MLP of width 4*d_model.
class TransformerLM {
 public:
  TransformerLM(LmConfig cfg, std::uint64_t seed);

  const LmConfig& config() const { return cfg_; }

  // Online training against freshly sampled sequences. Throws NumericalError
  // with the step index if the loss diverges.
  TrainMetrics train(const CompositeSpec& spec, std::uint64_t seed);

  double heldout_accuracy(const CompositeSpec& spec, int n_sequences, std::uint64_t seed);

  // Teacher-forced next-token logits for one sequence, [len x vocab].
  Matf logits(std::span<const int> tokens);

  // Post-block residual stream at `layer` for one sequence, [len x d_model].
  Matf residuals(std::span<const int> tokens, int layer);

  // Samples n_sequences fresh sequences and captures every position's
  // residual at `layer` together with the exact filter beliefs.
  ResidualCapture capture(const CompositeSpec& spec, int layer, int n_sequences, std::uint64_t seed);

  // Greedy continuation with a steering delta added to the residual stream
  // after block `layer`. type1 patches only the trigger position (the last
  // prompt token); type2 patches the first k_sustain generated positions;
  // type3 patches every generated position.
  std::vector<int> generate_steered(std::span<const int> prompt, int layer, const Vec<float>& delta,
                                    double scale, SteerMode mode, int k_sustain, int length);

  std::vector<int> generate(std::span<const int> prompt, int length);

  void save(const std::string& path) const;
  static TransformerLM load(const std::string& path);

 private:
  struct ForwardGraph {
    nn::Graphf g;
    int tok_embed = -1;
    int pos_embed = -1;
    std::vector<int> steer;      // per-layer steering input, [B*T x d]
    std::vector<int> residual;   // per-layer post-block residual node
    int logits = -1;
    int loss = -1;
    int batch = 0;
  };

  ForwardGraph build_forward(int batch_sequences, bool with_loss);
  nn::Parameter<float>& add_param(const std::string& name, Matf init, bool decay = true);
  std::vector<nn::Parameter<float>*> param_ptrs();

  LmConfig cfg_;
  std::deque<nn::Parameter<float>> params_;  // stable addresses; graphs hold pointers
};

}  // namespace beliefgeo
