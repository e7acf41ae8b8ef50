#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fareflow/tilecoding.hpp"

namespace fareflow::nn {

// Shapes of one value network. The input is the summed tile embedding
// concatenated with the normalized context features.
struct ModelShape {
  std::uint32_t emb_rows = 1u << 18;
  int emb_dim = 16;
  int context_dim = 4;
  int hidden1 = 128;
  int hidden2 = 64;
  int outputs = 6;  // 6 for the per-action head, 1 for the state-value head

  int input_dim() const { return emb_dim + context_dim; }
  bool operator==(const ModelShape&) const = default;
  void validate() const;  // throws std::invalid_argument
};

// Tile-coded embedding, two ReLU dense layers, linear head. All arithmetic
// is double precision; only serialized checkpoints are 32-bit. Forward is
// pure and safe for concurrent use; mutation is single-writer.
class ValueModel {
 public:
  explicit ValueModel(const ModelShape& shape);  // zero-initialized

  // Embeddings uniform in [-0.01, 0.01]; dense weights scaled-uniform by
  // fan-in (U[-1/sqrt(fan_in), 1/sqrt(fan_in)]); biases zero.
  static ValueModel random_init(const ModelShape& shape, std::uint64_t seed);

  const ModelShape& shape() const { return shape_; }

  // out must hold shape().outputs entries. Throws std::runtime_error if the
  // result is not finite (a corrupted or diverged parameter set).
  void forward(const geo::TileSet& tiles, const double* context,
               double* out) const;
  std::vector<double> forward_values(const geo::TileSet& tiles,
                                     const double* context) const;

  // Intermediate activations cached for backpropagation.
  struct Trace {
    std::vector<double> x;    // input_dim
    std::vector<double> z1;   // hidden1 pre-activation
    std::vector<double> h1;   // hidden1 post-ReLU
    std::vector<double> z2;   // hidden2 pre-activation
    std::vector<double> h2;   // hidden2 post-ReLU
    std::vector<double> out;  // outputs
  };
  void forward_trace(const geo::TileSet& tiles, const double* context,
                     Trace& trace) const;

  // Accumulated parameter gradients for one mini-batch. Embedding gradients
  // stay sparse (row -> dense gradient); std::map keeps the apply order
  // deterministic.
  struct Gradients {
    std::vector<double> w1, b1, w2, b2, w3, b3;
    std::map<std::uint32_t, std::vector<double>> emb;
    void reset(const ModelShape& shape);
  };

  // Accumulates d(loss)/d(params) for one sample given d(loss)/d(out).
  void backward(const geo::TileSet& tiles, const Trace& trace,
                const double* dout, Gradients& grads) const;

  // Plain SGD: p -= lr * grad.
  void apply_sgd(const Gradients& grads, double lr);

  // Flat parameter order: embedding rows, w1, b1, w2, b2, w3, b3.
  std::size_t num_params() const;
  std::vector<double> flat_params() const;
  void set_flat_params(const std::vector<double>& params);

  // Little-endian float32 image of flat_params, for checkpoints.
  std::vector<float> to_f32() const;
  void from_f32(const std::vector<float>& data);

  // Dense-parameter views for targeted inspection in tests.
  std::vector<double>& w1() { return w1_; }
  std::vector<double>& b1() { return b1_; }
  std::vector<double>& w2() { return w2_; }
  std::vector<double>& b2() { return b2_; }
  std::vector<double>& w3() { return w3_; }
  std::vector<double>& b3() { return b3_; }
  geo::EmbeddingTable& embeddings() { return emb_; }
  const geo::EmbeddingTable& embeddings() const { return emb_; }

 private:
  ModelShape shape_;
  geo::EmbeddingTable emb_;
  std::vector<double> w1_, b1_;  // hidden1 x input_dim, hidden1
  std::vector<double> w2_, b2_;  // hidden2 x hidden1, hidden2
  std::vector<double> w3_, b3_;  // outputs x hidden2, outputs
};

}  // namespace fareflow::nn
