#include "fareflow/model.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "fareflow/kernels.hpp"
#include "fareflow/rng.hpp"

namespace fareflow::nn {

void ModelShape::validate() const {
  if (emb_rows == 0 || emb_dim < 1 || context_dim < 0 || hidden1 < 1 ||
      hidden2 < 1 || outputs < 1) {
    throw std::invalid_argument("model shape has a non-positive dimension");
  }
}

ValueModel::ValueModel(const ModelShape& shape) : shape_(shape) {
  shape_.validate();
  emb_ = geo::EmbeddingTable(shape_.emb_rows, shape_.emb_dim);
  const auto in = static_cast<std::size_t>(shape_.input_dim());
  const auto h1 = static_cast<std::size_t>(shape_.hidden1);
  const auto h2 = static_cast<std::size_t>(shape_.hidden2);
  const auto out = static_cast<std::size_t>(shape_.outputs);
  w1_.assign(h1 * in, 0.0);
  b1_.assign(h1, 0.0);
  w2_.assign(h2 * h1, 0.0);
  b2_.assign(h2, 0.0);
  w3_.assign(out * h2, 0.0);
  b3_.assign(out, 0.0);
}

ValueModel ValueModel::random_init(const ModelShape& shape,
                                   std::uint64_t seed) {
  ValueModel m(shape);
  Rng rng(seed);
  for (double& w : m.emb_.weights) w = rng.uniform(-0.01, 0.01);
  auto init_dense = [&rng](std::vector<double>& w, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& x : w) x = rng.uniform(-bound, bound);
  };
  init_dense(m.w1_, shape.input_dim());
  init_dense(m.w2_, shape.hidden1);
  init_dense(m.w3_, shape.hidden2);
  return m;
}

void ValueModel::forward_trace(const geo::TileSet& tiles, const double* context,
                               Trace& t) const {
  namespace k = kernels;
  const auto in = static_cast<std::size_t>(shape_.input_dim());
  const auto h1 = static_cast<std::size_t>(shape_.hidden1);
  const auto h2 = static_cast<std::size_t>(shape_.hidden2);
  const auto out = static_cast<std::size_t>(shape_.outputs);

  t.x.resize(in);
  geo::embed(tiles, emb_, t.x.data());
  for (int d = 0; d < shape_.context_dim; ++d) {
    t.x[static_cast<std::size_t>(shape_.emb_dim + d)] =
        context[static_cast<std::size_t>(d)];
  }

  t.z1.resize(h1);
  k::matvec(w1_.data(), h1, in, t.x.data(), t.z1.data());
  k::add(b1_.data(), t.z1.data(), h1);
  t.h1 = t.z1;
  k::relu(t.h1.data(), h1);

  t.z2.resize(h2);
  k::matvec(w2_.data(), h2, h1, t.h1.data(), t.z2.data());
  k::add(b2_.data(), t.z2.data(), h2);
  t.h2 = t.z2;
  k::relu(t.h2.data(), h2);

  t.out.resize(out);
  k::matvec(w3_.data(), out, h2, t.h2.data(), t.out.data());
  k::add(b3_.data(), t.out.data(), out);

  for (double v : t.out) {
    if (!std::isfinite(v)) {
      throw std::runtime_error("value network produced a non-finite output");
    }
  }
}

void ValueModel::forward(const geo::TileSet& tiles, const double* context,
                         double* out) const {
  thread_local Trace trace;
  forward_trace(tiles, context, trace);
  std::memcpy(out, trace.out.data(), trace.out.size() * sizeof(double));
}

std::vector<double> ValueModel::forward_values(const geo::TileSet& tiles,
                                               const double* context) const {
  std::vector<double> out(static_cast<std::size_t>(shape_.outputs));
  forward(tiles, context, out.data());
  return out;
}

void ValueModel::Gradients::reset(const ModelShape& shape) {
  const auto in = static_cast<std::size_t>(shape.input_dim());
  const auto h1 = static_cast<std::size_t>(shape.hidden1);
  const auto h2 = static_cast<std::size_t>(shape.hidden2);
  const auto out = static_cast<std::size_t>(shape.outputs);
  w1.assign(h1 * in, 0.0);
  b1.assign(h1, 0.0);
  w2.assign(h2 * h1, 0.0);
  b2.assign(h2, 0.0);
  w3.assign(out * h2, 0.0);
  b3.assign(out, 0.0);
  emb.clear();
}

void ValueModel::backward(const geo::TileSet& tiles, const Trace& t,
                          const double* dout, Gradients& g) const {
  namespace k = kernels;
  const auto in = static_cast<std::size_t>(shape_.input_dim());
  const auto h1 = static_cast<std::size_t>(shape_.hidden1);
  const auto h2 = static_cast<std::size_t>(shape_.hidden2);
  const auto out = static_cast<std::size_t>(shape_.outputs);

  // Head: dW3 += dout h2^T; db3 += dout; dh2 = W3^T dout.
  k::rank1_acc(g.w3.data(), out, h2, dout, t.h2.data());
  k::add(dout, g.b3.data(), out);
  std::vector<double> dh2(h2, 0.0);
  k::matvec_t_acc(w3_.data(), out, h2, dout, dh2.data());
  k::relu_backward(t.z2.data(), dh2.data(), h2);

  k::rank1_acc(g.w2.data(), h2, h1, dh2.data(), t.h1.data());
  k::add(dh2.data(), g.b2.data(), h2);
  std::vector<double> dh1(h1, 0.0);
  k::matvec_t_acc(w2_.data(), h2, h1, dh2.data(), dh1.data());
  k::relu_backward(t.z1.data(), dh1.data(), h1);

  k::rank1_acc(g.w1.data(), h1, in, dh1.data(), t.x.data());
  k::add(dh1.data(), g.b1.data(), h1);

  // dx = W1^T dh1; the embedding part flows equally into every activated
  // tile row (the input is their sum).
  std::vector<double> dx(in, 0.0);
  k::matvec_t_acc(w1_.data(), h1, in, dh1.data(), dx.data());
  for (std::uint32_t id : tiles.tile_ids) {
    auto [it, inserted] = g.emb.try_emplace(
        id, std::vector<double>(static_cast<std::size_t>(shape_.emb_dim), 0.0));
    k::add(dx.data(), it->second.data(),
           static_cast<std::size_t>(shape_.emb_dim));
  }
}

void ValueModel::apply_sgd(const Gradients& g, double lr) {
  namespace k = kernels;
  k::axpy(-lr, g.w1.data(), w1_.data(), w1_.size());
  k::axpy(-lr, g.b1.data(), b1_.data(), b1_.size());
  k::axpy(-lr, g.w2.data(), w2_.data(), w2_.size());
  k::axpy(-lr, g.b2.data(), b2_.data(), b2_.size());
  k::axpy(-lr, g.w3.data(), w3_.data(), w3_.size());
  k::axpy(-lr, g.b3.data(), b3_.data(), b3_.size());
  for (const auto& [row, grad] : g.emb) {
    if (row >= emb_.rows) {
      throw std::out_of_range("embedding gradient row beyond table");
    }
    k::axpy(-lr, grad.data(), emb_.row(row),
            static_cast<std::size_t>(shape_.emb_dim));
  }
}

std::size_t ValueModel::num_params() const {
  return emb_.weights.size() + w1_.size() + b1_.size() + w2_.size() +
         b2_.size() + w3_.size() + b3_.size();
}

std::vector<double> ValueModel::flat_params() const {
  std::vector<double> out;
  out.reserve(num_params());
  auto push = [&out](const std::vector<double>& v) {
    out.insert(out.end(), v.begin(), v.end());
  };
  push(emb_.weights);
  push(w1_);
  push(b1_);
  push(w2_);
  push(b2_);
  push(w3_);
  push(b3_);
  return out;
}

void ValueModel::set_flat_params(const std::vector<double>& params) {
  if (params.size() != num_params()) {
    throw std::invalid_argument("flat parameter vector has the wrong length");
  }
  std::size_t off = 0;
  auto pull = [&params, &off](std::vector<double>& v) {
    std::memcpy(v.data(), params.data() + off, v.size() * sizeof(double));
    off += v.size();
  };
  pull(emb_.weights);
  pull(w1_);
  pull(b1_);
  pull(w2_);
  pull(b2_);
  pull(w3_);
  pull(b3_);
}

std::vector<float> ValueModel::to_f32() const {
  const std::vector<double> flat = flat_params();
  std::vector<float> out(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    out[i] = static_cast<float>(flat[i]);
  }
  return out;
}

void ValueModel::from_f32(const std::vector<float>& data) {
  if (data.size() != num_params()) {
    throw std::invalid_argument("float32 parameter blob has the wrong length");
  }
  std::vector<double> flat(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    flat[i] = static_cast<double>(data[i]);
  }
  set_flat_params(flat);
}

}  // namespace fareflow::nn
