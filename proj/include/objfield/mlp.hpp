#pragma once

#include <string>
#include <vector>

#include "objfield/rng.hpp"
#include "objfield/tape.hpp"
#include "objfield/tensor.hpp"

namespace objfield {

// Fully-connected stack with ReLU between layers and a raw final output;
// output nonlinearities (exp, sigmoid, softmax) belong to the field heads.
template <class S>
struct Mlp {
  struct Layer {
    int in = 0, out = 0;
    ParamBlock<S> weight;  // in x out, row-major
    ParamBlock<S> bias;    // out
  };
  std::vector<Layer> layers;

  typename Tape<S>::Var forward(Tape<S>& tape, typename Tape<S>::Var x) {
    for (size_t i = 0; i < layers.size(); ++i) {
      Layer& l = layers[i];
      x = tape.linear(x, l.weight, &l.bias, l.in, l.out);
      if (i + 1 < layers.size()) x = tape.relu(x);
    }
    return x;
  }

  void set_frozen(bool frozen) {
    for (Layer& l : layers) {
      l.weight.frozen = frozen;
      l.bias.frozen = frozen;
    }
  }

  size_t param_count() const {
    size_t n = 0;
    for (const Layer& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  template <class U>
  Mlp<U> cast() const {
    Mlp<U> out;
    for (const Layer& l : layers)
      out.layers.push_back({l.in, l.out, l.weight.template cast<U>(), l.bias.template cast<U>()});
    return out;
  }
};

// dims = {in, hidden..., out}. Kaiming-style fan-in init, zero biases.
template <class S>
Mlp<S> make_mlp(const std::vector<int>& dims, const std::string& name, Rng& rng) {
  Mlp<S> mlp;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    typename Mlp<S>::Layer layer;
    layer.in = dims[i];
    layer.out = dims[i + 1];
    layer.weight = ParamBlock<S>(name + ".w" + std::to_string(i),
                                 static_cast<size_t>(dims[i]) * dims[i + 1]);
    layer.bias = ParamBlock<S>(name + ".b" + std::to_string(i), dims[i + 1]);
    double std = std::sqrt(2.0 / dims[i]);
    for (S& v : layer.weight.value) v = static_cast<S>(rng.truncated_normal(std));
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

}  // namespace objfield
