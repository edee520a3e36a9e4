#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "taskcast/tensor.hpp"

namespace taskcast {

using TensorVisitor = std::function<void(const std::string& name, Matrix& tensor)>;
using ConstTensorVisitor = std::function<void(const std::string& name, const Matrix& tensor)>;

// Helpers over any parameter struct exposing visit(prefix, visitor).
template <class Params>
std::vector<Matrix*> tensor_list(Params& p) {
  std::vector<Matrix*> out;
  p.visit("", TensorVisitor([&](const std::string&, Matrix& m) { out.push_back(&m); }));
  return out;
}

template <class Params>
std::vector<const Matrix*> tensor_list(const Params& p) {
  std::vector<const Matrix*> out;
  p.visit("", ConstTensorVisitor([&](const std::string&, const Matrix& m) { out.push_back(&m); }));
  return out;
}

template <class Params>
std::size_t parameter_count(const Params& p) {
  std::size_t n = 0;
  for (const Matrix* m : tensor_list(p)) n += m->size();
  return n;
}

// Same shapes, all zeros. Used for gradient accumulators.
template <class Params>
Params zeros_like(const Params& p) {
  Params out = p;
  for (Matrix* m : tensor_list(out)) m->fill(0.0);
  return out;
}

}  // namespace taskcast
