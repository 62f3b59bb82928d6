#include "mphil/hypersphere.hpp"

#include <cmath>
#include <stdexcept>

namespace mphil {

ProjectorParams make_projector_params(std::size_t input_dim, std::size_t output_dim,
                                      RngStream& rng) {
  if (input_dim < 2) throw std::invalid_argument("make_projector_params: input dim < 2");
  if (output_dim == 0) throw std::invalid_argument("make_projector_params: zero output dim");
  const std::size_t hidden = input_dim / 2;
  auto fan_in_uniform = [&rng](std::size_t rows, std::size_t cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    Tensor t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i)
      t.data()[i] = (2.0 * rng.uniform() - 1.0) * bound;
    return t;
  };
  ProjectorParams p;
  p.w1 = fan_in_uniform(input_dim, hidden);
  p.b1 = fan_in_uniform(1, hidden);
  p.w2 = fan_in_uniform(hidden, output_dim);
  p.b2 = fan_in_uniform(1, output_dim);
  p.output_dim = output_dim;
  return p;
}

ProjectorVars bind(Tape& tape, const ProjectorParams& params, bool requires_grad) {
  return ProjectorVars{tape.leaf(params.w1, requires_grad),
                       tape.leaf(params.b1, requires_grad),
                       tape.leaf(params.w2, requires_grad),
                       tape.leaf(params.b2, requires_grad)};
}

Var project_raw(Tape& tape, const ProjectorVars& proj, Var z_inv) {
  Var hidden = tape.relu(tape.add_rowvec(tape.matmul(z_inv, proj.w1), proj.b1));
  return tape.add_rowvec(tape.matmul(hidden, proj.w2), proj.b2);
}

Var project(Tape& tape, const ProjectorVars& proj, Var z_inv) {
  return tape.l2_normalize_rows(project_raw(tape, proj, z_inv));
}

}  // namespace mphil
