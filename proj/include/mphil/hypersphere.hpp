#pragma once

#include "mphil/rng.hpp"
#include "mphil/tape.hpp"

namespace mphil {

/// Projector MLP mapping graph representations onto the unit hypersphere:
/// two affine maps d -> floor(d/2) -> d_p with ReLU between, followed by row
/// L2 normalization.
struct ProjectorParams {
  Tensor w1, b1, w2, b2;
  std::size_t output_dim = 0;  // d_p
};

/// d_p defaults to d/2 (the hidden width is always floor(d/2)).
ProjectorParams make_projector_params(std::size_t input_dim, std::size_t output_dim,
                                      RngStream& rng);

struct ProjectorVars {
  Var w1, b1, w2, b2;
};

ProjectorVars bind(Tape& tape, const ProjectorParams& params, bool requires_grad);

/// Pre-normalization projector output z-tilde (one row per graph).
Var project_raw(Tape& tape, const ProjectorVars& proj, Var z_inv);

/// Unit-norm hyperspherical representation; throws if a projector output row
/// is degenerate (norm below the tape's floor).
Var project(Tape& tape, const ProjectorVars& proj, Var z_inv);

}  // namespace mphil
