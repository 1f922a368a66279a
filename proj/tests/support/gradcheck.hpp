#pragma once

#include "dgrecon/nn/autograd.hpp"
#include "dgrecon/nn/layers.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace dgrecon::testing {

struct GradReport {
  std::string name;
  double max_rel_error = 0.0;
  long checked = 0;
};

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Central differences (step eps) of the scalar `loss` with respect to up to
/// `max_coords` randomly chosen entries of each leaf.
GradReport gradcheck(const std::string& name, const std::function<nn::Var(nn::Tape&)>& loss,
                     const std::vector<nn::Var>& leaves, int max_coords, std::uint64_t seed,
                     double eps = 1e-5);

/// sum(x * r) for a fixed random r, so every output element matters.
nn::Var random_projection(nn::Tape& t, const nn::Var& x, std::uint64_t seed);

/// A small random instance of the given layer kind, checked w.r.t. its
/// inputs and parameters.
GradReport check_layer_kind(nn::LayerKind kind, std::uint64_t seed);

/// The composed loss through feature extraction, back-projection, the 3D
/// network and both heads on an 8x8-image, 4^3-voxel, 2-view instance.
GradReport check_end_to_end(std::uint64_t seed, bool enable_pb = true);

}  // namespace dgrecon::testing
