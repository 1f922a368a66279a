#pragma once

#include "dgrecon/backprojection.hpp"
#include "dgrecon/nn/autograd.hpp"

#include <span>
#include <vector>

// Differentiable ops. Layouts are channel-first: 2D maps are (N,C,H,W),
// volumes are (C,D,H,W), point sets are (C,P).
namespace dgrecon::nn {

/// y = W x + b over the leading (channel) axis; trailing axes are batch.
Var linear(Tape& t, const Var& x, const Var& weight, const Var& bias);

struct ConvGeometry {
  int kernel = 3;
  int stride = 1;
  int padding = 1;
};

/// Cross-correlation with zero padding. x: (N,Ci,H,W), w: (Co,Ci,k,k).
Var conv2d(Tape& t, const Var& x, const Var& weight, const Var& bias, ConvGeometry g);
/// x: (Ci,D,H,W), w: (Co,Ci,k,k,k).
Var conv3d(Tape& t, const Var& x, const Var& weight, const Var& bias, ConvGeometry g);

Var relu(Tape& t, const Var& x);
Var sigmoid(Tape& t, const Var& x);
/// (C,D,H,W) -> (C,fD,fH,fW) by voxel replication.
Var upsample_nearest3d(Tape& t, const Var& x, int factor = 2);
/// Concatenates along axis 0; remaining extents must agree.
Var concat(Tape& t, std::span<const Var> xs);
/// Mean of all elements (scalar result).
Var mean(Tape& t, const Var& x);
Var add(Tape& t, const Var& a, const Var& b);
Var scale(Tape& t, const Var& x, double s);
Var reshape(Tape& t, const Var& x, Shape shape);

/// Zero-pads the spatial extents of (C,D,H,W) at the high end to `dims`.
Var pad3d(Tape& t, const Var& x, std::array<int, 3> dims);
/// Keeps the low-index corner of (C,D,H,W) with extents `dims`.
Var crop3d(Tape& t, const Var& x, std::array<int, 3> dims);

/// Applies a fixed sparse sampling plan to maps laid out as (B,C,S) with
/// S = spatial_size; returns (C, plan.outputs).
Var gather(Tape& t, const Var& maps, const GatherPlan& plan, int channels, int spatial_size);

/// Signed log transform t(x) = sign(x) ln(|x| + 1).
double log_transform(double x);

/// mean |t(pred) - t(target)| over all elements.
Var log_l1_loss(Tape& t, const Var& pred, std::span<const double> target);

/// Mean binary cross-entropy of sigmoid(logits), probabilities clamped to
/// [1e-7, 1 - 1e-7].
Var bce_with_logits(Tape& t, const Var& logits, std::span<const double> target);

}  // namespace dgrecon::nn
