#include "dgrecon/geometry.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <stdexcept>

namespace dgrecon {

bool Intrinsics::valid() const {
  return fx > 0 && fy > 0 && width > 0 && height > 0 && cx >= 0 && cx < width &&
         cy >= 0 && cy < height;
}

Mat3 Intrinsics::matrix() const {
  Mat3 k;
  k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return k;
}

Pose Pose::from_matrix(const Mat4& m) {
  Pose p;
  p.rotation = m.topLeftCorner<3, 3>();
  p.translation = m.topRightCorner<3, 1>();
  return p;
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Pose Pose::inverse() const {
  Pose p;
  p.rotation = rotation.transpose();
  p.translation = -(p.rotation * translation);
  return p;
}

Pose Pose::compose(const Pose& other) const {
  Pose p;
  p.chain = chain + other.chain + 1;
  p.rotation = rotation * other.rotation;
  if (p.chain > 1) p.rotation = orthonormalize(p.rotation);
  p.translation = rotation * other.translation + translation;
  return p;
}

bool Pose::valid(double tol) const {
  const Mat3 gram = rotation.transpose() * rotation;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  if (std::abs(rotation.determinant() - 1.0) > tol) return false;
  return translation.allFinite();
}

Mat3 orthonormalize(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return r;
}

Vec3 transform_point(const Vec3& p, const Pose& pose, TransformDirection direction) {
  if (direction == TransformDirection::forward) {
    return pose.rotation * p + pose.translation;
  }
  return pose.rotation.transpose() * (p - pose.translation);
}

Projection project_point(const Vec3& p, const Intrinsics& K, const Pose& pose,
                         double z_min) {
  const Vec3 pc = pose.rotation.transpose() * (p - pose.translation);
  Projection out;
  out.z = pc.z();
  if (!(pc.z() > z_min)) return out;
  out.u = K.fx * pc.x() / pc.z() + K.cx;
  out.v = K.fy * pc.y() / pc.z() + K.cy;
  out.valid = out.u >= -0.5 && out.u <= K.width - 0.5 && out.v >= -0.5 &&
              out.v <= K.height - 0.5;
  return out;
}

double border_distance(double u, double v, const Intrinsics& K) {
  const double dx = std::min(u + 0.5, K.width - 0.5 - u);
  const double dy = std::min(v + 0.5, K.height - 0.5 - v);
  return std::max(0.0, std::min(dx, dy));
}

bool GridSpec::valid() const {
  return voxel_size > 0 && dims[0] >= 1 && dims[1] >= 1 && dims[2] >= 1 &&
         origin.allFinite();
}

std::array<int, 3> GridSpec::unravel(std::size_t idx) const {
  const int k = static_cast<int>(idx % dims[2]);
  idx /= dims[2];
  const int j = static_cast<int>(idx % dims[1]);
  const int i = static_cast<int>(idx / dims[1]);
  return {i, j, k};
}

Vec3 GridSpec::center(std::size_t idx) const {
  const auto [i, j, k] = unravel(idx);
  return center(i, j, k);
}

bool GridSpec::contains(const Vec3& p, double eps) const {
  const Vec3 g = to_grid(p);
  for (int a = 0; a < 3; ++a) {
    if (g[a] < -eps || g[a] > dims[a] - 1 + eps) return false;
  }
  return true;
}

TrilinearStencil trilinear_stencil(const GridSpec& spec, const Vec3& p) {
  TrilinearStencil s;
  const Vec3 g = spec.to_grid(p);
  std::array<int, 3> lo{};
  std::array<double, 3> frac{};
  for (int a = 0; a < 3; ++a) {
    const double hi = spec.dims[a] - 1;
    double c = g[a];
    // nodes hit up to rounding return their stored value
    if (std::abs(c - std::round(c)) < 1e-9) c = std::round(c);
    if (!(c >= 0.0 && c <= hi)) {
      s.out_of_bounds = true;
      c = std::clamp(std::isfinite(c) ? c : 0.0, 0.0, hi);
    }
    int l = static_cast<int>(std::floor(c));
    if (l >= spec.dims[a] - 1) l = std::max(0, spec.dims[a] - 2);
    lo[a] = l;
    frac[a] = spec.dims[a] == 1 ? 0.0 : c - l;
  }
  int n = 0;
  for (int di = 0; di < 2; ++di) {
    for (int dj = 0; dj < 2; ++dj) {
      for (int dk = 0; dk < 2; ++dk, ++n) {
        const int i = std::min(lo[0] + di, spec.dims[0] - 1);
        const int j = std::min(lo[1] + dj, spec.dims[1] - 1);
        const int k = std::min(lo[2] + dk, spec.dims[2] - 1);
        s.index[n] = spec.index(i, j, k);
        s.weight[n] = (di ? frac[0] : 1.0 - frac[0]) * (dj ? frac[1] : 1.0 - frac[1]) *
                      (dk ? frac[2] : 1.0 - frac[2]);
      }
    }
  }
  return s;
}

namespace {

template <class T>
ScalarSample sample_scalar(const GridSpec& spec, std::span<const T> values,
                           const Vec3& p) {
  if (values.size() != spec.count()) {
    throw std::invalid_argument("trilinear_sample: value count does not match grid");
  }
  const TrilinearStencil s = trilinear_stencil(spec, p);
  ScalarSample out;
  out.out_of_bounds = s.out_of_bounds;
  for (int n = 0; n < 8; ++n) {
    if (s.weight[n] != 0.0) out.value += s.weight[n] * static_cast<double>(values[s.index[n]]);
  }
  return out;
}

}  // namespace

ScalarSample trilinear_sample(const GridSpec& spec, std::span<const double> values,
                              const Vec3& p) {
  return sample_scalar(spec, values, p);
}

ScalarSample trilinear_sample(const GridSpec& spec, std::span<const float> values,
                              const Vec3& p) {
  return sample_scalar(spec, values, p);
}

bool trilinear_sample(const GridSpec& spec, std::span<const double> values, int channels,
                      const Vec3& p, std::span<double> out) {
  const std::size_t n = spec.count();
  if (values.size() != n * channels || out.size() < static_cast<std::size_t>(channels)) {
    throw std::invalid_argument("trilinear_sample: buffer sizes do not match grid");
  }
  const TrilinearStencil s = trilinear_stencil(spec, p);
  for (int c = 0; c < channels; ++c) {
    const double* base = values.data() + c * n;
    double acc = 0.0;
    for (int t = 0; t < 8; ++t) {
      if (s.weight[t] != 0.0) acc += s.weight[t] * base[s.index[t]];
    }
    out[c] = acc;
  }
  return s.out_of_bounds;
}

Mat3 axis_rotation(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) right = forward.cross(Vec3::UnitX());
  right.normalize();
  const Vec3 down = forward.cross(right);
  Pose p;
  p.rotation.col(0) = right;
  p.rotation.col(1) = down;
  p.rotation.col(2) = forward;
  p.translation = eye;
  return p;
}

}  // namespace dgrecon
