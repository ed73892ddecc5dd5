// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#include "cvgs/rasterizer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cvgs/check.h"

namespace cvgs {

namespace detail {

namespace {
constexpr double kChi2_99_2dof = 9.21034037197618;
}

template <typename T>
std::vector<SplatWork<T>> prepare_splats(const std::vector<Gaussian3<T>>& field,
                                         const Camera& cam) {
  const int n = static_cast<int>(field.size());
  std::vector<SplatWork<T>> works(n);
  std::vector<uint8_t> keep(n, 0);

#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const auto splat = project_to_2d(cam, field[i]);
    if (!splat) continue;
    const T cxx = splat->cov2d(0, 0), cxy = splat->cov2d(0, 1), cyy = splat->cov2d(1, 1);
    const T det = cxx * cyy - cxy * cxy;
    const T mid = (cxx + cyy) / T(2);
    const T lmax = mid + std::sqrt(std::max(T(0), mid * mid - det));
    const T r = std::sqrt(T(kChi2_99_2dof) * lmax);

    SplatWork<T>& w = works[i];
    w.mx = splat->mean2d.x();
    w.my = splat->mean2d.y();
    w.qxx = cyy / det;
    w.qxy = -cxy / det;
    w.qyy = cxx / det;
    w.opacity = splat->opacity;
    w.depth = splat->depth;
    w.color[0] = splat->color.x();
    w.color[1] = splat->color.y();
    w.color[2] = splat->color.z();
    w.x0 = std::max(0, static_cast<int>(std::floor(w.mx - r)));
    w.x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(w.mx + r)));
    w.y0 = std::max(0, static_cast<int>(std::floor(w.my - r)));
    w.y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(w.my + r)));
    w.gauss = i;
    keep[i] = (w.x0 <= w.x1 && w.y0 <= w.y1) ? 1 : 0;
  }

  std::vector<SplatWork<T>> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    if (keep[i]) out.push_back(works[i]);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const SplatWork<T>& a, const SplatWork<T>& b) {
                     if (a.depth != b.depth) return a.depth < b.depth;
                     return a.gauss < b.gauss;
                   });
  return out;
}

template std::vector<SplatWork<float>> prepare_splats(const std::vector<Gaussian3f>&,
                                                      const Camera&);
template std::vector<SplatWork<double>> prepare_splats(const std::vector<Gaussian3d>&,
                                                       const Camera&);

}  // namespace detail

namespace {

using detail::SplatWork;

// Splat indices per tile, in global depth order.
template <typename T>
std::vector<std::vector<int>> bin_tiles(const std::vector<SplatWork<T>>& works,
                                        int tiles_x, int tiles_y, int ts) {
  std::vector<std::vector<int>> tiles(static_cast<size_t>(tiles_x) * tiles_y);
  for (int si = 0; si < static_cast<int>(works.size()); ++si) {
    const SplatWork<T>& w = works[si];
    const int tx0 = w.x0 / ts, tx1 = w.x1 / ts;
    const int ty0 = w.y0 / ts, ty1 = w.y1 / ts;
    for (int ty = ty0; ty <= ty1; ++ty) {
      for (int tx = tx0; tx <= tx1; ++tx) {
        tiles[static_cast<size_t>(ty) * tiles_x + tx].push_back(si);
      }
    }
  }
  return tiles;
}

// Gaussian weight and clamped alpha of a splat at a pixel. Shared by the
// forward and backward sweeps so replayed values are bit-identical.
template <typename T>
inline void splat_alpha(const SplatWork<T>& s, T dx, T dy, T alpha_clamp, T* g_out,
                        T* a_out) {
  const T maha = s.qxx * dx * dx + T(2) * s.qxy * dx * dy + s.qyy * dy * dy;
  const T g = std::exp(T(-0.5) * maha);
  *g_out = g;
  *a_out = std::min(alpha_clamp, s.opacity * g);
}

}  // namespace

template <typename T>
RenderOutputT<T> render(const std::vector<Gaussian3<T>>& field, const Camera& cam,
                        const RenderOptions& opt) {
  cam.validate();
  CVGS_CHECK(opt.tile_size > 0);
  const int W = cam.width, H = cam.height, ts = opt.tile_size;
  const int tiles_x = (W + ts - 1) / ts, tiles_y = (H + ts - 1) / ts;

  const auto works = detail::prepare_splats(field, cam);
  const auto tiles = bin_tiles(works, tiles_x, tiles_y, ts);

  RenderOutputT<T> out;
  out.color = ImageT<T>(W, H, 3);
  out.alpha = ImageT<T>(W, H, 1);
  out.depth = ImageT<T>(W, H, 1);
  out.final_trans = ImageT<T>(W, H, 1);
  out.end_pos = ImageT<int32_t>(W, H, 1);
  out.field_size = field.size();
  out.tile_size = ts;

  const T bg[3] = {T(opt.background.x()), T(opt.background.y()), T(opt.background.z())};
  const T alpha_clamp = T(opt.alpha_clamp);
  const T trans_min = T(opt.transmittance_min);
  const T nan = std::numeric_limits<T>::quiet_NaN();

#pragma omp parallel for schedule(dynamic)
  for (int tile = 0; tile < tiles_x * tiles_y; ++tile) {
    const std::vector<int>& list = tiles[tile];
    const int px0 = (tile % tiles_x) * ts, py0 = (tile / tiles_x) * ts;
    const int px1 = std::min(px0 + ts, W), py1 = std::min(py0 + ts, H);
    for (int py = py0; py < py1; ++py) {
      for (int px = px0; px < px1; ++px) {
        T trans = T(1);
        T acc[3] = {T(0), T(0), T(0)};
        T depth_acc = T(0);
        int pos = 0;
        const int count = static_cast<int>(list.size());
        while (pos < count) {
          if (trans < trans_min) break;
          const SplatWork<T>& s = works[list[pos]];
          ++pos;
          if (px < s.x0 || px > s.x1 || py < s.y0 || py > s.y1) continue;
          T g, a;
          splat_alpha(s, T(px) - s.mx, T(py) - s.my, alpha_clamp, &g, &a);
          const T w = a * trans;
          acc[0] += w * s.color[0];
          acc[1] += w * s.color[1];
          acc[2] += w * s.color[2];
          depth_acc += w * s.depth;
          trans *= (T(1) - a);
        }
        const T alpha = T(1) - trans;
        out.color.at(px, py, 0) = acc[0] + trans * bg[0];
        out.color.at(px, py, 1) = acc[1] + trans * bg[1];
        out.color.at(px, py, 2) = acc[2] + trans * bg[2];
        out.alpha.at(px, py, 0) = alpha;
        out.depth.at(px, py, 0) = alpha > T(kDepthAlphaMin) ? depth_acc / alpha : nan;
        out.final_trans.at(px, py, 0) = trans;
        out.end_pos.at(px, py, 0) = pos;
      }
    }
  }
  return out;
}

template <typename T>
ImageT<T> render_depth(const std::vector<Gaussian3<T>>& field, const Camera& cam,
                       const RenderOptions& opt) {
  return render(field, cam, opt).depth;
}

namespace {

// Image-space gradient sums for one splat.
template <typename T>
struct ScreenGrad {
  T d_mx = 0, d_my = 0;
  T d_cxx = 0, d_cxy = 0, d_cyy = 0;  // w.r.t. cov2d (full-matrix convention)
  T d_op = 0;                         // w.r.t. activated opacity
  T d_col[3] = {0, 0, 0};             // w.r.t. activated color
};

// Maps accumulated image-space gradients of one splat back to the raw
// parameters of its source Gaussian.
template <typename T>
void chain_to_params(const Gaussian3<T>& g, const Camera& cam, const ScreenGrad<T>& sg,
                     ParamGrad<T>* pg, T* grad2d_norm) {
  using Mat2 = Eigen::Matrix<T, 2, 2>;
  using Mat3 = Eigen::Matrix<T, 3, 3>;
  using M23 = Eigen::Matrix<T, 2, 3>;
  using Vec2 = Eigen::Matrix<T, 2, 1>;
  using Vec3 = Eigen::Matrix<T, 3, 1>;

  const Mat3 W3 = cam.world_to_cam.rotation.toRotationMatrix().cast<T>();
  const Vec3 t = cam.world_to_cam.translation.cast<T>();
  const Vec3 p = W3 * g.mu + t;
  const T fx = T(cam.fx), fy = T(cam.fy);
  const T x = p.x(), y = p.y(), z = p.z();

  M23 J;
  J << fx / z, T(0), -fx * x / (z * z),
       T(0), fy / z, -fy * y / (z * z);
  const M23 M = J * W3;
  const Mat3 sigma3 = build_covariance(g.rot, g.log_scale);

  const Vec2 d_mean2d(sg.d_mx, sg.d_my);
  Mat2 G2;
  G2 << sg.d_cxx, sg.d_cxy, sg.d_cxy, sg.d_cyy;

  // cov2d = M sigma3 M^T + c I.
  const M23 dM = T(2) * G2 * M * sigma3;
  const Mat3 dSigma3 = M.transpose() * G2 * M;

  // mean2d = (fx x / z + cx, fy y / z + cy).
  Vec3 d_pcam = J.transpose() * d_mean2d;

  // J depends on the camera-frame mean as well.
  const M23 dJ = dM * W3.transpose();
  const T z2 = z * z, z3 = z2 * z;
  d_pcam.x() += dJ(0, 2) * (-fx / z2);
  d_pcam.y() += dJ(1, 2) * (-fy / z2);
  d_pcam.z() += dJ(0, 0) * (-fx / z2) + dJ(1, 1) * (-fy / z2) +
                dJ(0, 2) * (T(2) * fx * x / z3) + dJ(1, 2) * (T(2) * fy * y / z3);

  pg->d_mu = W3.transpose() * d_pcam;

  // sigma3 = L L^T with L = R diag(exp(ls)).
  const Mat3 R = g.rot.toRotationMatrix();
  const Vec3 s = g.log_scale.array().exp();
  Mat3 L = R;
  L.col(0) *= s.x();
  L.col(1) *= s.y();
  L.col(2) *= s.z();
  const Mat3 dL = T(2) * dSigma3 * L;

  const Mat3 dR = dL * s.asDiagonal();
  const Mat3 RtdL = R.transpose() * dL;
  pg->d_log_scale = Vec3(RtdL(0, 0) * s.x(), RtdL(1, 1) * s.y(), RtdL(2, 2) * s.z());

  // Derivative of the quaternion polynomial (w,x,y,z).
  const T qw = g.rot.w(), qx = g.rot.x(), qy = g.rot.y(), qz = g.rot.z();
  Mat3 dRdw, dRdx, dRdy, dRdz;
  dRdw << 0, -2 * qz, 2 * qy, 2 * qz, 0, -2 * qx, -2 * qy, 2 * qx, 0;
  dRdx << 0, 2 * qy, 2 * qz, 2 * qy, -4 * qx, -2 * qw, 2 * qz, 2 * qw, -4 * qx;
  dRdy << -4 * qy, 2 * qx, 2 * qw, 2 * qx, 0, 2 * qz, -2 * qw, 2 * qz, -4 * qy;
  dRdz << -4 * qz, -2 * qw, 2 * qx, 2 * qw, -4 * qz, 2 * qy, 2 * qx, 2 * qy, 0;
  pg->d_rot[0] = dR.cwiseProduct(dRdw).sum();
  pg->d_rot[1] = dR.cwiseProduct(dRdx).sum();
  pg->d_rot[2] = dR.cwiseProduct(dRdy).sum();
  pg->d_rot[3] = dR.cwiseProduct(dRdz).sum();

  // Activations: opacity via sigmoid, color via clamp to [0,1].
  const T o = T(1) / (T(1) + std::exp(-g.opacity_logit));
  pg->d_opacity_logit = sg.d_op * o * (T(1) - o);
  for (int c = 0; c < 3; ++c) {
    const T raw = g.color[c];
    pg->d_color[c] = (raw > T(0) && raw < T(1)) ? sg.d_col[c] : T(0);
  }

  *grad2d_norm = std::sqrt(sg.d_mx * sg.d_mx + sg.d_my * sg.d_my);
}

}  // namespace

template <typename T>
FieldGradientsT<T> render_backward(const std::vector<Gaussian3<T>>& field,
                                   const Camera& cam, const RenderOptions& opt,
                                   const RenderOutputT<T>& out,
                                   const ImageT<T>& d_color,
                                   const ImageT<T>& d_alpha) {
  cam.validate();
  CVGS_CHECK_MSG(out.field_size == field.size() && out.tile_size == opt.tile_size,
                 "render output does not match this field/options");
  CVGS_CHECK_MSG(out.color.width == cam.width && out.color.height == cam.height,
                 "render output does not match this camera");
  CVGS_CHECK(d_color.width == cam.width && d_color.height == cam.height &&
             d_color.channels == 3);
  CVGS_CHECK(d_alpha.width == cam.width && d_alpha.height == cam.height &&
             d_alpha.channels == 1);

  const int W = cam.width, H = cam.height, ts = opt.tile_size;
  const int tiles_x = (W + ts - 1) / ts, tiles_y = (H + ts - 1) / ts;
  const int n_tiles = tiles_x * tiles_y;

  const auto works = detail::prepare_splats(field, cam);
  const auto tiles = bin_tiles(works, tiles_x, tiles_y, ts);

  const T bg[3] = {T(opt.background.x()), T(opt.background.y()), T(opt.background.z())};
  const T alpha_clamp = T(opt.alpha_clamp);

  // Per-tile partial sums, merged serially afterwards so per-Gaussian
  // accumulation order is tile-major and independent of the worker count.
  std::vector<std::vector<ScreenGrad<T>>> partial(n_tiles);

#pragma omp parallel for schedule(dynamic)
  for (int tile = 0; tile < n_tiles; ++tile) {
    const std::vector<int>& list = tiles[tile];
    if (list.empty()) continue;
    std::vector<ScreenGrad<T>>& local = partial[tile];
    local.resize(list.size());
    const int px0 = (tile % tiles_x) * ts, py0 = (tile / tiles_x) * ts;
    const int px1 = std::min(px0 + ts, W), py1 = std::min(py0 + ts, H);
    for (int py = py0; py < py1; ++py) {
      for (int px = px0; px < px1; ++px) {
        const int end_pos = out.end_pos.at(px, py, 0);
        if (end_pos == 0) continue;
        const T dC[3] = {d_color.at(px, py, 0), d_color.at(px, py, 1),
                         d_color.at(px, py, 2)};
        const T dA = d_alpha.at(px, py, 0);
        const T t_end = out.final_trans.at(px, py, 0);

        // Reverse sweep: reconstruct each splat's incident transmittance and
        // the suffix color sum.
        T t_next = t_end;
        T suffix[3] = {T(0), T(0), T(0)};
        for (int k = end_pos - 1; k >= 0; --k) {
          const SplatWork<T>& s = works[list[k]];
          if (px < s.x0 || px > s.x1 || py < s.y0 || py > s.y1) continue;
          T g, a;
          const T dx = T(px) - s.mx, dy = T(py) - s.my;
          splat_alpha(s, dx, dy, alpha_clamp, &g, &a);
          const T one_minus = T(1) - a;
          const T t_i = t_next / one_minus;
          const T w = a * t_i;

          ScreenGrad<T>& sg = local[k];
          sg.d_col[0] += dC[0] * w;
          sg.d_col[1] += dC[1] * w;
          sg.d_col[2] += dC[2] * w;

          T d_a = (dC[0] * s.color[0] + dC[1] * s.color[1] + dC[2] * s.color[2]) * t_i;
          const T down = dC[0] * (suffix[0] + bg[0] * t_end) +
                         dC[1] * (suffix[1] + bg[1] * t_end) +
                         dC[2] * (suffix[2] + bg[2] * t_end) - dA * t_end;
          d_a -= down / one_minus;

          if (s.opacity * g < alpha_clamp) {
            sg.d_op += g * d_a;
            const T dg = s.opacity * d_a;
            const T common = dg * g;
            const T qdx = s.qxx * dx + s.qxy * dy;
            const T qdy = s.qxy * dx + s.qyy * dy;
            sg.d_mx += common * qdx;
            sg.d_my += common * qdy;
            sg.d_cxx += T(0.5) * common * qdx * qdx;
            sg.d_cxy += T(0.5) * common * qdx * qdy;
            sg.d_cyy += T(0.5) * common * qdy * qdy;
          }

          suffix[0] += w * s.color[0];
          suffix[1] += w * s.color[1];
          suffix[2] += w * s.color[2];
          t_next = t_i;
        }
      }
    }
  }

  // Tile-major merge into per-splat totals.
  std::vector<ScreenGrad<T>> total(works.size());
  for (int tile = 0; tile < n_tiles; ++tile) {
    const std::vector<int>& list = tiles[tile];
    const std::vector<ScreenGrad<T>>& local = partial[tile];
    if (local.empty()) continue;
    for (size_t k = 0; k < list.size(); ++k) {
      ScreenGrad<T>& dst = total[list[k]];
      const ScreenGrad<T>& src = local[k];
      dst.d_mx += src.d_mx;
      dst.d_my += src.d_my;
      dst.d_cxx += src.d_cxx;
      dst.d_cxy += src.d_cxy;
      dst.d_cyy += src.d_cyy;
      dst.d_op += src.d_op;
      dst.d_col[0] += src.d_col[0];
      dst.d_col[1] += src.d_col[1];
      dst.d_col[2] += src.d_col[2];
    }
  }

  FieldGradientsT<T> grads;
  grads.params.resize(field.size());
  grads.grad2d_norm.assign(field.size(), T(0));
  grads.visible.assign(field.size(), 0);

  const int n_works = static_cast<int>(works.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n_works; ++i) {
    const int gi = works[i].gauss;
    grads.visible[gi] = 1;
    chain_to_params(field[gi], cam, total[i], &grads.params[gi],
                    &grads.grad2d_norm[gi]);
  }
  return grads;
}

template RenderOutputT<float> render(const std::vector<Gaussian3f>&, const Camera&,
                                     const RenderOptions&);
template RenderOutputT<double> render(const std::vector<Gaussian3d>&, const Camera&,
                                      const RenderOptions&);
template ImageT<float> render_depth(const std::vector<Gaussian3f>&, const Camera&,
                                    const RenderOptions&);
template ImageT<double> render_depth(const std::vector<Gaussian3d>&, const Camera&,
                                     const RenderOptions&);
template FieldGradientsT<float> render_backward(const std::vector<Gaussian3f>&,
                                                const Camera&, const RenderOptions&,
                                                const RenderOutputT<float>&,
                                                const ImageT<float>&,
                                                const ImageT<float>&);
template FieldGradientsT<double> render_backward(const std::vector<Gaussian3d>&,
                                                 const Camera&, const RenderOptions&,
                                                 const RenderOutputT<double>&,
                                                 const ImageT<double>&,
                                                 const ImageT<double>&);

}  // namespace cvgs
