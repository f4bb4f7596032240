#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "rhm/render/render.hpp"

namespace rhm::render {

using core::TensorNodeT;
using core::TensorT;

namespace {

// Everything needed to replay one face's contribution to one pixel.
template <class T>
struct FaceHit {
  int face;
  T l;         // aggregation logit ln(D) + zbar/gamma
  T c[3];      // interpolated color
  T z;         // interpolated depth
  T x;         // sigmoid argument sign*d^2/sigma
  T dprob;     // D = sigmoid(x)
  T w[3];      // interpolation weights
  T t;         // parameter of the closest boundary point on `edge`
  T pq[2];     // pixel minus closest boundary point
  int edge;    // active edge: 0 v0v1, 1 v1v2, 2 v2v0
  bool inside;
  bool clamped;  // closest feature is an edge endpoint
};

// Order hits by value only (never by face id) so aggregation is
// bit-identical under any permutation of the face list.
template <class T>
bool hit_less(const FaceHit<T>& a, const FaceHit<T>& b) {
  auto key = [](const FaceHit<T>& h) {
    return std::make_tuple(h.l, h.c[0], h.c[1], h.c[2], h.z, h.x, h.w[0], h.w[1],
                           h.w[2], h.t, h.pq[0], h.pq[1], h.edge, h.inside,
                           h.clamped);
  };
  return key(a) < key(b);
}

template <class T>
T softplus(T x) {
  if (x > T(30)) return x;
  if (x < T(-30)) return std::exp(x);
  return std::log1p(std::exp(x));
}

template <class T>
struct PixelAgg {
  T m, s;       // streaming logsumexp state (max logit, scaled denominator)
  T acc[3];     // scaled color numerator
  T ssp;        // sum of softplus(x) over hits, for the silhouette
  T sil;
};

struct Edge {
  int a, b;
};
constexpr Edge kEdges[3] = {{0, 1}, {1, 2}, {2, 0}};

template <class T>
T cross2(T ux, T uy, T vx, T vy) {
  return ux * vy - uy * vx;
}

// Collects hits per pixel. uv/zs/cs are the projected corners, depths and
// colors of one face; p spans the pixel grid covered by its padded bbox.
// far/zscale turn raw z into the normalized-depth logit term.
template <class T>
void collect_face(int fi, const T uv[3][2], const T zs[3], const T cs[3][3],
                  const Camera& cam, T sigma, T far, T zscale,
                  std::vector<std::vector<FaceHit<T>>>& hits) {
  const T area = cross2(uv[1][0] - uv[0][0], uv[1][1] - uv[0][1],
                        uv[2][0] - uv[0][0], uv[2][1] - uv[0][1]);
  if (std::abs(area) < T(1e-12)) return;  // degenerate projection

  const T pad = std::sqrt(T(45) * sigma);  // sigmoid(-45): below noise
  const T minu = std::min({uv[0][0], uv[1][0], uv[2][0]}) - pad;
  const T maxu = std::max({uv[0][0], uv[1][0], uv[2][0]}) + pad;
  const T minv = std::min({uv[0][1], uv[1][1], uv[2][1]}) - pad;
  const T maxv = std::max({uv[0][1], uv[1][1], uv[2][1]}) + pad;
  const int j0 = std::max(0, (int)std::floor(minu - T(0.5)));
  const int j1 = std::min(cam.width - 1, (int)std::ceil(maxu - T(0.5)));
  const int i0 = std::max(0, (int)std::floor(minv - T(0.5)));
  const int i1 = std::min(cam.height - 1, (int)std::ceil(maxv - T(0.5)));

  for (int i = i0; i <= i1; ++i) {
    for (int j = j0; j <= j1; ++j) {
      const T px = T(j) + T(0.5), py = T(i) + T(0.5);

      // signed barycentrics
      T s0 = cross2(uv[1][0] - px, uv[1][1] - py, uv[2][0] - px, uv[2][1] - py);
      T s1 = cross2(uv[2][0] - px, uv[2][1] - py, uv[0][0] - px, uv[0][1] - py);
      T s2 = cross2(uv[0][0] - px, uv[0][1] - py, uv[1][0] - px, uv[1][1] - py);
      const T wb[3] = {s0 / area, s1 / area, s2 / area};
      const bool inside = wb[0] >= T(0) && wb[1] >= T(0) && wb[2] >= T(0);

      // closest point on the boundary over the three edges
      T best_d2 = std::numeric_limits<T>::max();
      T best_t = T(0), best_pq[2] = {T(0), T(0)};
      int best_e = 0;
      bool best_clamped = false;
      for (int e = 0; e < 3; ++e) {
        const T ax = uv[kEdges[e].a][0], ay = uv[kEdges[e].a][1];
        const T bx = uv[kEdges[e].b][0], by = uv[kEdges[e].b][1];
        const T ex = bx - ax, ey = by - ay;
        const T fx = px - ax, fy = py - ay;
        const T len2 = ex * ex + ey * ey;
        T t = len2 > T(0) ? (fx * ex + fy * ey) / len2 : T(0);
        bool clamped = false;
        if (t <= T(0)) { t = T(0); clamped = true; }
        if (t >= T(1)) { t = T(1); clamped = true; }
        const T qx = ax + t * ex, qy = ay + t * ey;
        const T dx = px - qx, dy = py - qy;
        const T d2 = dx * dx + dy * dy;
        if (d2 < best_d2) {
          best_d2 = d2;
          best_t = t;
          best_pq[0] = dx;
          best_pq[1] = dy;
          best_e = e;
          best_clamped = clamped;
        }
      }

      const T x = (inside ? T(1) : T(-1)) * best_d2 / sigma;
      if (!inside && x < T(-45)) continue;  // contribution below noise

      FaceHit<T> h;
      h.face = fi;
      h.x = x;
      h.dprob = T(1) / (T(1) + std::exp(-x));
      h.t = best_t;
      h.pq[0] = best_pq[0];
      h.pq[1] = best_pq[1];
      h.edge = best_e;
      h.inside = inside;
      h.clamped = best_clamped;
      if (inside) {
        for (int k = 0; k < 3; ++k) h.w[k] = wb[k];
      } else {
        h.w[0] = h.w[1] = h.w[2] = T(0);
        h.w[kEdges[best_e].a] = T(1) - best_t;
        h.w[kEdges[best_e].b] = best_t;
      }
      h.z = h.w[0] * zs[0] + h.w[1] * zs[1] + h.w[2] * zs[2];
      for (int ch = 0; ch < 3; ++ch) {
        h.c[ch] = h.w[0] * cs[0][ch] + h.w[1] * cs[1][ch] + h.w[2] * cs[2][ch];
      }
      // ln sigmoid(x) = -softplus(-x)
      h.l = -softplus(-x) + (h.z - far) * zscale;
      hits[(size_t)i * cam.width + j].push_back(h);
    }
  }
}

template <class T>
void project_face(const std::array<int, 3>& f, const T* vdata, const Camera& cam,
                  T uv[3][2], T zs[3]) {
  for (int k = 0; k < 3; ++k) {
    const T* v = vdata + 3 * f[k];
    uv[k][0] = T(cam.cx) + T(cam.sx) * v[0];
    uv[k][1] = T(cam.cy) + T(cam.sy) * v[1];
    zs[k] = v[2];
  }
}

}  // namespace

template <class T>
std::pair<TensorT<T>, TensorT<T>> soft_rasterize(
    const TensorT<T>& vertices, const std::vector<std::array<int, 3>>& faces,
    const TensorT<T>& colors, const Camera& cam, const RasterSettings& settings) {
  if (vertices.rank() != 2 || vertices.dim(1) != 3) {
    throw std::invalid_argument("soft_rasterize: vertices must be [N,3], got " +
                                core::shape_str(vertices.shape()));
  }
  if (colors.shape() != vertices.shape()) {
    throw std::invalid_argument("soft_rasterize: colors shape " +
                                core::shape_str(colors.shape()) +
                                " does not match vertices " +
                                core::shape_str(vertices.shape()));
  }
  if (faces.empty()) throw std::invalid_argument("soft_rasterize: empty mesh");
  const int n = (int)vertices.dim(0);
  for (const auto& f : faces) {
    for (int k = 0; k < 3; ++k) {
      if (f[k] < 0 || f[k] >= n) {
        throw std::invalid_argument("soft_rasterize: face index " +
                                    std::to_string(f[k]) + " out of range [0," +
                                    std::to_string(n) + ")");
      }
    }
  }
  const int hpix = cam.height, wpix = cam.width;
  const T sigma = T(settings.sigma);
  // Depth logit: zbar/gamma with zbar = (z - far)/(near - far), so the
  // background (at the far plane) sits at logit 0.
  const T far = T(settings.far_plane);
  const T zscale =
      T(1) / (T(settings.gamma) * (T(settings.near_plane) - far));
  const T lbg = T(0);

  auto hits = std::make_shared<std::vector<std::vector<FaceHit<T>>>>(
      (size_t)hpix * wpix);
  const T* vdata = vertices.data().data();
  const T* cdata = colors.data().data();
  for (size_t fi = 0; fi < faces.size(); ++fi) {
    T uv[3][2], zs[3], cs[3][3];
    project_face(faces[fi], vdata, cam, uv, zs);
    for (int k = 0; k < 3; ++k) {
      for (int ch = 0; ch < 3; ++ch) cs[k][ch] = cdata[3 * faces[fi][k] + ch];
    }
    collect_face((int)fi, uv, zs, cs, cam, sigma, far, zscale, *hits);
  }

  auto agg = std::make_shared<std::vector<PixelAgg<T>>>((size_t)hpix * wpix);
  std::vector<T> image((size_t)3 * hpix * wpix);
  std::vector<T> sil((size_t)hpix * wpix);
  for (size_t pi = 0; pi < (*hits).size(); ++pi) {
    auto& hv = (*hits)[pi];
    std::sort(hv.begin(), hv.end(), hit_less<T>);
    PixelAgg<T>& a = (*agg)[pi];
    a.m = lbg;
    a.s = T(1);
    for (int ch = 0; ch < 3; ++ch) a.acc[ch] = T(settings.background[ch]);
    a.ssp = T(0);
    for (const auto& h : hv) {
      if (h.l > a.m) {
        const T r = std::exp(a.m - h.l);
        a.s *= r;
        for (int ch = 0; ch < 3; ++ch) a.acc[ch] *= r;
        a.m = h.l;
      }
      const T e = std::exp(h.l - a.m);
      a.s += e;
      for (int ch = 0; ch < 3; ++ch) a.acc[ch] += e * h.c[ch];
      a.ssp += softplus(h.x);
    }
    a.sil = T(1) - std::exp(-a.ssp);
    sil[pi] = a.sil;
    for (int ch = 0; ch < 3; ++ch) {
      image[(size_t)ch * hpix * wpix + pi] = T(2) * a.acc[ch] / a.s - T(1);
    }
  }

  auto vn = vertices.node();
  auto cn = colors.node();
  auto fcopy = std::make_shared<std::vector<std::array<int, 3>>>(faces);
  const Camera camc = cam;

  // Shared backward core: routes d(image) and d(silhouette) into vertex and
  // color grads by replaying each stored hit.
  auto backprop = [hits, agg, fcopy, vn, cn, camc, sigma, zscale, hpix, wpix](
                      const T* gimg, const T* gsil) {
    const bool want_v = vn->requires_grad;
    const bool want_c = cn->requires_grad;
    if (!want_v && !want_c) return;
    T* gv = want_v ? vn->grad_buf().data() : nullptr;
    T* gc = want_c ? cn->grad_buf().data() : nullptr;
    const T* vdata = vn->data.data();
    const T* cdata = cn->data.data();
    const size_t plane = (size_t)hpix * wpix;

    for (size_t pi = 0; pi < plane; ++pi) {
      const auto& hv = (*hits)[pi];
      if (hv.empty()) continue;
      const PixelAgg<T>& a = (*agg)[pi];
      T gagg[3] = {T(0), T(0), T(0)};
      if (gimg) {
        for (int ch = 0; ch < 3; ++ch) gagg[ch] = T(2) * gimg[ch * plane + pi];
      }
      const T gs = gsil ? gsil[pi] : T(0);
      T aggc[3];
      for (int ch = 0; ch < 3; ++ch) aggc[ch] = a.acc[ch] / a.s;
      const T px = T(pi % wpix) + T(0.5), py = T(pi / wpix) + T(0.5);

      for (const auto& h : hv) {
        const auto& f = (*fcopy)[h.face];
        const T alpha = std::exp(h.l - a.m) / a.s;

        // softmax color aggregation
        T gl = T(0);
        T gC[3];
        for (int ch = 0; ch < 3; ++ch) {
          gl += alpha * (h.c[ch] - aggc[ch]) * gagg[ch];
          gC[ch] = alpha * gagg[ch];
        }
        const T gz = gl * zscale;
        // l = -softplus(-x) + zbar/gamma; silhouette adds (1-S)*D per hit
        T gx = gl * (T(1) - h.dprob) + gs * (T(1) - a.sil) * h.dprob;
        const T gd2 = gx * (h.inside ? T(1) : T(-1)) / sigma;

        // weights feed color and depth interpolation
        T gw[3];
        for (int k = 0; k < 3; ++k) {
          gw[k] = gz * vdata[3 * f[k] + 2];
          for (int ch = 0; ch < 3; ++ch) gw[k] += gC[ch] * cdata[3 * f[k] + ch];
          if (want_c) {
            for (int ch = 0; ch < 3; ++ch) gc[3 * f[k] + ch] += h.w[k] * gC[ch];
          }
        }
        if (!want_v) continue;

        T uv[3][2], zs[3];
        project_face(f, vdata, camc, uv, zs);
        T guv[3][2] = {{T(0), T(0)}, {T(0), T(0)}, {T(0), T(0)}};

        // d^2 through the closest boundary point (envelope form: the active
        // feature is locally fixed)
        const int ea = kEdges[h.edge].a, eb = kEdges[h.edge].b;
        if (h.clamped) {
          const int vtx = h.t == T(0) ? ea : eb;
          guv[vtx][0] += gd2 * T(-2) * h.pq[0];
          guv[vtx][1] += gd2 * T(-2) * h.pq[1];
        } else {
          guv[ea][0] += gd2 * T(-2) * h.pq[0] * (T(1) - h.t);
          guv[ea][1] += gd2 * T(-2) * h.pq[1] * (T(1) - h.t);
          guv[eb][0] += gd2 * T(-2) * h.pq[0] * h.t;
          guv[eb][1] += gd2 * T(-2) * h.pq[1] * h.t;
        }

        if (h.inside) {
          // barycentric partials: w_k = s_k / A
          const T ax = uv[0][0], ay = uv[0][1];
          const T bx = uv[1][0], by = uv[1][1];
          const T cx = uv[2][0], cy = uv[2][1];
          const T area = cross2(bx - ax, by - ay, cx - ax, cy - ay);
          T gsv[3] = {gw[0] / area, gw[1] / area, gw[2] / area};
          const T gA = -(gw[0] * h.w[0] + gw[1] * h.w[1] + gw[2] * h.w[2]) / area;
          // s0 = cross(b-p, c-p)
          guv[1][0] += gsv[0] * (cy - py);
          guv[1][1] += gsv[0] * -(cx - px);
          guv[2][0] += gsv[0] * -(by - py);
          guv[2][1] += gsv[0] * (bx - px);
          // s1 = cross(c-p, a-p)
          guv[2][0] += gsv[1] * (ay - py);
          guv[2][1] += gsv[1] * -(ax - px);
          guv[0][0] += gsv[1] * -(cy - py);
          guv[0][1] += gsv[1] * (cx - px);
          // s2 = cross(a-p, b-p)
          guv[0][0] += gsv[2] * (by - py);
          guv[0][1] += gsv[2] * -(bx - px);
          guv[1][0] += gsv[2] * -(ay - py);
          guv[1][1] += gsv[2] * (ax - px);
          // A = cross(b-a, c-a)
          const T dAdb[2] = {cy - ay, -(cx - ax)};
          const T dAdc[2] = {-(by - ay), bx - ax};
          guv[1][0] += gA * dAdb[0];
          guv[1][1] += gA * dAdb[1];
          guv[2][0] += gA * dAdc[0];
          guv[2][1] += gA * dAdc[1];
          guv[0][0] += gA * (-dAdb[0] - dAdc[0]);
          guv[0][1] += gA * (-dAdb[1] - dAdc[1]);
        } else if (!h.clamped) {
          // outside, edge interior: w = (1-t, t) on the active edge
          const T gt = gw[eb] - gw[ea];
          const T ex = uv[eb][0] - uv[ea][0], ey = uv[eb][1] - uv[ea][1];
          const T fx2 = px - uv[ea][0], fy2 = py - uv[ea][1];
          const T len2 = ex * ex + ey * ey;
          guv[ea][0] += gt * (-(ex + fx2) + T(2) * h.t * ex) / len2;
          guv[ea][1] += gt * (-(ey + fy2) + T(2) * h.t * ey) / len2;
          guv[eb][0] += gt * (fx2 - T(2) * h.t * ex) / len2;
          guv[eb][1] += gt * (fy2 - T(2) * h.t * ey) / len2;
        }
        // else: outside at a vertex, weights locally constant

        for (int k = 0; k < 3; ++k) {
          gv[3 * f[k] + 0] += T(camc.sx) * guv[k][0];
          gv[3 * f[k] + 1] += T(camc.sy) * guv[k][1];
          gv[3 * f[k] + 2] += gz * h.w[k];
        }
      }
    }
  };

  TensorT<T> image_t = core::detail::make_result<T>(
      {3, hpix, wpix}, std::move(image), {vn, cn},
      [backprop](TensorNodeT<T>& node) {
        node.backward_fn = [backprop, &node]() {
          backprop(node.grad.data(), nullptr);
        };
      });
  TensorT<T> sil_t = core::detail::make_result<T>(
      {hpix, wpix}, std::move(sil), {vn},
      [backprop](TensorNodeT<T>& node) {
        node.backward_fn = [backprop, &node]() {
          backprop(nullptr, node.grad.data());
        };
      });
  return {image_t, sil_t};
}

template std::pair<TensorT<float>, TensorT<float>> soft_rasterize<float>(
    const TensorT<float>&, const std::vector<std::array<int, 3>>&,
    const TensorT<float>&, const Camera&, const RasterSettings&);
template std::pair<TensorT<double>, TensorT<double>> soft_rasterize<double>(
    const TensorT<double>&, const std::vector<std::array<int, 3>>&,
    const TensorT<double>&, const Camera&, const RasterSettings&);

HardRaster hard_rasterize(const TexturedMesh& mesh, const Camera& cam,
                          const RasterSettings& settings) {
  HardRaster out;
  out.height = cam.height;
  out.width = cam.width;
  const size_t plane = (size_t)cam.height * cam.width;
  out.image.assign(3 * plane, 0.0);
  out.mask.assign(plane, 0);
  out.depth.assign(plane, settings.far_plane);
  out.face.assign(plane, -1);
  out.bary.assign(3 * plane, 0.0);
  for (int ch = 0; ch < 3; ++ch) {
    std::fill(out.image.begin() + ch * plane, out.image.begin() + (ch + 1) * plane,
              2.0 * settings.background[ch] - 1.0);
  }

  for (size_t fi = 0; fi < mesh.faces.size(); ++fi) {
    const auto& f = mesh.faces[fi];
    double uv[3][2], zs[3];
    for (int k = 0; k < 3; ++k) {
      uv[k][0] = cam.cx + cam.sx * mesh.vertices(f[k], 0);
      uv[k][1] = cam.cy + cam.sy * mesh.vertices(f[k], 1);
      zs[k] = mesh.vertices(f[k], 2);
    }
    const double area = cross2(uv[1][0] - uv[0][0], uv[1][1] - uv[0][1],
                               uv[2][0] - uv[0][0], uv[2][1] - uv[0][1]);
    if (std::abs(area) < 1e-12) continue;
    const int j0 = std::max(0, (int)std::floor(std::min({uv[0][0], uv[1][0], uv[2][0]}) - 0.5));
    const int j1 = std::min(cam.width - 1, (int)std::ceil(std::max({uv[0][0], uv[1][0], uv[2][0]}) - 0.5));
    const int i0 = std::max(0, (int)std::floor(std::min({uv[0][1], uv[1][1], uv[2][1]}) - 0.5));
    const int i1 = std::min(cam.height - 1, (int)std::ceil(std::max({uv[0][1], uv[1][1], uv[2][1]}) - 0.5));
    for (int i = i0; i <= i1; ++i) {
      for (int j = j0; j <= j1; ++j) {
        const double px = j + 0.5, py = i + 0.5;
        const double s0 = cross2(uv[1][0] - px, uv[1][1] - py, uv[2][0] - px, uv[2][1] - py);
        const double s1 = cross2(uv[2][0] - px, uv[2][1] - py, uv[0][0] - px, uv[0][1] - py);
        const double s2 = cross2(uv[0][0] - px, uv[0][1] - py, uv[1][0] - px, uv[1][1] - py);
        const double w[3] = {s0 / area, s1 / area, s2 / area};
        if (w[0] < 0 || w[1] < 0 || w[2] < 0) continue;
        const double z = w[0] * zs[0] + w[1] * zs[1] + w[2] * zs[2];
        const size_t pi = (size_t)i * cam.width + j;
        if (!out.mask[pi] || z > out.depth[pi]) {
          out.mask[pi] = 1;
          out.depth[pi] = z;
          out.face[pi] = (int)fi;
          for (int k = 0; k < 3; ++k) out.bary[3 * pi + k] = w[k];
          for (int ch = 0; ch < 3; ++ch) {
            const double c = w[0] * mesh.colors(f[0], ch) +
                             w[1] * mesh.colors(f[1], ch) +
                             w[2] * mesh.colors(f[2], ch);
            out.image[ch * plane + pi] = 2.0 * c - 1.0;
          }
        }
      }
    }
  }
  return out;
}

}  // namespace rhm::render
