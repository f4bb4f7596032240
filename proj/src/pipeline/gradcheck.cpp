#include <cmath>
#include <functional>
#include <iomanip>
#include <ostream>

#include "rhm/core/fdcheck.hpp"
#include "rhm/pipeline/pipeline.hpp"

namespace rhm::pipeline {

namespace {

using core::TensorD;
using FdFn = std::function<TensorD(const TensorD&)>;

TensorD rnd(core::Rng& rng, core::Shape shape, double lo, double hi) {
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return TensorD::from(std::move(shape), std::move(v));
}

/// Values in +-[0.3, 1.0]: safe probing distance from the kinks of
/// relu/leaky_relu/abs at zero.
TensorD rnd_off_zero(core::Rng& rng, core::Shape shape) {
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  std::vector<double> v(n);
  for (auto& x : v) {
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    x = sign * (0.3 + 0.7 * rng.uniform());
  }
  return TensorD::from(std::move(shape), std::move(v));
}

TensorD wsum(const TensorD& x, const TensorD& w) { return core::sum_all(core::mul(x, w)); }

struct Suite {
  std::vector<GradCheckRow> rows;
  void check(const std::string& name, double tol, const FdFn& fn, const TensorD& point,
             double eps = 1e-5) {
    const double err = core::finite_difference_check(fn, point, eps);
    rows.push_back({name, err, tol, err < tol});
  }
};

}  // namespace

std::vector<GradCheckRow> run_gradcheck(uint64_t seed) {
  core::Rng rng(seed);
  Suite s;
  constexpr double kTol = 1e-4;
  constexpr double kLoose = 1e-3;  // rasterizer and full compose path

  // ---- elementwise and reductions ----
  {
    auto x = rnd(rng, {12}, -1, 1);
    s.check("core/tanh", kTol, [](const TensorD& t) { return core::sum_all(core::tanh(t)); }, x);
    s.check("core/sigmoid", kTol,
            [](const TensorD& t) { return core::sum_all(core::sigmoid(t)); }, x);
    s.check("core/square", kTol,
            [](const TensorD& t) { return core::sum_all(core::square(t)); }, x);
    s.check("core/mean-all", kTol, [](const TensorD& t) { return core::mean_all(t); }, x);
    s.check("core/scale-shift", kTol,
            [](const TensorD& t) {
              return core::sum_all(core::add_scalar(core::scale(t, 1.7), 0.3));
            },
            x);
  }
  {
    auto x = rnd_off_zero(rng, {12});
    s.check("core/relu", kTol, [](const TensorD& t) { return core::sum_all(core::relu(t)); }, x);
    s.check("core/leaky-relu", kTol,
            [](const TensorD& t) { return core::sum_all(core::leaky_relu(t)); }, x);
    s.check("core/abs", kTol, [](const TensorD& t) { return core::sum_all(core::abs(t)); }, x);
  }
  {
    auto x = rnd(rng, {8}, -1, 1);
    auto y = rnd(rng, {8}, -1, 1);
    s.check("core/arithmetic", kTol,
            [y](const TensorD& t) {
              return core::sum_all(core::mul(core::add(t, y), core::sub(t, y)));
            },
            x);
  }

  // ---- losses ----
  {
    auto a = rnd(rng, {10}, -1, 1);
    auto b = rnd(rng, {10}, 1.2, 2.0);  // kept away from a: dodges the L1 kink
    std::vector<double> mask = {1, 0, 1, 1, 0, 1, 0, 1, 1, 0};
    s.check("core/mse", kTol, [b](const TensorD& t) { return core::mse(t, b); }, a);
    s.check("core/l1", kTol, [b](const TensorD& t) { return core::l1(t, b); }, a);
    s.check("core/masked-l1", kTol,
            [b, mask](const TensorD& t) {
              return core::masked_l1(t, b, std::span<const double>(mask));
            },
            a);
  }

  // ---- shape plumbing and linear algebra ----
  {
    auto x = rnd(rng, {3, 4}, -1, 1);
    auto w = rnd(rng, {6}, -1, 1);
    auto tail = rnd(rng, {6}, -1, 1);
    s.check("core/reshape-narrow-concat", kTol,
            [w, tail](const TensorD& t) {
              auto flat = core::reshape(core::transpose2d(t), {12});
              auto piece = core::narrow(flat, 2, 6);
              auto both = core::concat(std::vector<TensorD>{piece, tail}, 0);
              return core::sum_all(core::mul(core::narrow(both, 0, 6), w));
            },
            x);
    auto b = rnd(rng, {4, 2}, -1, 1);
    s.check("core/matmul", kTol,
            [b](const TensorD& t) { return core::sum_all(core::matmul(t, b)); }, x);
    auto bias = rnd(rng, {3}, -1, 1);
    s.check("core/add-rowwise", kTol,
            [bias](const TensorD& t) { return core::sum_all(core::add_rowwise(t, bias)); },
            x);
    auto wsm = rnd(rng, {3, 4}, -1, 1);
    s.check("core/softmax", kTol,
            [wsm](const TensorD& t) { return wsum(core::softmax(t, 0), wsm); }, x);
  }
  {
    auto x = rnd(rng, {5, 3}, -1, 1);
    auto w = rnd(rng, {6}, -1, 1);
    s.check("core/moments-rows", kTol,
            [w](const TensorD& t) { return wsum(core::moments_rows(t), w); }, x);
  }

  // ---- layers ----
  {
    auto layer = core::make_linear<double>(5, 3, rng);
    auto x = rnd(rng, {5}, -1, 1);
    s.check("core/linear", kTol,
            [layer](const TensorD& t) { return core::sum_all(core::forward(layer, t)); }, x);
    s.check("core/linear-weight", kTol,
            [layer, x](const TensorD& w) {
              return core::sum_all(core::linear_op(x, w, layer.bias));
            },
            layer.weight);
  }
  {
    auto layer = core::make_conv1d<double>(2, 3, 3, 1, 1, rng);
    auto x = rnd(rng, {2, 9}, -1, 1);
    s.check("core/conv1d", kTol,
            [layer](const TensorD& t) { return core::sum_all(core::forward(layer, t)); }, x);
    s.check("core/conv1d-weight", kTol,
            [layer, x](const TensorD& w) {
              return core::sum_all(core::conv1d_op(x, w, layer.bias, 1, 1));
            },
            layer.weight);
  }
  {
    auto layer = core::make_conv2d<double>(2, 3, 3, 2, 1, rng);
    auto x = rnd(rng, {2, 6, 6}, -1, 1);
    s.check("core/conv2d", kTol,
            [layer](const TensorD& t) { return core::sum_all(core::forward(layer, t)); }, x);
    s.check("core/conv2d-weight", kTol,
            [layer, x](const TensorD& w) {
              return core::sum_all(core::conv2d_op(x, w, layer.bias, 2, 1));
            },
            layer.weight);
  }
  {
    auto layer = core::make_transposed_conv2d<double>(2, 3, 4, 2, 1, rng);
    auto x = rnd(rng, {2, 4, 4}, -1, 1);
    s.check("core/transposed-conv2d", kTol,
            [layer](const TensorD& t) { return core::sum_all(core::forward(layer, t)); }, x);
    s.check("core/transposed-conv2d-weight", kTol,
            [layer, x](const TensorD& w) {
              return core::sum_all(core::conv_transpose2d_op(x, w, layer.bias, 2, 1));
            },
            layer.weight);
  }
  {
    auto layer = core::make_layer_norm<double>(6);
    auto x = rnd(rng, {2, 6}, -1, 1);
    auto w = rnd(rng, {2, 6}, -1, 1);
    s.check("core/layer-norm", kTol,
            [layer, w](const TensorD& t) { return wsum(core::forward(layer, t), w); }, x);
  }
  {
    auto x = rnd(rng, {2, 5, 5}, -1, 1);
    auto w = rnd(rng, {2, 5, 5}, -1, 1);
    s.check("core/instance-norm2d", kTol,
            [w](const TensorD& t) { return wsum(core::instance_norm2d(t), w); }, x);
    auto wp = rnd(rng, {2, 2, 2}, -1, 1);
    auto xp = rnd(rng, {2, 4, 4}, -1, 1);
    s.check("core/avg-pool2d", kTol,
            [wp](const TensorD& t) { return wsum(core::avg_pool2d(t), wp); }, xp);
  }
  {
    auto img = rnd(rng, {2, 5, 5}, -1, 1);
    auto w = rnd(rng, {2, 5, 5}, -1, 1);
    std::vector<double> flow(5 * 5 * 2);
    for (auto& f : flow) {
      f = rng.uniform(-1.3, 1.3);  // fractional: off the bilinear kinks at integers
      if (std::abs(f - std::round(f)) < 0.05) f += 0.1;
    }
    s.check("core/bilinear-warp", kTol,
            [w, flow](const TensorD& t) {
              return wsum(core::bilinear_warp(t, std::span<const double>(flow)), w);
            },
            img);
  }

  // ---- soft rasterizer ----
  {
    render::Camera cam;
    cam.sx = 3.0;
    cam.sy = -3.0;
    cam.cx = 4.0;
    cam.cy = 4.0;
    cam.width = 8;
    cam.height = 8;
    const render::RasterSettings settings;
    const std::vector<std::array<int, 3>> faces = {{0, 1, 2}, {1, 3, 2}, {2, 3, 4}};
    auto verts = rnd(rng, {5, 3}, -0.9, 0.9);
    auto colors = rnd(rng, {5, 3}, 0.1, 0.9);
    auto wimg = rnd(rng, {3, 8, 8}, -1, 1);
    auto wsil = rnd(rng, {8, 8}, -1, 1);
    s.check("render/rasterize-vertices", kLoose,
            [&](const TensorD& v) {
              auto [img, sil] = render::soft_rasterize<double>(v, faces, colors, cam, settings);
              return core::add(wsum(img, wimg), wsum(sil, wsil));
            },
            verts);
    s.check("render/rasterize-colors", kLoose,
            [&](const TensorD& c) {
              auto [img, sil] = render::soft_rasterize<double>(verts, faces, c, cam, settings);
              return core::add(wsum(img, wimg), wsum(sil, wsil));
            },
            colors);
  }

  // ---- full compose path (hyper-kernel SPADE decoder) ----
  {
    auto gen = synth::make_generator_model<double>(rng, 16, 1);
    auto e_l = rnd(rng, {synth::kLayoutDim}, -1, 1);
    auto e_y = rnd(rng, {synth::kAppearanceDim}, -0.5, 0.5);
    auto theta = synth::fuse(gen, e_l, e_y);
    // Re-leaf the predicted kernels so they can serve as probe points.
    synth::ThetaT<double> leaf;
    auto as_leaf = [](const TensorD& t) {
      return TensorD::from(t.shape(), std::vector<double>(t.data().begin(), t.data().end()));
    };
    for (const auto& t : theta.s) leaf.s.push_back(as_leaf(t));
    for (const auto& t : theta.gamma) leaf.gamma.push_back(as_leaf(t));
    for (const auto& t : theta.beta) leaf.beta.push_back(as_leaf(t));

    auto query = rnd(rng, {1, 16, 16}, 0, 1);
    auto wproj = rnd(rng, {3, 16, 16}, -1, 1);
    auto wmatch = rnd(rng, {3, 16, 16}, -1, 1);
    auto wout = rnd(rng, {3, 16, 16}, -1, 1);

    s.check("synth/compose-warped-frame", kLoose,
            [&](const TensorD& x) {
              return wsum(synth::compose_frame(gen, leaf, e_y, query, x, wmatch), wout);
            },
            wproj);
    s.check("synth/compose-theta-kernel", kLoose,
            [&](const TensorD& x) {
              synth::ThetaT<double> probe = leaf;
              probe.s[0] = x;
              return wsum(synth::compose_frame(gen, probe, e_y, query, wproj, wmatch), wout);
            },
            leaf.s[0]);
    s.check("synth/fuse-compose-appearance", kLoose,
            [&](const TensorD& x) {
              auto th = synth::fuse(gen, e_l, x);
              return wsum(synth::compose_frame(gen, th, x, query, wproj, wmatch), wout);
            },
            e_y);
  }

  return s.rows;
}

bool print_gradcheck(const std::vector<GradCheckRow>& rows, std::ostream& out) {
  bool all = true;
  out << std::left << std::setw(36) << "layer" << std::setw(14) << "max rel err"
      << std::setw(12) << "tolerance"
      << "status\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(36) << r.name << std::setw(14) << std::scientific
        << std::setprecision(2) << r.max_rel_err << std::setw(12) << r.tolerance
        << (r.pass ? "pass" : "FAIL") << "\n";
    all = all && r.pass;
  }
  out << (all ? "gradcheck: all " : "gradcheck: FAILURES among ") << rows.size()
      << " checks" << (all ? " passed" : "") << "\n";
  return all;
}

}  // namespace rhm::pipeline
