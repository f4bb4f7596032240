#include <Eigen/SVD>
#include <stdexcept>

#include "rhm/expr/expr.hpp"

namespace rhm::expr {

namespace {

Eigen::VectorXd flatten(const geom::LandmarkSet& frame) {
  Eigen::VectorXd v(kLandmarkDim);
  for (int i = 0; i < geom::kNumLandmarks; ++i) {
    for (int k = 0; k < 3; ++k) v[3 * i + k] = frame.points(i, k);
  }
  return v;
}

geom::LandmarkSet unflatten(const Eigen::VectorXd& v) {
  geom::LandmarkSet frame;
  for (int i = 0; i < geom::kNumLandmarks; ++i) {
    for (int k = 0; k < 3; ++k) frame.points(i, k) = v[3 * i + k];
  }
  return frame;
}

}  // namespace

ExpressionBasis fit_expression_basis(const std::vector<geom::LandmarkSet>& aligned_frames) {
  const int n = (int)aligned_frames.size();
  if (n < kNumCoeffs + 1) {
    throw std::invalid_argument("fit_expression_basis: need at least " +
                                std::to_string(kNumCoeffs + 1) + " frames, got " +
                                std::to_string(n));
  }
  Eigen::MatrixXd data(n, kLandmarkDim);
  for (int t = 0; t < n; ++t) data.row(t) = flatten(aligned_frames[(size_t)t]);

  ExpressionBasis basis;
  basis.mean = data.colwise().mean();
  data.rowwise() -= basis.mean.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(data, Eigen::ComputeThinV);
  basis.components = svd.matrixV().leftCols(kNumCoeffs).transpose();
  basis.explained_variance =
      svd.singularValues().head(kNumCoeffs).array().square() / (n - 1);

  // Deterministic sign: largest-magnitude entry of each component positive.
  for (int k = 0; k < kNumCoeffs; ++k) {
    int arg = 0;
    for (int j = 1; j < kLandmarkDim; ++j) {
      if (std::abs(basis.components(k, j)) > std::abs(basis.components(k, arg))) arg = j;
    }
    if (basis.components(k, arg) < 0) basis.components.row(k) = -basis.components.row(k);
  }
  return basis;
}

ExpressionCoeffs encode_expression(const geom::LandmarkSet& frame,
                                   const ExpressionBasis& basis) {
  ExpressionCoeffs out;
  out.coeffs = basis.components * (flatten(frame) - basis.mean);
  return out;
}

geom::LandmarkSet decode_expression(const ExpressionCoeffs& coeffs,
                                    const ExpressionBasis& basis) {
  return unflatten(basis.mean + basis.components.transpose() * coeffs.coeffs);
}

geom::LandmarkSet add_identity(const ExpressionCoeffs& predicted,
                               const geom::LandmarkSet& reference_frame,
                               const ExpressionBasis& basis) {
  const geom::LandmarkSet decoded = decode_expression(predicted, basis);
  const geom::LandmarkSet ref_proj =
      decode_expression(encode_expression(reference_frame, basis), basis);
  geom::LandmarkSet out;
  out.points = decoded.points + reference_frame.points - ref_proj.points;
  return out;
}

void save_basis(const std::string& path, const ExpressionBasis& basis) {
  auto to_tensor = [](const double* p, core::Shape shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    std::vector<float> v((size_t)n);
    for (int64_t i = 0; i < n; ++i) v[(size_t)i] = (float)p[i];
    return core::Tensor::from(shape, v);
  };
  // components is stored row-major on disk; Eigen's default is column-major
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
      comp = basis.components;
  core::save_checkpoint(
      path, {{"basis.mean", to_tensor(basis.mean.data(), {kLandmarkDim})},
             {"basis.components", to_tensor(comp.data(), {kNumCoeffs, kLandmarkDim})},
             {"basis.variance", to_tensor(basis.explained_variance.data(), {kNumCoeffs})}});
}

ExpressionBasis load_basis(const std::string& path) {
  const core::NamedTensors loaded = core::load_checkpoint(path);
  auto find = [&](const std::string& name, int64_t want) -> const core::Tensor& {
    for (const auto& [n, t] : loaded) {
      if (n == name) {
        if (t.size() != want) {
          throw std::runtime_error("load_basis: " + path + ": " + name + " has " +
                                   std::to_string(t.size()) + " values, expected " +
                                   std::to_string(want));
        }
        return t;
      }
    }
    throw std::runtime_error("load_basis: " + path + ": missing tensor " + name);
  };
  ExpressionBasis basis;
  const core::Tensor& m = find("basis.mean", kLandmarkDim);
  const core::Tensor& c = find("basis.components", kNumCoeffs * kLandmarkDim);
  const core::Tensor& v = find("basis.variance", kNumCoeffs);
  basis.mean.resize(kLandmarkDim);
  for (int i = 0; i < kLandmarkDim; ++i) basis.mean[i] = m.data()[(size_t)i];
  basis.components.resize(kNumCoeffs, kLandmarkDim);
  for (int k = 0; k < kNumCoeffs; ++k) {
    for (int j = 0; j < kLandmarkDim; ++j) {
      basis.components(k, j) = c.data()[(size_t)k * kLandmarkDim + j];
    }
  }
  basis.explained_variance.resize(kNumCoeffs);
  for (int k = 0; k < kNumCoeffs; ++k) basis.explained_variance[k] = v.data()[(size_t)k];
  return basis;
}

}  // namespace rhm::expr
