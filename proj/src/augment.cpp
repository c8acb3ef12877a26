#include "fer/augment.hpp"

#include "fer/errors.hpp"
#include "fer/random.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fer {

namespace {
constexpr std::uint64_t kAugmentStream = 0xA5A5'0001;
}

void AugmentConfig::validate() const {
  if (rotation_max < 0 || shift_max < 0 || zoom_max < 0 || shear_max < 0)
    throw ConfigError("augmentation magnitudes must be non-negative");
  if (zoom_max >= 1.0) throw ConfigError("zoom_max must be below 1 so the zoom factor stays positive");
  if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0)) throw ConfigError("hflip_prob must lie in [0, 1]");
}

AffineParams sample_params(const AugmentConfig& config, std::uint64_t seed, std::uint64_t epoch,
                           std::uint64_t sample_index) {
  KeyedRng rng{kAugmentStream, seed, epoch, sample_index};
  const double shift_px = config.shift_max * kImageSide;
  AffineParams p;
  p.angle = rng.uniform(-config.rotation_max, config.rotation_max);
  p.tx = rng.uniform(-shift_px, shift_px);
  p.ty = rng.uniform(-shift_px, shift_px);
  p.zoom = rng.uniform(1.0 - config.zoom_max, 1.0 + config.zoom_max);
  p.shear = rng.uniform(-config.shear_max, config.shear_max);
  p.flip = rng.bernoulli(config.hflip_prob);
  return p;
}

Eigen::Matrix3d affine_matrix(const AffineParams& p, Eigen::Index rows, Eigen::Index cols) {
  const double cx = 0.5 * static_cast<double>(cols - 1);
  const double cy = 0.5 * static_cast<double>(rows - 1);

  Eigen::Matrix3d center = Eigen::Matrix3d::Identity();
  center(0, 2) = cx;
  center(1, 2) = cy;
  Eigen::Matrix3d uncenter = Eigen::Matrix3d::Identity();
  uncenter(0, 2) = -cx;
  uncenter(1, 2) = -cy;

  const double theta = p.angle * std::numbers::pi / 180.0;
  Eigen::Matrix3d rotate = Eigen::Matrix3d::Identity();
  rotate(0, 0) = std::cos(theta);
  rotate(0, 1) = -std::sin(theta);
  rotate(1, 0) = std::sin(theta);
  rotate(1, 1) = std::cos(theta);

  Eigen::Matrix3d shear = Eigen::Matrix3d::Identity();
  shear(0, 1) = std::tan(p.shear);

  Eigen::Matrix3d zoom = Eigen::Matrix3d::Identity();
  zoom(0, 0) = p.zoom;
  zoom(1, 1) = p.zoom;

  Eigen::Matrix3d translate = Eigen::Matrix3d::Identity();
  translate(0, 2) = p.tx;
  translate(1, 2) = p.ty;

  Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
  if (p.flip) flip(0, 0) = -1.0;

  return center * rotate * shear * zoom * translate * flip * uncenter;
}

GrayImage apply_affine(const GrayImage& image, const AffineParams& params) {
  if (!(params.zoom > 0.0)) throw DegenerateTransformError("zoom must be positive");
  const Eigen::Index rows = image.rows();
  const Eigen::Index cols = image.cols();
  const Eigen::Matrix3d inverse = affine_matrix(params, rows, cols).inverse();

  GrayImage out(rows, cols);
  for (Eigen::Index y = 0; y < rows; ++y) {
    for (Eigen::Index x = 0; x < cols; ++x) {
      const Eigen::Vector3d src = inverse * Eigen::Vector3d(static_cast<double>(x), static_cast<double>(y), 1.0);
      const auto sx = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(src.x() + 0.5)), 0, cols - 1);
      const auto sy = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(src.y() + 0.5)), 0, rows - 1);
      out(y, x) = image(sy, sx);
    }
  }
  return out;
}

Eigen::ArrayXXd resize_bilinear(const Eigen::ArrayXXd& src, Eigen::Index out_rows, Eigen::Index out_cols) {
  const Eigen::Index in_rows = src.rows();
  const Eigen::Index in_cols = src.cols();

  // Per-axis source taps: lower index, upper index, upper weight.
  struct Tap {
    Eigen::Index lo, hi;
    double w;
  };
  auto taps = [](Eigen::Index in, Eigen::Index out) {
    std::vector<Tap> t(static_cast<std::size_t>(out));
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (Eigen::Index i = 0; i < out; ++i) {
      const double s = std::clamp((static_cast<double>(i) + 0.5) * ratio - 0.5, 0.0, static_cast<double>(in - 1));
      const auto lo = static_cast<Eigen::Index>(std::floor(s));
      const auto hi = std::min(lo + 1, in - 1);
      t[static_cast<std::size_t>(i)] = {lo, hi, s - static_cast<double>(lo)};
    }
    return t;
  };
  const auto ty = taps(in_rows, out_rows);
  const auto tx = taps(in_cols, out_cols);

  Eigen::ArrayXXd out(out_rows, out_cols);
  for (Eigen::Index y = 0; y < out_rows; ++y) {
    const auto& a = ty[static_cast<std::size_t>(y)];
    for (Eigen::Index x = 0; x < out_cols; ++x) {
      const auto& b = tx[static_cast<std::size_t>(x)];
      const double top = src(a.lo, b.lo) + b.w * (src(a.lo, b.hi) - src(a.lo, b.lo));
      const double bottom = src(a.hi, b.lo) + b.w * (src(a.hi, b.hi) - src(a.hi, b.lo));
      out(y, x) = top + a.w * (bottom - top);
    }
  }
  return out;
}

ModelInput preprocess(const GrayImage& image, const InputSpec& spec) {
  const Eigen::ArrayXXd gray = image.cast<double>();
  const Eigen::ArrayXXf resized = (resize_bilinear(gray, spec.side, spec.side) * spec.scale).cast<float>();
  ModelInput input;
  input.channels.fill(resized);
  return input;
}

} // namespace fer
