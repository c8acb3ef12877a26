#pragma once

#include "fer/dataset.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>

namespace fer {

struct AugmentConfig {
  bool enabled = true;
  double rotation_max = 25.0; ///< degrees
  double shift_max = 0.15;    ///< fraction of the 48-pixel source side
  double zoom_max = 0.25;
  double shear_max = 0.1; ///< shear angle in radians, applied along x
  double hflip_prob = 0.5;

  /// Throws ConfigError for negative magnitudes, hflip_prob outside [0,1] or zoom_max >= 1.
  void validate() const;
};

struct AffineParams {
  double angle = 0.0; ///< degrees, counter-clockwise in (col, row) coordinates
  double tx = 0.0;    ///< pixels
  double ty = 0.0;
  double zoom = 1.0;
  double shear = 0.0;
  bool flip = false;

  bool operator==(const AffineParams&) const = default;
};

/// Draws one parameter set from the stream keyed by (seed, epoch, sample index).
AffineParams sample_params(const AugmentConfig& config, std::uint64_t seed, std::uint64_t epoch,
                           std::uint64_t sample_index);

/// Forward map from source to destination pixel coordinates (x = column, y = row) for an
/// image of the given size: center . rotate . shear . zoom . translate . flip . uncenter.
Eigen::Matrix3d affine_matrix(const AffineParams& params, Eigen::Index rows, Eigen::Index cols);

/// Warps by inverse-mapping each destination pixel; nearest-neighbour sampling with
/// edge replication. Throws DegenerateTransformError when zoom <= 0.
GrayImage apply_affine(const GrayImage& image, const AffineParams& params);

struct InputSpec {
  int side = 260;
  double scale = 1.0 / 255.0; ///< multiplier applied after resizing
};

struct ModelInput {
  std::array<Eigen::ArrayXXf, 3> channels;

  Eigen::Index rows() const { return channels[0].rows(); }
  Eigen::Index cols() const { return channels[0].cols(); }
};

/// Bilinear resize with half-pixel centres and clamped borders.
Eigen::ArrayXXd resize_bilinear(const Eigen::ArrayXXd& src, Eigen::Index out_rows, Eigen::Index out_cols);

/// Grayscale -> three identical channels, bilinear resize to spec.side, then scale.
ModelInput preprocess(const GrayImage& image, const InputSpec& spec = {});

} // namespace fer
