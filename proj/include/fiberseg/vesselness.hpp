#pragma once

#include <array>
#include <string>
#include <vector>

#include "fiberseg/volume.hpp"

namespace fiberseg {

struct VesselnessParams {
  double alpha = 0.5;
  double beta = 0.5;
  double c = 1.0;
  /// When set, c = 0.5 * max over the volume of the Frobenius norm S at each scale.
  bool c_auto = true;

  void validate() const;
};

/// Gaussian scales in voxels, strictly ascending.
struct ScaleSet {
  std::vector<double> sigmas;

  void validate() const;
};

/// {0.6, 0.9, 1.2} x (fiber radius / voxel size).
ScaleSet default_scales(double fiber_radius_um, double voxel_size_um);

enum class Polarity { bright_on_dark, dark_on_bright };

/// Six gamma-normalized (x sigma^2) second derivatives, x-fastest layout.
struct HessianField {
  GridSpec grid;
  std::vector<double> xx, yy, zz, xy, xz, yz;
};

/// Per-voxel Hessian eigenvalues, |l1| <= |l2| <= |l3|.
struct EigenField {
  GridSpec grid;
  std::vector<std::array<float, 3>> values;
};

/// Eigenvalues of the symmetric matrix [[a00,a01,a02],[a01,a11,a12],[a02,a12,a22]]
/// (closed-form trigonometric solution), descending order.
std::array<double, 3> symmetric_eigenvalues(double a00, double a11, double a22, double a01, double a02,
                                            double a12);

/// Sort by |lambda| ascending, ties by signed value ascending.
std::array<double, 3> order_by_magnitude(std::array<double, 3> l);

/// Unit eigenvector of a symmetric 3x3 matrix for the given eigenvalue.
std::array<double, 3> symmetric_eigenvector(double a00, double a11, double a22, double a01, double a02,
                                            double a12, double eigenvalue);

HessianField hessian_components(const Volume& v, double sigma);
EigenField hessian_at_scale(const Volume& v, double sigma);

/// Vesselness of a single eigenvalue triple (already magnitude-ordered).
double frangi_voxel(double l1, double l2, double l3, double alpha, double beta, double c);

Volume frangi_response(const EigenField& e, const VesselnessParams& p);

Volume frangi_multiscale(const Volume& v, const ScaleSet& scales, const VesselnessParams& p,
                         Polarity polarity = Polarity::bright_on_dark);

struct BinarizeMethod {
  enum class Kind { fixed, otsu } kind = Kind::otsu;
  double threshold = 0.5;

  static BinarizeMethod fixed(double t) { return {Kind::fixed, t}; }
  static BinarizeMethod otsu() { return {Kind::otsu, 0.0}; }
};

/// 256-bin Otsu threshold over [min, max]; throws on a constant volume.
double otsu_threshold(const Volume& v);

struct Binarized {
  LabelVolume mask;  ///< values in {0, 1}
  double threshold = 0.0;
};

Binarized binarize(const Volume& v, BinarizeMethod method);

struct Components {
  LabelVolume labels;
  std::uint32_t count = 0;
};

/// 26-connected components labeled 1..K in linear-scan order of first voxel.
Components connected_components(const LabelVolume& binary);

struct OrientationField {
  Volume ox, oy, oz;
  MaskVolume valid;
};

/// Axis = eigenvector of the smallest structure-tensor eigenvalue, gradient at
/// sigma_g, tensor smoothed at rho (rho == 0: no smoothing); canonical sign.
OrientationField structure_tensor_orientation(const Volume& v, double sigma_g, double rho);

/// Writes <stem>.ox/.oy/.oz (f32) and <stem>.valid (u8).
void write_orientation(const OrientationField& o, const std::string& stem);

namespace reference {

/// Serial Hessian and eigensolve, one voxel at a time.
EigenField hessian_at_scale(const Volume& v, double sigma);

Volume frangi_multiscale(const Volume& v, const ScaleSet& scales, const VesselnessParams& p);

}  // namespace reference

}  // namespace fiberseg
