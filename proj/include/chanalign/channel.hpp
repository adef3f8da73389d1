#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "chanalign/raytrace.hpp"

namespace channel {

using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

// ULA + OFDM front-end description. Subcarriers are evenly spaced across
// the bandwidth, centered on the carrier; antenna spacing defaults to half
// a carrier wavelength.
struct ArrayConfig {
  int n_t = 32;
  int n_c = 64;
  double f_c = 28e9;
  double bandwidth = 46.08e6;
  double c = 299792458.0;
  double d = 0;                    // meters; 0 means "use c/(2 f_c)"
  std::vector<double> subcarriers;

  static ArrayConfig make(int n_t = 32, int n_c = 64, double f_c = 28e9,
                          double bandwidth = 46.08e6);
  double delta_f() const { return bandwidth / n_c; }
};

struct CsiMatrix {
  CMat h;  // n_t x n_c
};

// Real/imaginary planes stacked to 2 x n_t x n_c, each plane row-major.
// When norm_applied, the tensor has unit Frobenius norm and `norm` holds
// the original scale for de-normalization.
struct RealCsiTensor {
  int n_t = 0, n_c = 0;
  std::vector<double> t;
  double norm = 1.0;
  bool norm_applied = false;
};

struct BeamCodebook {
  CMat w;  // n_t x n_t, unit-norm DFT columns
};

struct PathEstimateEntry {
  double alpha = 0;
  double theta = 0;
  double tau = 0;
};

struct PathEstimate {
  std::vector<PathEstimateEntry> entries;
  double cos_theta_resolution = 0;  // 2/n_t
  double tau_resolution = 0;        // 1/(n_c * delta_f)
};

// a(theta) at frequency f: element k = exp(-j beta k cos theta),
// beta = 2 pi d f / c.
CVec steering_vector(double theta, const ArrayConfig& cfg, double f);

// h(f) = sum_i alpha_i exp(-j 2 pi f tau_i) a(theta_i).
CVec synthesize_h(const raytrace::PathSet& paths, const ArrayConfig& cfg, double f);

// Column i = synthesize_h at subcarrier f_i.
CsiMatrix synthesize_csi(const raytrace::PathSet& paths, const ArrayConfig& cfg);

RealCsiTensor normalize_csi(const CsiMatrix& h);
CsiMatrix denormalize_csi(const RealCsiTensor& t);
CsiMatrix to_complex(const RealCsiTensor& t);  // without undoing the norm

BeamCodebook dft_codebook(const ArrayConfig& cfg);

// argmax over beams of the wideband beamforming power
// sum_i |w^H h(f_i)|^2; ties broken by lowest index.
int best_beam(const CsiMatrix& h, const BeamCodebook& cb);

// Matched-filter search over the DFT angle-delay grid
// (cos theta step 2/n_t, delay step 1/(n_c delta_f)); returns the k_paths
// strongest cells.
PathEstimate estimate_path_params(const CsiMatrix& h, const ArrayConfig& cfg, int k_paths);

// 10 log10(|H_hat - H|_F^2 / |H|_F^2), clamped below at -300 dB.
double nmse_db(const CsiMatrix& h_hat, const CsiMatrix& h);

}  // namespace channel
