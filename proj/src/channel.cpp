#include "chanalign/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace channel {

namespace {
constexpr std::complex<double> kJ{0.0, 1.0};
}

ArrayConfig ArrayConfig::make(int n_t, int n_c, double f_c, double bandwidth) {
  if (n_t < 1 || n_c < 1) throw std::invalid_argument("ArrayConfig: need n_t, n_c >= 1");
  ArrayConfig cfg;
  cfg.n_t = n_t;
  cfg.n_c = n_c;
  cfg.f_c = f_c;
  cfg.bandwidth = bandwidth;
  cfg.d = cfg.c / (2.0 * f_c);
  double df = cfg.delta_f();
  cfg.subcarriers.resize(static_cast<size_t>(n_c));
  for (int i = 0; i < n_c; i++)
    cfg.subcarriers[static_cast<size_t>(i)] = f_c + (i - (n_c - 1) / 2.0) * df;
  return cfg;
}

CVec steering_vector(double theta, const ArrayConfig& cfg, double f) {
  if (cfg.n_t < 1) throw std::invalid_argument("steering_vector: need n_t >= 1");
  double beta = 2.0 * M_PI * cfg.d * f / cfg.c;
  CVec a(cfg.n_t);
  double ct = std::cos(theta);
  for (int k = 0; k < cfg.n_t; k++) a[k] = std::exp(-kJ * (beta * k * ct));
  return a;
}

CVec synthesize_h(const raytrace::PathSet& paths, const ArrayConfig& cfg, double f) {
  CVec h = CVec::Zero(cfg.n_t);
  for (const raytrace::Path& p : paths.paths)
    h += p.alpha * std::exp(-kJ * (2.0 * M_PI * f * p.tau)) * steering_vector(p.theta, cfg, f);
  return h;
}

CsiMatrix synthesize_csi(const raytrace::PathSet& paths, const ArrayConfig& cfg) {
  CsiMatrix m;
  m.h.resize(cfg.n_t, cfg.n_c);
  for (int i = 0; i < cfg.n_c; i++)
    m.h.col(i) = synthesize_h(paths, cfg, cfg.subcarriers[static_cast<size_t>(i)]);
  return m;
}

RealCsiTensor normalize_csi(const CsiMatrix& h) {
  double fro = h.h.norm();
  if (fro <= 0.0) throw std::invalid_argument("normalize_csi: zero matrix");
  RealCsiTensor t;
  t.n_t = static_cast<int>(h.h.rows());
  t.n_c = static_cast<int>(h.h.cols());
  t.t.resize(static_cast<size_t>(2) * t.n_t * t.n_c);
  size_t plane = static_cast<size_t>(t.n_t) * t.n_c;
  for (int r = 0; r < t.n_t; r++)
    for (int c = 0; c < t.n_c; c++) {
      t.t[static_cast<size_t>(r) * t.n_c + c] = h.h(r, c).real() / fro;
      t.t[plane + static_cast<size_t>(r) * t.n_c + c] = h.h(r, c).imag() / fro;
    }
  t.norm = fro;
  t.norm_applied = true;
  return t;
}

CsiMatrix to_complex(const RealCsiTensor& t) {
  CsiMatrix m;
  m.h.resize(t.n_t, t.n_c);
  size_t plane = static_cast<size_t>(t.n_t) * t.n_c;
  for (int r = 0; r < t.n_t; r++)
    for (int c = 0; c < t.n_c; c++)
      m.h(r, c) = {t.t[static_cast<size_t>(r) * t.n_c + c],
                   t.t[plane + static_cast<size_t>(r) * t.n_c + c]};
  return m;
}

CsiMatrix denormalize_csi(const RealCsiTensor& t) {
  CsiMatrix m = to_complex(t);
  if (t.norm_applied) m.h *= t.norm;
  return m;
}

BeamCodebook dft_codebook(const ArrayConfig& cfg) {
  if (cfg.n_t < 1) throw std::invalid_argument("dft_codebook: need n_t >= 1");
  BeamCodebook cb;
  cb.w.resize(cfg.n_t, cfg.n_t);
  double norm = 1.0 / std::sqrt(static_cast<double>(cfg.n_t));
  for (int n = 0; n < cfg.n_t; n++)
    for (int k = 0; k < cfg.n_t; k++)
      cb.w(n, k) = norm * std::exp(-kJ * (2.0 * M_PI * n * k / cfg.n_t));
  return cb;
}

int best_beam(const CsiMatrix& h, const BeamCodebook& cb) {
  if (h.h.rows() != cb.w.rows()) throw std::invalid_argument("best_beam: shape mismatch");
  int best = 0;
  double best_power = -1.0;
  for (int k = 0; k < cb.w.cols(); k++) {
    double power = (cb.w.col(k).adjoint() * h.h).squaredNorm();
    if (power > best_power) {
      best_power = power;
      best = k;
    }
  }
  return best;
}

PathEstimate estimate_path_params(const CsiMatrix& h, const ArrayConfig& cfg, int k_paths) {
  if (k_paths < 1) throw std::invalid_argument("estimate_path_params: k_paths must be >= 1");
  if (k_paths > cfg.n_t * cfg.n_c)
    throw std::invalid_argument("estimate_path_params: k_paths exceeds grid size");

  PathEstimate est;
  est.cos_theta_resolution = 2.0 / cfg.n_t;
  est.tau_resolution = 1.0 / (cfg.n_c * cfg.delta_f());

  // Correlate with the exact synthesis atoms on the DFT grid; an on-grid
  // path projects to amplitude alpha in its own cell.
  Eigen::MatrixXd mag(cfg.n_t, cfg.n_c);
  std::vector<double> u_grid(static_cast<size_t>(cfg.n_t));
  for (int m = 0; m < cfg.n_t; m++) {
    double u = 2.0 * m / cfg.n_t;
    u_grid[static_cast<size_t>(m)] = u <= 1.0 ? u : u - 2.0;
  }
  for (int m = 0; m < cfg.n_t; m++) {
    double theta = std::acos(u_grid[static_cast<size_t>(m)]);
    // s_i = a(theta, f_i)^H h(f_i); the delay phase factors out per cell.
    CVec s(cfg.n_c);
    for (int i = 0; i < cfg.n_c; i++)
      s[i] = steering_vector(theta, cfg, cfg.subcarriers[static_cast<size_t>(i)]).dot(h.h.col(i));
    for (int n = 0; n < cfg.n_c; n++) {
      double tau = n * est.tau_resolution;
      std::complex<double> acc = 0.0;
      for (int i = 0; i < cfg.n_c; i++) {
        double f = cfg.subcarriers[static_cast<size_t>(i)];
        acc += std::exp(kJ * (2.0 * M_PI * f * tau)) * s[i];
      }
      mag(m, n) = std::abs(acc) / (cfg.n_t * cfg.n_c);
    }
  }

  std::vector<int> order(static_cast<size_t>(cfg.n_t) * cfg.n_c);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return mag(a % cfg.n_t, a / cfg.n_t) > mag(b % cfg.n_t, b / cfg.n_t);
  });
  for (int i = 0; i < k_paths; i++) {
    int m = order[static_cast<size_t>(i)] % cfg.n_t;
    int n = order[static_cast<size_t>(i)] / cfg.n_t;
    PathEstimateEntry e;
    e.alpha = mag(m, n);
    e.theta = std::acos(u_grid[static_cast<size_t>(m)]);
    e.tau = n * est.tau_resolution;
    est.entries.push_back(e);
  }
  return est;
}

double nmse_db(const CsiMatrix& h_hat, const CsiMatrix& h) {
  if (h_hat.h.rows() != h.h.rows() || h_hat.h.cols() != h.h.cols())
    throw std::invalid_argument("nmse_db: shape mismatch");
  double ref = h.h.squaredNorm();
  if (ref <= 0.0) throw std::invalid_argument("nmse_db: zero reference");
  double err = (h_hat.h - h.h).squaredNorm();
  if (err <= 0.0) return -300.0;
  return std::max(-300.0, 10.0 * std::log10(err / ref));
}

}  // namespace channel
