#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "koopman_ddpc/koopman_systems.hpp"
#include "koopman_ddpc/linalg_qp.hpp"
#include "koopman_ddpc/predictive_tracking.hpp"

namespace kddpc {

/// Seeded uniform source. Algorithm: std::mt19937_64 (the standard 64-bit
/// Mersenne Twister, default parameters) seeded with the 64-bit seed; each
/// draw maps the top 53 bits to [0, 1) as (x >> 11) * 2^-53 and then affinely
/// onto [low, high). Reproducible in any language with an MT19937-64.
class UniformSource {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64/top53";
  explicit UniformSource(std::uint64_t seed);
  double next(double low, double high);

 private:
  std::mt19937_64 engine_;
};

struct ExcitationData {
  std::vector<Vector> u;  ///< u_1 .. u_n
  std::vector<Vector> z;  ///< z_1 .. z_n (z_k is the state at which u_k is applied)
  std::uint64_t seed = 0;
};

/// Inputs i.i.d. uniform per coordinate; states from simulating the plant.
ExcitationData collect_excitation(const KoopmanSystem& sys, const Vector& z1, int length,
                                  const Vector& input_low, const Vector& input_high,
                                  std::uint64_t seed);

/// Block-Hankel library H_d = [H_L(u_d); H_L(z_d)] with L = T_ini + W.
/// Several trajectories contribute side-by-side column blocks.
class DataLibrary {
 public:
  DataLibrary(const std::vector<ExcitationData>& trajectories, int T_ini, int W);

  int T_ini() const { return T_ini_; }
  int W() const { return W_; }
  int L() const { return T_ini_ + W_; }
  int nu() const { return nu_; }
  int nz() const { return nz_; }
  int columns() const { return static_cast<int>(H_.cols()); }
  const std::vector<int>& source_lengths() const { return lengths_; }

  const Matrix& H() const { return H_; }
  Matrix U_P() const { return H_.topRows(nu_ * T_ini_); }
  Matrix U_F() const { return H_.middleRows(nu_ * T_ini_, nu_ * W_); }
  Matrix Z_P() const { return H_.middleRows(nu_ * L(), nz_ * T_ini_); }
  Matrix Z_F() const { return H_.bottomRows(nz_ * W_); }
  /// Window start states z_j (first state of each column), for excitation checks.
  const std::vector<Vector>& window_starts() const { return starts_; }
  DataLibrary with_column_order(const std::vector<int>& order) const;

 private:
  DataLibrary() = default;
  int T_ini_ = 0;
  int W_ = 0;
  int nu_ = 0;
  int nz_ = 0;
  Matrix H_;
  std::vector<int> lengths_;
  std::vector<Vector> starts_;
};

DataLibrary build_library(const ExcitationData& data, int T_ini, int W);

/// Minimum single-trajectory length giving enough columns for lifted excitation:
/// (n_u L + n_x) + L - 1.
int minimum_excitation_length(int nu, int nx, int T_ini, int W);

struct ExcitationReport {
  int rank = 0;
  int required = 0;
  bool pass = false;
};

/// Rank of [stacked window inputs; psi(window start)]; needs the embedding, so
/// this is a diagnostic, not something a model-free deployment can run.
ExcitationReport check_lifted_excitation(const DataLibrary& lib, const KoopmanSystem& sys,
                                         double rank_tol = 1e-10);

/// Last T_ini applied (z, u) pairs, oldest first.
class InitBuffer {
 public:
  InitBuffer(int T_ini, int nu, int nz);
  void push(const Vector& z, const Vector& u);
  bool full() const { return static_cast<int>(z_.size()) == T_ini_; }
  Vector u_ini() const;
  Vector z_ini() const;
  int T_ini() const { return T_ini_; }

 private:
  int T_ini_;
  int nu_;
  int nz_;
  std::deque<Vector> u_;
  std::deque<Vector> z_;
};

/// Data-driven predictive control: per step
///   min_g  sum_i ||Z_F,i g - r_{t+i-1}||^2_Qz + ||U_F,i g||^2_R
///   s.t.   U_P g = u_ini,  Z_P g = z_ini,
/// solved for the minimum-norm g; returns U_F g.
class DdpcController final : public StepController {
 public:
  DdpcController(DataLibrary lib, const CostWeights& weights);

  std::string name() const override { return "ddpc"; }
  std::vector<Vector> plan(const WindowRequest& req) override;
  void observe(const Vector& z, const Vector& u) override { buffer_.push(z, u); }
  int warmup_steps() const override { return lib_.T_ini(); }

  const Vector& last_g() const { return last_g_; }
  Vector last_predicted_states() const;

 private:
  DataLibrary lib_;
  Matrix Qz_sqrt_;
  Matrix R_sqrt_;
  InitBuffer buffer_;
  std::unique_ptr<LeastSquaresEqSolver> solver_;
  Vector last_g_;
};

enum class LassoMethod { kActiveSet, kAdmm };

struct RegDdpcParams {
  double lambda_g = 2.0;
  double lambda_z = 3e6;
  LassoMethod method = LassoMethod::kActiveSet;
  AdmmSettings admm;          ///< used by kAdmm
  double active_set_tol = 1e-9;
};

/// Picks one library per heading quadrant [0, pi/2), [pi/2, pi), [pi, 3pi/2),
/// [3pi/2, 2pi) after floored wrapping of the heading into [0, 2pi).
class OrientationSwitcher {
 public:
  explicit OrientationSwitcher(int heading_index = 2) : heading_index_(heading_index) {}
  int select(const Vector& z) const;
  static int quadrant(double heading);
  static double wrap(double heading);
  int heading_index() const { return heading_index_; }

 private:
  int heading_index_;
};

/// Regularised DDPC: the past-state match is relaxed by a slack sigma_z with
/// weight lambda_z ||sigma_z||^2 and g carries lambda_g ||g||_1. The slack is
/// eliminated (sigma_z = Z_P g - z_ini), leaving an l1 problem in g with the
/// past-input equality only.
class RegDdpcController final : public StepController {
 public:
  RegDdpcController(std::vector<DataLibrary> libs, const CostWeights& weights,
                    RegDdpcParams params, std::optional<OrientationSwitcher> switcher);

  std::string name() const override { return "reg_ddpc"; }
  std::vector<Vector> plan(const WindowRequest& req) override;
  void observe(const Vector& z, const Vector& u) override { buffer_.push(z, u); }
  int warmup_steps() const override { return libs_.front().T_ini(); }

  int last_library() const { return last_library_; }
  int total_iterations() const { return total_iterations_; }

 private:
  std::vector<DataLibrary> libs_;
  Matrix Qz_sqrt_;
  Matrix R_sqrt_;
  RegDdpcParams params_;
  std::optional<OrientationSwitcher> switcher_;
  InitBuffer buffer_;
  std::vector<std::unique_ptr<LeastSquaresEqSolver>> plain_;  // lambda_g == 0
  std::vector<std::unique_ptr<LassoEqSolver>> admm_;
  std::vector<LassoEqSolver::WarmStart> admm_warm_;
  std::vector<std::unique_ptr<ActiveSetLasso>> active_;
  std::vector<ActiveSetLasso::WarmStart> active_warm_;
  int last_library_ = 0;
  int total_iterations_ = 0;
};

std::unique_ptr<StepController> ddpc_controller(const DataLibrary& lib, const CostWeights& weights);
std::unique_ptr<StepController> reg_ddpc_controller(std::vector<DataLibrary> libs,
                                                    const CostWeights& weights,
                                                    const RegDdpcParams& params,
                                                    std::optional<OrientationSwitcher> switcher);

Matrix psd_sqrt(const Matrix& M);

}  // namespace kddpc
