#include "koopman_ddpc/ddpc_engine.hpp"

#include <cmath>
#include <numbers>

namespace kddpc {

UniformSource::UniformSource(std::uint64_t seed) : engine_(seed) {}

double UniformSource::next(double low, double high) {
  const double unit = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  return low + (high - low) * unit;
}

ExcitationData collect_excitation(const KoopmanSystem& sys, const Vector& z1, int length,
                                  const Vector& input_low, const Vector& input_high,
                                  std::uint64_t seed) {
  require(length >= 1, ErrorCode::kConfig, "excitation length must be >= 1");
  require(z1.size() == sys.nz(), ErrorCode::kDimension, "data initial state size");
  require(input_low.size() == sys.nu() && input_high.size() == sys.nu(), ErrorCode::kDimension,
          "input bounds must have n_u entries");
  require((input_low.array() <= input_high.array()).all(), ErrorCode::kConfig,
          "input_low must not exceed input_high");

  ExcitationData data;
  data.seed = seed;
  UniformSource rng(seed);
  data.u.reserve(static_cast<std::size_t>(length));
  data.z.reserve(static_cast<std::size_t>(length));
  Vector z = z1;
  for (int k = 1; k <= length; ++k) {
    Vector u(sys.nu());
    for (int i = 0; i < sys.nu(); ++i) u(i) = rng.next(input_low(i), input_high(i));
    data.z.push_back(z);
    data.u.push_back(u);
    if (k < length) {
      z = sys.step(z, u);
      if (!z.allFinite())
        fail(ErrorCode::kDivergence, "data collection diverged at step " + std::to_string(k + 1));
    }
  }
  return data;
}

DataLibrary::DataLibrary(const std::vector<ExcitationData>& trajectories, int T_ini, int W)
    : T_ini_(T_ini), W_(W) {
  require(T_ini >= 1, ErrorCode::kConfig, "T_ini must be >= 1");
  require(W >= 1, ErrorCode::kConfig, "W must be >= 1");
  require(!trajectories.empty(), ErrorCode::kConfig, "no data trajectories");
  const int Lw = T_ini + W;
  nu_ = static_cast<int>(trajectories.front().u.front().size());
  nz_ = static_cast<int>(trajectories.front().z.front().size());
  int cols = 0;
  for (const auto& tr : trajectories) {
    const int n = static_cast<int>(tr.u.size());
    require(static_cast<int>(tr.z.size()) == n, ErrorCode::kDimension,
            "input and state data lengths differ");
    require(n >= Lw, ErrorCode::kTooShort,
            "data trajectory has length " + std::to_string(n) + ", need n_d >= L = " +
                std::to_string(Lw));
    lengths_.push_back(n);
    cols += n - Lw + 1;
  }
  H_.resize((nu_ + nz_) * Lw, cols);
  int j = 0;
  for (const auto& tr : trajectories) {
    const int n = static_cast<int>(tr.u.size());
    for (int s = 0; s + Lw <= n; ++s, ++j) {
      for (int k = 0; k < Lw; ++k) {
        const auto& u = tr.u[static_cast<std::size_t>(s + k)];
        const auto& z = tr.z[static_cast<std::size_t>(s + k)];
        require(u.size() == nu_ && z.size() == nz_, ErrorCode::kDimension,
                "inconsistent sample dimensions in data");
        H_.block(k * nu_, j, nu_, 1) = u;
        H_.block(nu_ * Lw + k * nz_, j, nz_, 1) = z;
      }
      starts_.push_back(tr.z[static_cast<std::size_t>(s)]);
    }
  }
  require(all_finite(H_), ErrorCode::kNonFinite, "data library contains non-finite values");
}

DataLibrary DataLibrary::with_column_order(const std::vector<int>& order) const {
  require(static_cast<int>(order.size()) == columns(), ErrorCode::kDimension,
          "column order must list every column");
  DataLibrary out;
  out.T_ini_ = T_ini_;
  out.W_ = W_;
  out.nu_ = nu_;
  out.nz_ = nz_;
  out.lengths_ = lengths_;
  out.H_.resize(H_.rows(), H_.cols());
  for (int j = 0; j < columns(); ++j) {
    const int src = order[static_cast<std::size_t>(j)];
    require(src >= 0 && src < columns(), ErrorCode::kIndexRange, "column index out of range");
    out.H_.col(j) = H_.col(src);
    out.starts_.push_back(starts_[static_cast<std::size_t>(src)]);
  }
  return out;
}

DataLibrary build_library(const ExcitationData& data, int T_ini, int W) {
  return DataLibrary({data}, T_ini, W);
}

int minimum_excitation_length(int nu, int nx, int T_ini, int W) {
  const int Lw = T_ini + W;
  return nu * Lw + nx + Lw - 1;
}

ExcitationReport check_lifted_excitation(const DataLibrary& lib, const KoopmanSystem& sys,
                                         double rank_tol) {
  (void)sys.lifted();  // throws kUnsupported without an embedding
  const int nx = sys.nx();
  const int in_rows = lib.nu() * lib.L();
  Matrix M(in_rows + nx, lib.columns());
  M.topRows(in_rows) = lib.H().topRows(in_rows);
  for (int j = 0; j < lib.columns(); ++j)
    M.block(in_rows, j, nx, 1) = sys.lift(lib.window_starts()[static_cast<std::size_t>(j)]);

  ExcitationReport rep;
  rep.required = in_rows + nx;
  if (M.cols() > 0) {
    Eigen::JacobiSVD<Matrix> svd(M);
    const Vector& s = svd.singularValues();
    const double smax = s.size() > 0 ? s(0) : 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (smax > 0.0 && s(i) > rank_tol * smax) ++rep.rank;
  }
  rep.pass = rep.rank == rep.required;
  return rep;
}

InitBuffer::InitBuffer(int T_ini, int nu, int nz) : T_ini_(T_ini), nu_(nu), nz_(nz) {
  require(T_ini >= 1, ErrorCode::kConfig, "T_ini must be >= 1");
}

void InitBuffer::push(const Vector& z, const Vector& u) {
  require(z.size() == nz_ && u.size() == nu_, ErrorCode::kDimension, "history sample size");
  z_.push_back(z);
  u_.push_back(u);
  if (static_cast<int>(z_.size()) > T_ini_) {
    z_.pop_front();
    u_.pop_front();
  }
}

Vector InitBuffer::u_ini() const {
  require(full(), ErrorCode::kTooShort, "history buffer not yet filled");
  Vector out(nu_ * T_ini_);
  for (int k = 0; k < T_ini_; ++k) out.segment(k * nu_, nu_) = u_[static_cast<std::size_t>(k)];
  return out;
}

Vector InitBuffer::z_ini() const {
  require(full(), ErrorCode::kTooShort, "history buffer not yet filled");
  Vector out(nz_ * T_ini_);
  for (int k = 0; k < T_ini_; ++k) out.segment(k * nz_, nz_) = z_[static_cast<std::size_t>(k)];
  return out;
}

Matrix psd_sqrt(const Matrix& M) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (M + M.transpose()));
  const Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

namespace {

Matrix block_repeat(const Matrix& B, int times) {
  Matrix out = Matrix::Zero(B.rows() * times, B.cols() * times);
  for (int k = 0; k < times; ++k) out.block(k * B.rows(), k * B.cols(), B.rows(), B.cols()) = B;
  return out;
}

Vector stack_targets(std::span<const Vector> targets, int nz) {
  Vector out(nz * static_cast<int>(targets.size()));
  for (std::size_t k = 0; k < targets.size(); ++k) {
    require(targets[k].size() == nz, ErrorCode::kDimension, "target dimension");
    out.segment(static_cast<int>(k) * nz, nz) = targets[k];
  }
  return out;
}

std::vector<Vector> split_controls(const Vector& stacked, int nu) {
  std::vector<Vector> out;
  for (int k = 0; k < stacked.size() / nu; ++k) out.push_back(stacked.segment(k * nu, nu));
  return out;
}

// Objective factor sqrt(2) [Qz^1/2 Z_F; R^1/2 U_F] (rows stacked block-diagonally).
Matrix tracking_factor(const DataLibrary& lib, const Matrix& Qs, const Matrix& Rs) {
  const int W = lib.W();
  Matrix F(lib.nz() * W + lib.nu() * W, lib.columns());
  F.topRows(lib.nz() * W) = block_repeat(Qs, W) * lib.Z_F();
  F.bottomRows(lib.nu() * W) = block_repeat(Rs, W) * lib.U_F();
  return std::sqrt(2.0) * F;
}

}  // namespace

DdpcController::DdpcController(DataLibrary lib, const CostWeights& weights)
    : lib_(std::move(lib)),
      Qz_sqrt_(psd_sqrt(weights.Qz())),
      R_sqrt_(psd_sqrt(weights.R())),
      buffer_(lib_.T_ini(), lib_.nu(), lib_.nz()) {
  require(weights.Qz().rows() == lib_.nz() && weights.R().rows() == lib_.nu(),
          ErrorCode::kDimension, "cost weights do not match library dimensions");
  Matrix Aeq(lib_.nu() * lib_.T_ini() + lib_.nz() * lib_.T_ini(), lib_.columns());
  Aeq << lib_.U_P(), lib_.Z_P();
  solver_ = std::make_unique<LeastSquaresEqSolver>(tracking_factor(lib_, Qz_sqrt_, R_sqrt_), Aeq);
}

std::vector<Vector> DdpcController::plan(const WindowRequest& req) {
  require(static_cast<int>(req.targets.size()) == lib_.W(), ErrorCode::kDimension,
          "window length differs from library W");
  const int W = lib_.W();
  Vector d = Vector::Zero(lib_.nz() * W + lib_.nu() * W);
  d.head(lib_.nz() * W) =
      std::sqrt(2.0) * block_repeat(Qz_sqrt_, W) * stack_targets(req.targets, lib_.nz());
  Vector b(lib_.nu() * lib_.T_ini() + lib_.nz() * lib_.T_ini());
  b << buffer_.u_ini(), buffer_.z_ini();
  const SolveReport rep = solver_->solve(d, b);
  last_g_ = rep.x;
  return split_controls(lib_.U_F() * rep.x, lib_.nu());
}

Vector DdpcController::last_predicted_states() const {
  require(last_g_.size() == lib_.columns(), ErrorCode::kIndexRange, "no solve yet");
  return lib_.Z_F() * last_g_;
}

double OrientationSwitcher::wrap(double heading) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = heading - two_pi * std::floor(heading / two_pi);
  if (w >= two_pi) w -= two_pi;
  return w;
}

int OrientationSwitcher::quadrant(double heading) {
  const int q = static_cast<int>(std::floor(wrap(heading) / (0.5 * std::numbers::pi)));
  return q < 0 ? 0 : (q > 3 ? 3 : q);
}

int OrientationSwitcher::select(const Vector& z) const {
  require(heading_index_ >= 0 && heading_index_ < z.size(), ErrorCode::kIndexRange,
          "heading index outside state");
  return quadrant(z(heading_index_));
}

RegDdpcController::RegDdpcController(std::vector<DataLibrary> libs, const CostWeights& weights,
                                     RegDdpcParams params,
                                     std::optional<OrientationSwitcher> switcher)
    : libs_(std::move(libs)),
      Qz_sqrt_(psd_sqrt(weights.Qz())),
      R_sqrt_(psd_sqrt(weights.R())),
      params_(params),
      switcher_(switcher),
      buffer_(libs_.empty() ? 1 : libs_.front().T_ini(), libs_.empty() ? 1 : libs_.front().nu(),
              libs_.empty() ? 1 : libs_.front().nz()) {
  require(!libs_.empty(), ErrorCode::kConfig, "no data library");
  require(params_.lambda_g >= 0.0 && params_.lambda_z >= 0.0, ErrorCode::kConfig,
          "regularisation weights must be nonnegative");
  if (switcher_)
    require(libs_.size() == 4, ErrorCode::kConfig, "orientation switching needs exactly 4 libraries");
  else
    require(libs_.size() == 1, ErrorCode::kConfig, "several libraries need a switcher");
  const auto& first = libs_.front();
  require(weights.Qz().rows() == first.nz() && weights.R().rows() == first.nu(),
          ErrorCode::kDimension, "cost weights do not match library dimensions");
  for (const auto& lib : libs_) {
    require(lib.T_ini() == first.T_ini() && lib.W() == first.W() && lib.nu() == first.nu() &&
                lib.nz() == first.nz(),
            ErrorCode::kMismatch, "libraries differ in T_ini, W or dimensions");
    const Matrix Ft = tracking_factor(lib, Qz_sqrt_, R_sqrt_);
    Matrix F(Ft.rows() + lib.nz() * lib.T_ini(), lib.columns());
    F << Ft, std::sqrt(2.0 * params_.lambda_z) * lib.Z_P();
    if (params_.lambda_g == 0.0) {
      plain_.push_back(std::make_unique<LeastSquaresEqSolver>(F, lib.U_P()));
    } else if (params_.method == LassoMethod::kAdmm) {
      admm_.push_back(std::make_unique<LassoEqSolver>(F, lib.U_P(), params_.admm));
      admm_warm_.emplace_back();
    } else {
      active_.push_back(std::make_unique<ActiveSetLasso>(F, lib.U_P(), params_.active_set_tol));
      active_warm_.emplace_back();
    }
  }
}

std::vector<Vector> RegDdpcController::plan(const WindowRequest& req) {
  const auto& lib0 = libs_.front();
  const int W = lib0.W();
  const int nz = lib0.nz();
  const int Ti = lib0.T_ini();
  require(static_cast<int>(req.targets.size()) == W, ErrorCode::kDimension,
          "window length differs from library W");
  require(req.z != nullptr, ErrorCode::kDimension, "missing current state");

  Vector z_ini = buffer_.z_ini();
  Vector r = stack_targets(req.targets, nz);
  std::size_t idx = 0;
  if (switcher_) {
    idx = static_cast<std::size_t>(switcher_->select(*req.z));
    // Shift the heading by a whole number of turns so the current heading lies
    // in [0, 2pi), the range the libraries were recorded in. Tracking errors
    // are unchanged because targets are shifted alike.
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const int h = switcher_->heading_index();
    const double shift = two_pi * std::floor((*req.z)(h) / two_pi);
    for (int k = 0; k < Ti; ++k) z_ini(k * nz + h) -= shift;
    for (int k = 0; k < W; ++k) r(k * nz + h) -= shift;
  }
  last_library_ = static_cast<int>(idx);
  const auto& lib = libs_[idx];

  const int rows = (nz + lib.nu()) * W + nz * Ti;
  Vector d = Vector::Zero(rows);
  d.head(nz * W) = std::sqrt(2.0) * block_repeat(Qz_sqrt_, W) * r;
  d.tail(nz * Ti) = std::sqrt(2.0 * params_.lambda_z) * z_ini;
  const SolveReport rep =
      params_.lambda_g == 0.0 ? plain_[idx]->solve(d, buffer_.u_ini())
      : params_.method == LassoMethod::kAdmm
          ? admm_[idx]->solve(d, buffer_.u_ini(), params_.lambda_g, &admm_warm_[idx])
          : active_[idx]->solve(d, buffer_.u_ini(), params_.lambda_g, &active_warm_[idx]);
  total_iterations_ += rep.iterations;
  if (!rep.converged)
    fail(ErrorCode::kNoConvergence,
         "regularised DDPC solver did not converge (primal residual " +
             std::to_string(rep.primal_residual) + ", dual residual " +
             std::to_string(rep.dual_residual) + ")");
  return split_controls(lib.U_F() * rep.x, lib.nu());
}

std::unique_ptr<StepController> ddpc_controller(const DataLibrary& lib, const CostWeights& weights) {
  return std::make_unique<DdpcController>(lib, weights);
}

std::unique_ptr<StepController> reg_ddpc_controller(std::vector<DataLibrary> libs,
                                                    const CostWeights& weights,
                                                    const RegDdpcParams& params,
                                                    std::optional<OrientationSwitcher> switcher) {
  return std::make_unique<RegDdpcController>(std::move(libs), weights, params, switcher);
}

}  // namespace kddpc
