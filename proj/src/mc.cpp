#include "stovar/mc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <thread>

namespace stovar::mc {

void McConfig::validate() const {
  require(N >= 1, "McConfig: N must be >= 1");
  require(t_f > 0.0, "McConfig: t_f must be > 0");
  require(dt > 0.0, "McConfig: dt must be > 0");
  require(dt == h, "McConfig: dt and h must be equal (shared step grid)");
  require(newton_tol > 0.0, "McConfig: newton_tol must be > 0");
  require(newton_max_iter >= 1, "McConfig: newton_max_iter must be >= 1");
  require(!checkpoints.empty(), "McConfig: checkpoint list must not be empty");
  for (size_t i = 0; i < checkpoints.size(); ++i) {
    require(checkpoints[i] >= 0.0 && checkpoints[i] <= t_f + 1e-9 * t_f,
            "McConfig: checkpoints must lie in [0, t_f]");
    require(i == 0 || checkpoints[i] > checkpoints[i - 1],
            "McConfig: checkpoints must be strictly ascending");
  }
  require(std::abs(checkpoints.back() - t_f) <= 1e-9 * t_f,
          "McConfig: the last checkpoint must be t_f");
}

std::vector<double> default_checkpoints(double t_f, double every) {
  require(t_f > 0.0 && every > 0.0, "default_checkpoints: arguments must be > 0");
  std::vector<double> out;
  for (double t = 0.0; t < t_f - 1e-9 * t_f; t += every) out.push_back(t);
  out.push_back(t_f);
  return out;
}

double heuristic_tf(const sde::NoiseBank& noise) {
  if (noise.processes.empty())
    throw EmptyInput("heuristic final time needs at least one noise process");
  double min_alpha = std::numeric_limits<double>::infinity();
  for (const sde::NoiseProcess& pr : noise.processes) {
    const double a = std::holds_alternative<sde::OuSpec>(pr.spec)
                         ? std::get<sde::OuSpec>(pr.spec).alpha
                         : std::get<sde::WeibullSpec>(pr.spec).alpha_w;
    min_alpha = std::min(min_alpha, a);
  }
  return 2.0 / min_alpha;
}

namespace {

McConfig with_default_checkpoints(const McConfig& cfg) {
  McConfig out = cfg;
  if (out.checkpoints.empty()) out.checkpoints = default_checkpoints(out.t_f);
  out.validate();
  return out;
}

std::vector<long> checkpoint_steps(const McConfig& cfg) {
  std::vector<long> steps;
  steps.reserve(cfg.checkpoints.size());
  for (double t : cfg.checkpoints) steps.push_back(std::lround(t / cfg.dt));
  return steps;
}

}  // namespace

Trajectory integrate_sdae(const grid::SystemModel& model, const grid::Equilibrium& eq,
                          int realization_index, const McConfig& raw_cfg) {
  const McConfig cfg = with_default_checkpoints(raw_cfg);
  require(realization_index >= 0, "integrate_sdae: realization index must be >= 0");
  require(eq.x.size() == model.n && eq.y.size() == model.m && eq.eta.size() == model.p,
          "integrate_sdae: equilibrium does not match the model layout");

  const long steps = std::lround(cfg.t_f / cfg.dt);
  require(std::abs(steps * cfg.dt - cfg.t_f) <= 1e-9 * cfg.t_f,
          "integrate_sdae: t_f must be an integer multiple of dt");

  const int n = model.n, m = model.m, p = model.p;
  const std::vector<long> cp_steps = checkpoint_steps(cfg);
  const int n_cp = static_cast<int>(cp_steps.size());

  Trajectory traj;
  traj.times = cfg.checkpoints;
  traj.x.resize(n_cp, n);
  traj.y.resize(n_cp, m);
  traj.eta.resize(n_cp, p);

  // Pre-drawn Wiener increments, one independent stream per process.
  std::vector<Vector> dW(p);
  for (int j = 0; j < p; ++j)
    dW[j] = sde::wiener_increments(model.noise.root_seed, realization_index, j, steps,
                                   cfg.h);

  Vector x0 = eq.x, y0 = eq.y, eta = eq.eta;
  Vector x1 = x0, y1 = y0, eta1 = eta;
  Vector f0(n), f1(n), gres(m), R(n + m);
  Matrix fx, fy, gx, gy;
  Matrix J(n + m, n + m);
  const Matrix identity = Matrix::Identity(n, n);
  Eigen::PartialPivLU<Matrix> lu;

  const bool has_dae = n + m > 0;
  auto factor_at = [&](const Vector& xa, const Vector& ya, const Vector& ea) {
    grid::analytic_fg_jacobians(model, xa, ya, ea, fx, fy, gx, gy);
    J.topLeftCorner(n, n) = identity - 0.5 * cfg.dt * fx;
    J.topRightCorner(n, m) = -0.5 * cfg.dt * fy;
    J.bottomLeftCorner(m, n) = gx;
    J.bottomRightCorner(m, m) = gy;
    lu.compute(J);
  };
  if (has_dae) factor_at(x0, y0, eta);

  int next_cp = 0;
  auto record = [&](long step) {
    while (next_cp < n_cp && cp_steps[next_cp] == step) {
      traj.x.row(next_cp) = x0.transpose();
      traj.y.row(next_cp) = y0.transpose();
      traj.eta.row(next_cp) = eta.transpose();
      ++next_cp;
    }
  };
  record(0);

  for (long k = 0; k < steps; ++k) {
    for (int j = 0; j < p; ++j)
      eta1[j] = sde::em_step(model.noise.processes[j].spec, eta[j], cfg.h, dW[j][k]);

    if (has_dae) {
      grid::residual_f(model, x0, y0, eta1, f0);
      x1 = x0;
      y1 = y0;
      bool accepted = false;
      bool refreshed = false;
      for (int iter = 0; iter <= cfg.newton_max_iter; ++iter) {
        grid::residual_f(model, x1, y1, eta1, f1);
        grid::residual_g(model, x1, y1, eta1, gres);
        R.head(n) = x1 - x0 - 0.5 * cfg.dt * (f0 + f1);
        R.tail(m) = gres;
        const double rnorm = R.lpNorm<Eigen::Infinity>();
        if (!std::isfinite(rnorm))
          throw NewtonDivergence("trapezoidal Newton produced a non-finite residual at step " +
                                 std::to_string(k) + " (t = " + std::to_string(k * cfg.dt) +
                                 " s)");
        if (rnorm <= cfg.newton_tol) {
          accepted = true;
          traj.newton_iterations += iter;
          break;
        }
        if (iter == cfg.newton_max_iter) break;
        if (iter >= 4 && !refreshed) {
          factor_at(x1, y1, eta1);
          refreshed = true;
          ++traj.jacobian_refreshes;
        }
        const Vector du = lu.solve(R);
        x1 -= du.head(n);
        y1 -= du.tail(m);
      }
      if (!accepted)
        throw NewtonDivergence(
            "trapezoidal Newton did not reach tolerance within " +
            std::to_string(cfg.newton_max_iter) + " iterations at step " +
            std::to_string(k) + " (t = " + std::to_string(k * cfg.dt) + " s)");
      x0 = x1;
      y0 = y1;
    }
    eta = eta1;
    record(k + 1);
  }
  return traj;
}

namespace {

int worker_count(int N) {
  long w = 0;
  if (const char* env = std::getenv("STOVAR_WORKERS")) {
    char* end = nullptr;
    w = std::strtol(env, &end, 10);
    if (end == env) w = 0;
  }
  if (w <= 0) w = static_cast<long>(std::thread::hardware_concurrency());
  if (w <= 0) w = 1;
  return static_cast<int>(std::min<long>(w, N));
}

struct WorkerStats {
  long count = 0;
  Matrix mean;  // checkpoints x vars
  Matrix m2;
  std::vector<std::pair<long, std::string>> failures;
  double realization_seconds = 0.0;
};

/// Pooled Chan merge: fold `b` into `a`.
void merge_stats(long& count_a, Matrix& mean_a, Matrix& m2_a, const WorkerStats& b) {
  if (b.count == 0) return;
  if (count_a == 0) {
    count_a = b.count;
    mean_a = b.mean;
    m2_a = b.m2;
    return;
  }
  const double na = static_cast<double>(count_a);
  const double nb = static_cast<double>(b.count);
  const double nt = na + nb;
  const Matrix delta = b.mean - mean_a;
  mean_a += delta * (nb / nt);
  m2_a += b.m2 + delta.cwiseProduct(delta) * (na * nb / nt);
  count_a += b.count;
}

}  // namespace

EnsembleStats run_ensemble(const grid::SystemModel& model, const grid::Equilibrium& eq,
                           const McConfig& raw_cfg) {
  const McConfig cfg = with_default_checkpoints(raw_cfg);
  const auto t_start = std::chrono::steady_clock::now();

  const int n = model.n, m = model.m, p = model.p;
  const int vars = n + p + m;
  const int n_cp = static_cast<int>(cfg.checkpoints.size());

  EnsembleStats stats;
  stats.times = cfg.checkpoints;
  stats.names = model.state_names;
  stats.classes = model.state_classes;
  for (const sde::NoiseProcess& pr : model.noise.processes) {
    stats.names.push_back("eta(" + pr.tag + ")");
    stats.classes.push_back("eta");
  }
  stats.names.insert(stats.names.end(), model.algebraic_names.begin(),
                     model.algebraic_names.end());
  stats.classes.insert(stats.classes.end(), model.algebraic_classes.begin(),
                       model.algebraic_classes.end());

  stats.finals.setZero(cfg.N, vars);
  stats.final_valid.assign(cfg.N, false);

  const int W = worker_count(cfg.N);
  stats.workers = W;
  std::vector<WorkerStats> partials(W);

  auto work = [&](int w) {
    WorkerStats& ws = partials[w];
    ws.mean.setZero(n_cp, vars);
    ws.m2.setZero(n_cp, vars);
    Eigen::RowVectorXd values(vars);
    for (long r = w; r < cfg.N; r += W) {
      const auto r_start = std::chrono::steady_clock::now();
      Trajectory traj;
      try {
        traj = integrate_sdae(model, eq, static_cast<int>(r), cfg);
      } catch (const std::exception& e) {
        ws.failures.emplace_back(r, e.what());
        continue;
      }
      ws.realization_seconds +=
          std::chrono::duration<double>(std::chrono::steady_clock::now() - r_start)
              .count();
      ++ws.count;
      for (int c = 0; c < n_cp; ++c) {
        values.head(n) = traj.x.row(c);
        values.segment(n, p) = traj.eta.row(c);
        values.tail(m) = traj.y.row(c);
        const Eigen::RowVectorXd delta = values - ws.mean.row(c);
        ws.mean.row(c) += delta / static_cast<double>(ws.count);
        ws.m2.row(c) +=
            delta.cwiseProduct(values - ws.mean.row(c));
        if (c == n_cp - 1) {
          stats.finals.row(r) = values;
          stats.final_valid[r] = true;
        }
      }
    }
  };

  if (W == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(W);
    for (int w = 0; w < W; ++w) pool.emplace_back(work, w);
    for (std::thread& t : pool) t.join();
  }

  stats.mean.setZero(n_cp, vars);
  stats.m2.setZero(n_cp, vars);
  stats.count = 0;
  for (const WorkerStats& ws : partials) {
    merge_stats(stats.count, stats.mean, stats.m2, ws);
    stats.realization_seconds += ws.realization_seconds;
    stats.failures += static_cast<int>(ws.failures.size());
    for (const auto& [r, msg] : ws.failures)
      if (stats.failure_messages.size() < 8)
        stats.failure_messages.push_back("realization " + std::to_string(r) + ": " + msg);
  }
  stats.insufficient_sample = stats.count < 2;
  stats.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  if (stats.failures * 100 > cfg.N) {
    std::string detail = stats.failure_messages.empty() ? std::string("(no detail)")
                                                        : stats.failure_messages.front();
    throw Error("ensemble run failed: " + std::to_string(stats.failures) + " of " +
                std::to_string(cfg.N) + " realizations errored; first: " + detail);
  }
  return stats;
}

Vector EnsembleStats::sigma_at(int checkpoint) const {
  require(checkpoint >= 0 && checkpoint < static_cast<int>(times.size()),
          "sigma_at: checkpoint index out of range");
  if (count < 2) return Vector::Zero(mean.cols());
  return (m2.row(checkpoint) / static_cast<double>(count - 1))
      .cwiseMax(0.0)
      .cwiseSqrt()
      .transpose();
}

Vector EnsembleStats::sigma_final(long upto) const {
  const long N = finals.rows();
  const long stop = upto < 0 ? N : std::min(upto, N);
  Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(finals.cols());
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(finals.cols());
  long k = 0;
  for (long r = 0; r < stop; ++r) {
    if (!final_valid[r]) continue;
    ++k;
    const Eigen::RowVectorXd delta = finals.row(r) - mu;
    mu += delta / static_cast<double>(k);
    acc += delta.cwiseProduct(finals.row(r) - mu);
  }
  if (k < 2) return Vector::Zero(finals.cols());
  return (acc / static_cast<double>(k - 1)).cwiseMax(0.0).cwiseSqrt().transpose();
}

BoxStats boxplot_stats(std::vector<double> values) {
  if (values.empty()) throw EmptyInput("boxplot_stats: empty value list");
  std::sort(values.begin(), values.end());
  const auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    if (lo + 1 >= values.size()) return values.back();
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
  };
  BoxStats box;
  box.median = quantile(0.5);
  box.p5 = quantile(0.05);
  box.p95 = quantile(0.95);
  for (double v : values)
    if (v < box.p5 || v > box.p95) box.outliers.push_back(v);
  return box;
}

ClosenessReport closeness(const SigmaTable& mc_table, const SigmaTable& lem_table) {
  if (mc_table.names.size() != lem_table.names.size())
    throw MismatchedVariables("closeness: tables have " +
                              std::to_string(mc_table.names.size()) + " vs " +
                              std::to_string(lem_table.names.size()) + " variables");
  require(static_cast<size_t>(mc_table.sigma.size()) == mc_table.names.size() &&
              static_cast<size_t>(lem_table.sigma.size()) == lem_table.names.size(),
          "closeness: sigma vector size does not match the name table");
  for (size_t i = 0; i < mc_table.names.size(); ++i) {
    if (mc_table.names[i] != lem_table.names[i])
      throw MismatchedVariables("closeness: variable " + std::to_string(i) + " is '" +
                                mc_table.names[i] + "' on one side and '" +
                                lem_table.names[i] + "' on the other");
  }

  ClosenessReport rep;
  rep.rows.reserve(mc_table.names.size());
  for (size_t i = 0; i < mc_table.names.size(); ++i) {
    VariableCloseness row;
    row.name = mc_table.names[i];
    row.cls = i < mc_table.classes.size() ? mc_table.classes[i] : std::string();
    row.sigma_mc = mc_table.sigma[static_cast<Eigen::Index>(i)];
    row.sigma_lem = lem_table.sigma[static_cast<Eigen::Index>(i)];
    if (row.sigma_mc > 0.0) {
      row.epsilon_pct = (row.sigma_mc - row.sigma_lem) / row.sigma_mc * 100.0;
    } else if (row.sigma_lem > 0.0) {
      row.incomparable = true;
    } else {
      row.degenerate = true;
    }
    rep.rows.push_back(std::move(row));
  }

  std::vector<std::string> class_order;
  for (const VariableCloseness& row : rep.rows) {
    if (row.degenerate || row.incomparable) continue;
    if (std::find(class_order.begin(), class_order.end(), row.cls) == class_order.end())
      class_order.push_back(row.cls);
  }
  for (const std::string& cls : class_order) {
    std::vector<double> eps;
    for (const VariableCloseness& row : rep.rows)
      if (!row.degenerate && !row.incomparable && row.cls == cls)
        eps.push_back(row.epsilon_pct);
    ClassBox box;
    box.cls = cls;
    box.count = static_cast<int>(eps.size());
    box.stats = boxplot_stats(std::move(eps));
    rep.boxes.push_back(std::move(box));
  }
  return rep;
}

SigmaVsTime sigma_vs_time(const EnsembleStats& stats) {
  SigmaVsTime out;
  out.times = stats.times;
  out.sigma.resize(static_cast<Eigen::Index>(stats.times.size()), stats.mean.cols());
  for (int c = 0; c < static_cast<int>(stats.times.size()); ++c)
    out.sigma.row(c) = stats.sigma_at(c).transpose();
  return out;
}

SigmaVsCount sigma_vs_count(const EnsembleStats& stats) {
  SigmaVsCount out;
  std::vector<long> ladder{stats.finals.rows()};
  while (ladder.back() / 2 >= 32) ladder.push_back(ladder.back() / 2);
  std::reverse(ladder.begin(), ladder.end());
  out.counts = ladder;
  out.sigma.resize(static_cast<Eigen::Index>(ladder.size()), stats.finals.cols());
  for (size_t i = 0; i < ladder.size(); ++i)
    out.sigma.row(static_cast<Eigen::Index>(i)) = stats.sigma_final(ladder[i]).transpose();
  return out;
}

}  // namespace stovar::mc
