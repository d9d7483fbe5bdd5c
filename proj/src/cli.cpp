#include "stovar/cli.hpp"

#include <chrono>
#include <filesystem>
#include <ostream>

#include "stovar/io.hpp"
#include "stovar/lem.hpp"
#include "stovar/mc.hpp"

namespace stovar::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join(const std::string& dir, const std::string& file) {
  return (fs::path(dir) / file).string();
}

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

grid::SystemModel load_scaled(const std::string& path, double sigma_scale) {
  grid::SystemModel model = io::load_system(path);
  if (sigma_scale != 1.0) io::scale_noise(model, sigma_scale);
  return model;
}

void write_sigma_csv(const std::string& path, const std::vector<std::string>& names,
                     const std::vector<std::string>& classes, const Vector& sigma,
                     const std::vector<bool>& degenerate) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(names.size());
  for (size_t i = 0; i < names.size(); ++i)
    rows.push_back({names[i], classes[i], io::format_double(sigma[static_cast<Eigen::Index>(i)]),
                    degenerate[i] ? "1" : "0"});
  io::write_csv(path, {"variable", "class", "sigma", "degenerate"}, rows);
}

void write_matrix_csv(const std::string& path, const Matrix& M) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(static_cast<size_t>(M.rows()) * static_cast<size_t>(M.cols()));
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j)
      rows.push_back({std::to_string(i), std::to_string(j), io::format_double(M(i, j))});
  io::write_csv(path, {"row", "col", "value"}, rows);
}

/// Read one of this tool's sigma CSVs back into a table.
void append_sigma_csv(const std::string& path, mc::SigmaTable& table) {
  const io::CsvTable csv = io::read_csv(path);
  require(csv.header.size() >= 3 && csv.header[0] == "variable",
          "'" + path + "' is not a sigma table");
  std::vector<double> sig(table.sigma.data(), table.sigma.data() + table.sigma.size());
  for (const auto& row : csv.rows) {
    require(row.size() >= 3, "'" + path + "': short row");
    table.names.push_back(row[0]);
    table.classes.push_back(row[1]);
    sig.push_back(std::stod(row[2]));
  }
  table.sigma = Eigen::Map<const Vector>(sig.data(), static_cast<Eigen::Index>(sig.size()));
}

}  // namespace

int cmd_pf(const PfOptions& opt, std::ostream& err) {
  grid::SystemModel model;
  try {
    model = io::load_system(opt.model_path);
    ensure_dir(opt.out_dir);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  const auto t0 = std::chrono::steady_clock::now();
  grid::PowerFlowResult pf;
  try {
    pf = grid::power_flow(model);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kPowerFlowError;
  }

  std::vector<std::vector<std::string>> rows;
  for (size_t i = 0; i < model.buses.size(); ++i) {
    const Eigen::Index k = static_cast<Eigen::Index>(i);
    rows.push_back({model.buses[i].id, io::format_double(pf.v[k]),
                    io::format_double(pf.theta[k]), io::format_double(pf.p_inj[k]),
                    io::format_double(pf.q_inj[k]), io::format_double(pf.mismatch[k])});
  }
  io::write_csv(join(opt.out_dir, "pf.csv"),
                {"id", "v", "theta", "p_inj", "q_inj", "mismatch"}, rows);

  json manifest = {{"command", "pf"},
                   {"model", opt.model_path},
                   {"iterations", pf.iterations},
                   {"mismatch_inf", pf.mismatch_inf},
                   {"wall_clock_s", seconds_since(t0)}};
  io::write_json(join(opt.out_dir, "pf_manifest.json"), manifest);
  return kOk;
}

int cmd_lem(const LemOptions& opt, std::ostream& err) {
  grid::SystemModel model;
  try {
    model = load_scaled(opt.model_path, opt.sigma_scale);
    ensure_dir(opt.out_dir);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  const auto t0 = std::chrono::steady_clock::now();
  grid::Equilibrium eq;
  try {
    eq = grid::initialize_equilibrium(model);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kPowerFlowError;
  }

  lem::LinearizedSystem sys;
  lem::CovarianceReport rep;
  try {
    sys = lem::reduce(model, eq);
    rep = lem::covariances(sys);
  } catch (const NotHurwitz& e) {
    err << "error: " << e.what() << "\n";
    for (const Complex& ev : e.offending_eigenvalues)
      err << "  offending eigenvalue " << ev.real() << " + " << ev.imag() << "i\n";
    return kLemError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kLemError;
  }
  const double wall = seconds_since(t0);

  write_sigma_csv(join(opt.out_dir, "sigma_states.csv"), sys.extended_names(),
                  sys.extended_classes(), rep.sigma_x, rep.state_degenerate);
  write_sigma_csv(join(opt.out_dir, "sigma_algebraics.csv"), sys.algebraic_names,
                  sys.algebraic_classes, rep.sigma_y, rep.algebraic_degenerate);
  if (opt.dump_cov) {
    write_matrix_csv(join(opt.out_dir, "C.csv"), rep.C);
    write_matrix_csv(join(opt.out_dir, "K.csv"), rep.K);
  }

  json manifest = {{"command", "lem"},
                   {"model", opt.model_path},
                   {"sigma_scale", opt.sigma_scale},
                   {"n", sys.n},
                   {"m", sys.m},
                   {"p", sys.p},
                   {"spectral_abscissa", rep.spectral_abscissa},
                   {"gy_rcond", rep.gy_rcond},
                   {"a_rcond", rep.a_rcond},
                   {"lyap_residual_norm", rep.lyap_residual_norm},
                   {"degeneracy_tol", rep.degeneracy_tol},
                   {"ill_conditioned", rep.ill_conditioned},
                   {"pf_iterations", eq.pf.iterations},
                   {"wall_clock_s", wall}};
  io::write_json(join(opt.out_dir, "lem_manifest.json"), manifest);
  return kOk;
}

namespace {

int run_mc_like(const McOptions& opt, std::ostream& err, const char* command,
                bool write_final) {
  grid::SystemModel model;
  double tf = opt.tf;
  try {
    model = load_scaled(opt.model_path, opt.sigma_scale);
    if (opt.seed_set) model.noise.root_seed = opt.seed;
    if (tf <= 0.0) tf = mc::heuristic_tf(model.noise);
    ensure_dir(opt.out_dir);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  grid::Equilibrium eq;
  try {
    eq = grid::initialize_equilibrium(model);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kPowerFlowError;
  }

  mc::McConfig cfg;
  cfg.N = static_cast<int>(opt.n);
  cfg.t_f = tf;
  cfg.dt = opt.dt;
  cfg.h = opt.dt;
  cfg.root_seed = model.noise.root_seed;

  const auto t0 = std::chrono::steady_clock::now();
  mc::EnsembleStats stats;
  try {
    cfg.checkpoints = mc::default_checkpoints(cfg.t_f);
    cfg.validate();
    stats = mc::run_ensemble(model, eq, cfg);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kMcError;
  }
  const double wall = seconds_since(t0);

  const Eigen::Index vars = stats.finals.cols();
  if (write_final) {
    const Vector sigma = stats.sigma_final();
    std::vector<std::vector<std::string>> rows;
    rows.reserve(vars);
    for (Eigen::Index i = 0; i < vars; ++i)
      rows.push_back({stats.names[i], stats.classes[i], io::format_double(sigma[i]),
                      std::to_string(stats.count)});
    io::write_csv(join(opt.out_dir, "mc_sigma_final.csv"),
                  {"variable", "class", "sigma_mc", "N"}, rows);
  }

  {
    const mc::SigmaVsTime vt = mc::sigma_vs_time(stats);
    std::vector<std::vector<std::string>> rows;
    rows.reserve(vt.times.size() * static_cast<size_t>(vars));
    for (size_t c = 0; c < vt.times.size(); ++c)
      for (Eigen::Index i = 0; i < vars; ++i)
        rows.push_back({io::format_double(vt.times[c]), stats.names[i],
                        stats.classes[i],
                        io::format_double(vt.sigma(static_cast<Eigen::Index>(c), i))});
    io::write_csv(join(opt.out_dir, "sigma_vs_t.csv"),
                  {"time", "variable", "class", "sigma"}, rows);
  }
  {
    const mc::SigmaVsCount vn = mc::sigma_vs_count(stats);
    std::vector<std::vector<std::string>> rows;
    rows.reserve(vn.counts.size() * static_cast<size_t>(vars));
    for (size_t c = 0; c < vn.counts.size(); ++c)
      for (Eigen::Index i = 0; i < vars; ++i)
        rows.push_back({std::to_string(vn.counts[c]), stats.names[i], stats.classes[i],
                        io::format_double(vn.sigma(static_cast<Eigen::Index>(c), i))});
    io::write_csv(join(opt.out_dir, "sigma_vs_N.csv"),
                  {"N", "variable", "class", "sigma"}, rows);
  }

  json manifest = {{"command", command},
                   {"model", opt.model_path},
                   {"sigma_scale", opt.sigma_scale},
                   {"seed", cfg.root_seed},
                   {"N", cfg.N},
                   {"t_f", cfg.t_f},
                   {"dt", cfg.dt},
                   {"h", cfg.h},
                   {"newton_tol", cfg.newton_tol},
                   {"workers", stats.workers},
                   {"failures", stats.failures},
                   {"completed", stats.count},
                   {"insufficient_sample", stats.insufficient_sample},
                   {"cpu_per_realization_s",
                    stats.count > 0 ? stats.realization_seconds / stats.count : 0.0},
                   {"wall_clock_s", wall}};
  io::write_json(join(opt.out_dir, std::string(command) + "_manifest.json"), manifest);
  return kOk;
}

}  // namespace

int cmd_mc(const McOptions& opt, std::ostream& err) {
  return run_mc_like(opt, err, "mc", true);
}

int cmd_convergence(const McOptions& opt, std::ostream& err) {
  return run_mc_like(opt, err, "convergence", false);
}

int cmd_compare(const CompareOptions& opt, std::ostream& err) {
  mc::SigmaTable lem_table, mc_table;
  lem_table.sigma.resize(0);
  mc_table.sigma.resize(0);
  try {
    append_sigma_csv(join(opt.lem_dir, "sigma_states.csv"), lem_table);
    append_sigma_csv(join(opt.lem_dir, "sigma_algebraics.csv"), lem_table);
    append_sigma_csv(join(opt.mc_dir, "mc_sigma_final.csv"), mc_table);
    ensure_dir(opt.out_dir);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  mc::ClosenessReport rep;
  try {
    rep = mc::closeness(mc_table, lem_table);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kCompareError;
  }

  std::vector<std::vector<std::string>> rows;
  rows.reserve(rep.rows.size());
  for (const mc::VariableCloseness& row : rep.rows) {
    const char* flag = row.degenerate ? "degenerate" : row.incomparable ? "incomparable" : "";
    rows.push_back({row.name, row.cls, io::format_double(row.sigma_mc),
                    io::format_double(row.sigma_lem), io::format_double(row.epsilon_pct),
                    flag});
  }
  io::write_csv(join(opt.out_dir, "epsilon_sigma.csv"),
                {"variable", "class", "sigma_mc", "sigma_lem", "epsilon_pct", "flags"},
                rows);

  rows.clear();
  for (const mc::ClassBox& box : rep.boxes)
    rows.push_back({box.cls, io::format_double(box.stats.median),
                    io::format_double(box.stats.p5), io::format_double(box.stats.p95),
                    std::to_string(box.stats.outliers.size())});
  io::write_csv(join(opt.out_dir, "epsilon_boxplot.csv"),
                {"class", "median", "p5", "p95", "n_outliers"}, rows);
  return kOk;
}

}  // namespace stovar::cli
