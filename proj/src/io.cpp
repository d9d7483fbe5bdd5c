#include "stovar/io.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace stovar::io {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& what) { throw InvalidParameter(what); }

double num(const json& obj, const std::string& key, const std::string& ctx) {
  if (!obj.contains(key)) fail(ctx + ": missing field '" + key + "'");
  if (!obj[key].is_number()) fail(ctx + ": field '" + key + "' must be a number");
  return obj[key].get<double>();
}

double num_or(const json& obj, const std::string& key, double fallback,
              const std::string& ctx) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) fail(ctx + ": field '" + key + "' must be a number");
  return obj[key].get<double>();
}

std::string str(const json& obj, const std::string& key, const std::string& ctx) {
  if (!obj.contains(key)) fail(ctx + ": missing field '" + key + "'");
  if (!obj[key].is_string()) fail(ctx + ": field '" + key + "' must be a string");
  return obj[key].get<std::string>();
}

const json& array_or_empty(const json& doc, const std::string& key) {
  static const json empty = json::array();
  if (!doc.contains(key)) return empty;
  if (!doc[key].is_array()) fail("system file: section '" + key + "' must be an array");
  return doc[key];
}

}  // namespace

grid::SystemModel parse_system(const json& doc) {
  if (!doc.is_object()) fail("system file: top level must be a JSON object");
  grid::SystemModel model;

  if (doc.contains("base")) {
    const json& base = doc["base"];
    model.base_mva = num_or(base, "mva", 100.0, "base");
    model.f_hz = num_or(base, "frequency_hz", 60.0, "base");
  }

  std::map<std::string, int> bus_index;
  for (const json& jb : array_or_empty(doc, "buses")) {
    grid::Bus bus;
    bus.id = str(jb, "id", "bus");
    const std::string kind = str(jb, "kind", "bus '" + bus.id + "'");
    if (kind == "slack")
      bus.kind = grid::BusKind::slack;
    else if (kind == "pv")
      bus.kind = grid::BusKind::pv;
    else if (kind == "pq")
      bus.kind = grid::BusKind::pq;
    else
      fail("bus '" + bus.id + "': kind must be slack, pv or pq (got '" + kind + "')");
    bus.v0 = num_or(jb, "v", 1.0, "bus '" + bus.id + "'");
    bus.theta0 = num_or(jb, "theta", 0.0, "bus '" + bus.id + "'");
    if (bus_index.count(bus.id)) fail("duplicate bus id '" + bus.id + "'");
    bus_index[bus.id] = static_cast<int>(model.buses.size());
    model.buses.push_back(bus);
  }

  auto bus_of = [&](const json& obj, const std::string& ctx) {
    const std::string id = str(obj, "bus", ctx);
    auto it = bus_index.find(id);
    if (it == bus_index.end()) fail(ctx + ": unknown bus '" + id + "'");
    return it->second;
  };

  for (const json& jb : array_or_empty(doc, "branches")) {
    grid::Branch br;
    br.id = str(jb, "id", "branch");
    const std::string ctx = "branch '" + br.id + "'";
    const std::string from = str(jb, "from", ctx);
    const std::string to = str(jb, "to", ctx);
    if (!bus_index.count(from)) fail(ctx + ": unknown bus '" + from + "'");
    if (!bus_index.count(to)) fail(ctx + ": unknown bus '" + to + "'");
    br.from = bus_index[from];
    br.to = bus_index[to];
    br.r = num_or(jb, "r", 0.0, ctx);
    br.x = num(jb, "x", ctx);
    br.b_sh = num_or(jb, "b", 0.0, ctx);
    br.tap = num_or(jb, "tap", 1.0, ctx);
    model.branches.push_back(br);
  }

  // Noise bank first by order of appearance; device sections refer to tags.
  for (const json& jn : array_or_empty(doc, "noise")) {
    sde::NoiseProcess pr;
    pr.tag = str(jn, "tag", "noise");
    const std::string ctx = "noise '" + pr.tag + "'";
    const std::string kind = str(jn, "kind", ctx);
    if (kind == "ou") {
      const double alpha = num(jn, "alpha", ctx);
      const double mu = num_or(jn, "mu", 0.0, ctx);
      if (jn.contains("sigma") && jn.contains("b"))
        fail(ctx + ": give either 'sigma' or 'b', not both");
      if (jn.contains("sigma")) {
        pr.spec = sde::ou_from_sigma(alpha, mu, num(jn, "sigma", ctx));
      } else if (jn.contains("b")) {
        sde::OuSpec ou;
        ou.alpha = alpha;
        ou.mu = mu;
        ou.b = num(jn, "b", ctx);
        require(ou.alpha > 0.0, ctx + ": alpha must be > 0");
        require(ou.b >= 0.0, ctx + ": b must be >= 0");
        pr.spec = ou;
      } else {
        fail(ctx + ": an OU process needs 'sigma' or 'b'");
      }
    } else if (kind == "weibull") {
      pr.spec = sde::make_weibull(num(jn, "alpha", ctx), num(jn, "kappa", ctx),
                                  num(jn, "lambda", ctx));
    } else {
      fail(ctx + ": kind must be 'ou' or 'weibull' (got '" + kind + "')");
    }
    model.noise.processes.push_back(std::move(pr));
  }
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned())
      fail("system file: 'seed' must be a non-negative integer");
    model.noise.root_seed = doc["seed"].get<std::uint64_t>();
  }

  auto noise_of = [&](const json& obj, const std::string& key, const std::string& ctx) {
    if (!obj.contains(key) || obj[key].is_null()) return -1;
    const std::string tag = obj[key].get<std::string>();
    const int idx = model.noise.index_of(tag);
    if (idx < 0) fail(ctx + ": unknown noise tag '" + tag + "'");
    return idx;
  };

  for (const json& jm : array_or_empty(doc, "machines")) {
    grid::Machine mc;
    mc.id = str(jm, "id", "machine");
    const std::string ctx = "machine '" + mc.id + "'";
    mc.bus = bus_of(jm, ctx);
    mc.m = num(jm, "m", ctx);
    mc.d = num_or(jm, "d", 0.0, ctx);
    mc.xd = num(jm, "xd", ctx);
    mc.xq = num(jm, "xq", ctx);
    mc.xd_p = num(jm, "xd_p", ctx);
    mc.xq_p = num(jm, "xq_p", ctx);
    mc.td0_p = num(jm, "td0_p", ctx);
    mc.tq0_p = num(jm, "tq0_p", ctx);
    mc.ka = num(jm, "ka", ctx);
    mc.ta = num(jm, "ta", ctx);
    mc.r_droop = num(jm, "r_droop", ctx);
    mc.tg = num(jm, "tg", ctx);
    mc.p_ref = num_or(jm, "p", 0.0, ctx);  // PV dispatch; refined at init
    model.machines.push_back(mc);
  }

  for (const json& jl : array_or_empty(doc, "loads")) {
    grid::Load ld;
    ld.id = str(jl, "id", "load");
    const std::string ctx = "load '" + ld.id + "'";
    ld.bus = bus_of(jl, ctx);
    ld.p0 = num(jl, "p", ctx);
    ld.q0 = num_or(jl, "q", 0.0, ctx);
    ld.gamma = num_or(jl, "gamma", 2.0, ctx);
    ld.noise_p = noise_of(jl, "noise_p", ctx);
    ld.noise_q = noise_of(jl, "noise_q", ctx);
    model.loads.push_back(ld);
  }

  for (const json& jw : array_or_empty(doc, "wind_plants")) {
    grid::WindPlant wp;
    wp.id = str(jw, "id", "wind plant");
    const std::string ctx = "wind plant '" + wp.id + "'";
    wp.bus = bus_of(jw, ctx);
    wp.v_w0 = num(jw, "v_w", ctx);
    wp.noise_w = noise_of(jw, "noise", ctx);
    wp.t_f = num_or(jw, "t_f", 1.0, ctx);
    wp.q_set = num_or(jw, "q_set", 0.0, ctx);
    if (!jw.contains("curve") || !jw["curve"].is_object())
      fail(ctx + ": missing power curve object 'curve'");
    const json& jc = jw["curve"];
    wp.curve.v_cut_in = num(jc, "cut_in", ctx);
    wp.curve.v_rated = num(jc, "rated", ctx);
    wp.curve.v_cut_out = num(jc, "cut_out", ctx);
    wp.curve.p_rated = num(jc, "p_rated", ctx);
    model.winds.push_back(wp);
  }

  model.build_layout();
  return model;
}

grid::SystemModel load_system(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open system file '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    fail("system file '" + path + "': " + e.what());
  }
  return parse_system(doc);
}

json serialize_system(const grid::SystemModel& model) {
  json doc;
  doc["base"] = {{"mva", model.base_mva}, {"frequency_hz", model.f_hz}};

  doc["buses"] = json::array();
  for (const grid::Bus& b : model.buses) {
    const char* kind = b.kind == grid::BusKind::slack ? "slack"
                       : b.kind == grid::BusKind::pv  ? "pv"
                                                      : "pq";
    doc["buses"].push_back(
        {{"id", b.id}, {"kind", kind}, {"v", b.v0}, {"theta", b.theta0}});
  }

  doc["branches"] = json::array();
  for (const grid::Branch& br : model.branches)
    doc["branches"].push_back({{"id", br.id},
                               {"from", model.buses[br.from].id},
                               {"to", model.buses[br.to].id},
                               {"r", br.r},
                               {"x", br.x},
                               {"b", br.b_sh},
                               {"tap", br.tap}});

  doc["machines"] = json::array();
  for (const grid::Machine& mc : model.machines)
    doc["machines"].push_back({{"id", mc.id},
                               {"bus", model.buses[mc.bus].id},
                               {"m", mc.m},
                               {"d", mc.d},
                               {"xd", mc.xd},
                               {"xq", mc.xq},
                               {"xd_p", mc.xd_p},
                               {"xq_p", mc.xq_p},
                               {"td0_p", mc.td0_p},
                               {"tq0_p", mc.tq0_p},
                               {"ka", mc.ka},
                               {"ta", mc.ta},
                               {"r_droop", mc.r_droop},
                               {"tg", mc.tg},
                               {"p", mc.p_ref}});

  doc["loads"] = json::array();
  for (const grid::Load& ld : model.loads) {
    json jl = {{"id", ld.id},
               {"bus", model.buses[ld.bus].id},
               {"p", ld.p0},
               {"q", ld.q0},
               {"gamma", ld.gamma}};
    if (ld.noise_p >= 0) jl["noise_p"] = model.noise.processes[ld.noise_p].tag;
    if (ld.noise_q >= 0) jl["noise_q"] = model.noise.processes[ld.noise_q].tag;
    doc["loads"].push_back(std::move(jl));
  }

  doc["wind_plants"] = json::array();
  for (const grid::WindPlant& wp : model.winds) {
    json jw = {{"id", wp.id},
               {"bus", model.buses[wp.bus].id},
               {"v_w", wp.v_w0},
               {"t_f", wp.t_f},
               {"q_set", wp.q_set},
               {"curve",
                {{"cut_in", wp.curve.v_cut_in},
                 {"rated", wp.curve.v_rated},
                 {"cut_out", wp.curve.v_cut_out},
                 {"p_rated", wp.curve.p_rated}}}};
    if (wp.noise_w >= 0) jw["noise"] = model.noise.processes[wp.noise_w].tag;
    doc["wind_plants"].push_back(std::move(jw));
  }

  doc["noise"] = json::array();
  for (const sde::NoiseProcess& pr : model.noise.processes) {
    json jn = {{"tag", pr.tag}};
    if (const auto* ou = std::get_if<sde::OuSpec>(&pr.spec)) {
      jn["kind"] = "ou";
      jn["alpha"] = ou->alpha;
      jn["mu"] = ou->mu;
      jn["b"] = ou->b;
    } else {
      const auto& w = std::get<sde::WeibullSpec>(pr.spec);
      jn["kind"] = "weibull";
      jn["alpha"] = w.alpha_w;
      jn["kappa"] = w.kappa;
      jn["lambda"] = w.lambda;
    }
    doc["noise"].push_back(std::move(jn));
  }
  doc["seed"] = model.noise.root_seed;
  return doc;
}

void scale_noise(grid::SystemModel& model, double factor) {
  require(factor > 0.0, "scale_noise: factor must be > 0");
  for (sde::NoiseProcess& pr : model.noise.processes) {
    if (auto* ou = std::get_if<sde::OuSpec>(&pr.spec)) {
      ou->b *= factor;
    } else {
      auto& w = std::get<sde::WeibullSpec>(pr.spec);
      pr.spec = sde::make_weibull(w.alpha_w, w.kappa, w.lambda * factor);
    }
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) fail("cannot write '" + path + "'");
  for (size_t i = 0; i < header.size(); ++i) {
    if (i) out << ',';
    out << header[i];
  }
  out << '\n';
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  }
  if (!out) fail("write failed for '" + path + "'");
}

void write_json(const std::string& path, const json& doc) {
  std::ofstream out(path);
  if (!out) fail("cannot write '" + path + "'");
  out << doc.dump(2) << '\n';
  if (!out) fail("write failed for '" + path + "'");
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    fail("'" + path + "': " + e.what());
  }
  return doc;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(s);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.push_back("");
    return cells;
  };
  if (std::getline(in, line)) table.header = split(line);
  while (std::getline(in, line))
    if (!line.empty()) table.rows.push_back(split(line));
  return table;
}

}  // namespace stovar::io
