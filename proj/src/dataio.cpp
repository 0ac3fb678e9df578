// dataio.cpp

#include "spatgev/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace spatgev {

namespace {

using nlohmann::json;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!s.empty() && s.back() == sep) parts.push_back("");
  return parts;
}

double parse_double(const std::string& s, const std::string& path, int line) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw IoError(path + ":" + std::to_string(line) + ": bad number '" + s + "'");
  }
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  if (pos != s.size() || !std::isfinite(v)) {
    throw IoError(path + ":" + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

std::string strip(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

SiteDataset ingest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  int lineno = 0;
  SiteDataset data;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = strip(line);
    if (t.empty()) continue;
    if (lineno == 1 && t.rfind("lon,lat", 0) == 0) continue;  // header
    const auto parts = split(t, ',');
    if (parts.size() != 3) {
      throw IoError(path + ":" + std::to_string(lineno) +
                    ": expected 3 columns, got " + std::to_string(parts.size()));
    }
    Coord c{parse_double(parts[0], path, lineno),
            parse_double(parts[1], path, lineno)};
    std::vector<double> values;
    for (const auto& v : split(parts[2], ';')) {
      values.push_back(parse_double(strip(v), path, lineno));
    }
    if (values.empty()) {
      throw IoError(path + ":" + std::to_string(lineno) + ": no values");
    }
    data.coords.push_back(c);
    data.obs.push_back(std::move(values));
  }
  if (data.coords.empty()) {
    throw ValidationError("ingest_csv: empty dataset in '" + path + "'");
  }
  data.validate();
  return data;
}

void export_dataset_csv(const SiteDataset& data, const std::string& path) {
  std::ostringstream out;
  out << "lon,lat,value\n";
  for (int i = 0; i < data.n_sites(); ++i) {
    out << format_g17(data.coords[i].x) << ',' << format_g17(data.coords[i].y)
        << ',';
    for (std::size_t k = 0; k < data.obs[i].size(); ++k) {
      if (k) out << ';';
      out << format_g17(data.obs[i][k]);
    }
    out << '\n';
  }
  atomic_write(path, out.str());
}

std::vector<TrackRecord> ingest_records_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  int lineno = 0;
  std::vector<TrackRecord> records;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = strip(line);
    if (t.empty()) continue;
    if (lineno == 1 && t.rfind("lon,lat", 0) == 0) continue;
    const auto parts = split(t, ',');
    if (parts.size() != 3) {
      throw IoError(path + ":" + std::to_string(lineno) + ": expected 3 columns");
    }
    records.push_back({parse_double(parts[0], path, lineno),
                       parse_double(parts[1], path, lineno),
                       parse_double(parts[2], path, lineno)});
  }
  return records;
}

void GridSpec::validate() const {
  if (!(cell_deg > 0.0)) throw ValidationError("grid: cell_deg must be > 0");
  if (min_records < 1) throw ValidationError("grid: min_records must be >= 1");
  if (!(lon_min < lon_max) || !(lat_min < lat_max)) {
    throw ValidationError("grid: bbox must be well-ordered");
  }
}

GridResult grid_maxima(const std::vector<TrackRecord>& records,
                       const GridSpec& spec) {
  spec.validate();
  if (records.empty()) throw ValidationError("grid: no records");

  const int nx = static_cast<int>(
      std::ceil((spec.lon_max - spec.lon_min) / spec.cell_deg - 1e-12));
  const int ny = static_cast<int>(
      std::ceil((spec.lat_max - spec.lat_min) / spec.cell_deg - 1e-12));

  struct Cell {
    int count = 0;
    double max = 0.0;
  };
  std::map<std::pair<int, int>, Cell> cells;  // ordered for stable output
  for (const auto& r : records) {
    if (r.lon < spec.lon_min || r.lat < spec.lat_min || r.lon > spec.lon_max ||
        r.lat > spec.lat_max) {
      continue;  // bbox applied strictly
    }
    int ix = static_cast<int>(std::floor((r.lon - spec.lon_min) / spec.cell_deg));
    int iy = static_cast<int>(std::floor((r.lat - spec.lat_min) / spec.cell_deg));
    // Global upper boundary is closed: fold it into the last cell.
    ix = std::min(ix, nx - 1);
    iy = std::min(iy, ny - 1);
    auto& cell = cells[{ix, iy}];
    if (cell.count == 0 || r.value > cell.max) cell.max = r.value;
    ++cell.count;
  }

  GridResult out;
  for (const auto& [key, cell] : cells) {
    if (cell.count < spec.min_records) continue;
    out.data.coords.push_back(
        {spec.lon_min + (key.first + 0.5) * spec.cell_deg,
         spec.lat_min + (key.second + 0.5) * spec.cell_deg});
    out.data.obs.push_back({cell.max});
    out.counts.push_back(cell.count);
  }
  return out;
}

KernelSettings RunConfig::kernel_settings() const {
  KernelSettings s;
  if (jitter >= 0.0) s.jitter = jitter;
  if (kernel_form == "squared_exponential") {
    s.form = KernelForm::SquaredExponential;
  } else if (kernel_form == "exponential") {
    s.form = KernelForm::Exponential;
  } else {
    throw ValidationError("config: unknown kernel_form '" + kernel_form + "'");
  }
  return s;
}

laplace::OuterOptions RunConfig::outer_options() const {
  laplace::OuterOptions o;
  o.grad_tol = outer_grad_tol;
  o.max_evals = outer_max_evals;
  o.inner.grad_tol = inner_grad_tol;
  o.inner.max_iter = inner_max_iter;
  return o;
}

std::string RunConfig::to_json() const {
  json j;
  j["model"] = model;
  j["kernel_form"] = kernel_form;
  if (jitter >= 0.0) {
    j["jitter"] = jitter;
  } else {
    j["jitter"] = nullptr;
  }
  j["outer_grad_tol"] = outer_grad_tol;
  j["outer_max_evals"] = outer_max_evals;
  j["inner_grad_tol"] = inner_grad_tol;
  j["inner_max_iter"] = inner_max_iter;
  j["n_sim"] = n_sim;
  j["seed"] = seed;
  j["prob_upper"] = prob_upper;
  const std::string text = j.dump(2);
  parse_run_config(text);  // self-consistency
  return text;
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config: expected a JSON object");

  static const std::vector<std::string> known = {
      "model",          "kernel_form",     "jitter",
      "outer_grad_tol", "outer_max_evals", "inner_grad_tol",
      "inner_max_iter", "n_sim",           "seed",
      "prob_upper"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw ValidationError("config: unknown key '" + it.key() + "'");
    }
  }

  RunConfig cfg;
  auto get_number = [&](const char* key, double lo, double hi, double& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) {
      throw ValidationError(std::string("config: '") + key + "' must be a number");
    }
    out = j[key].get<double>();
    if (!(out >= lo && out <= hi)) {
      throw ValidationError(std::string("config: '") + key + "' out of range");
    }
  };
  if (j.contains("model")) {
    if (!j["model"].is_string()) throw ValidationError("config: 'model' must be a string");
    cfg.model = j["model"].get<std::string>();
    ModelSpec::from_name(cfg.model);
  }
  if (j.contains("kernel_form")) {
    if (!j["kernel_form"].is_string()) {
      throw ValidationError("config: 'kernel_form' must be a string");
    }
    cfg.kernel_form = j["kernel_form"].get<std::string>();
  }
  if (j.contains("jitter") && !j["jitter"].is_null()) {
    get_number("jitter", 0.0, 1e12, cfg.jitter);
  }
  get_number("outer_grad_tol", 1e-14, 1.0, cfg.outer_grad_tol);
  get_number("inner_grad_tol", 1e-14, 1.0, cfg.inner_grad_tol);
  get_number("prob_upper", 1e-12, 1.0 - 1e-12, cfg.prob_upper);
  auto get_int = [&](const char* key, long lo, long hi, auto& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_integer()) {
      throw ValidationError(std::string("config: '") + key + "' must be an integer");
    }
    const long v = j[key].get<long>();
    if (v < lo || v > hi) {
      throw ValidationError(std::string("config: '") + key + "' out of range");
    }
    out = static_cast<std::remove_reference_t<decltype(out)>>(v);
  };
  get_int("outer_max_evals", 1, 1000000, cfg.outer_max_evals);
  get_int("inner_max_iter", 1, 1000000, cfg.inner_max_iter);
  get_int("n_sim", 1, 100000000, cfg.n_sim);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer()) {
      throw ValidationError("config: 'seed' must be an integer");
    }
    cfg.seed = j["seed"].get<std::uint64_t>();
  }
  cfg.kernel_settings();  // validates kernel_form
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp + "'");
    out << content;
    if (!out) throw IoError("write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw IoError("rename failed for '" + path + "'");
  }
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.size();
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  const auto cols = j[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (j[i].size() != cols) throw IoError("fit file: ragged matrix");
    for (std::size_t k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

}  // namespace

void save_fit_json(const GevFit& fit, const Coords& coords,
                   const std::string& path) {
  json j;
  j["model"] = fit.spec.name();
  j["kernel_form"] = fit.settings.form == KernelForm::SquaredExponential
                         ? "squared_exponential"
                         : "exponential";
  if (fit.settings.jitter) {
    j["jitter"] = *fit.settings.jitter;
  } else {
    j["jitter"] = nullptr;
  }
  j["n_sites"] = fit.n_sites;
  json lon = json::array(), lat = json::array();
  for (const auto& c : coords) {
    lon.push_back(c.x);
    lat.push_back(c.y);
  }
  j["lon"] = std::move(lon);
  j["lat"] = std::move(lat);
  j["theta_hat"] = vector_to_json(fit.fit.theta_hat);
  j["u_hat"] = vector_to_json(fit.fit.u_hat);
  j["v_theta"] = matrix_to_json(fit.fit.v_theta);
  j["v_u"] = matrix_to_json(fit.fit.v_u);
  j["j_u"] = matrix_to_json(fit.fit.j_u);
  j["logml"] = fit.fit.logml;
  j["converged"] = fit.fit.converged;
  j["diagnostics"] = {
      {"outer_iterations", fit.fit.diagnostics.outer_iterations},
      {"logml_evaluations", fit.fit.diagnostics.logml_evaluations},
      {"final_grad_norm", fit.fit.diagnostics.final_grad_norm},
      {"v_theta_projected", fit.fit.diagnostics.v_theta_projected},
      {"wall_seconds", fit.fit.diagnostics.wall_seconds},
  };
  atomic_write(path, j.dump());
}

std::pair<GevFit, Coords> load_fit_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open fit file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw IoError(std::string("fit file: ") + e.what());
  }
  GevFit fit;
  try {
    fit.spec = ModelSpec::from_name(j.at("model").get<std::string>());
    KernelSettings ks;
    ks.form = j.at("kernel_form").get<std::string>() == "squared_exponential"
                  ? KernelForm::SquaredExponential
                  : KernelForm::Exponential;
    if (!j.at("jitter").is_null()) ks.jitter = j["jitter"].get<double>();
    fit.settings = ks;
    fit.n_sites = j.at("n_sites").get<int>();
    fit.fit.theta_hat = vector_from_json(j.at("theta_hat"));
    fit.fit.u_hat = vector_from_json(j.at("u_hat"));
    fit.fit.v_theta = matrix_from_json(j.at("v_theta"));
    fit.fit.v_u = matrix_from_json(j.at("v_u"));
    fit.fit.j_u = matrix_from_json(j.at("j_u"));
    fit.fit.logml = j.at("logml").get<double>();
    fit.fit.converged = j.at("converged").get<bool>();
    Coords coords;
    const auto& lon = j.at("lon");
    const auto& lat = j.at("lat");
    if (lon.size() != lat.size()) throw IoError("fit file: lon/lat mismatch");
    for (std::size_t i = 0; i < lon.size(); ++i) {
      coords.push_back({lon[i].get<double>(), lat[i].get<double>()});
    }
    fit.joint = laplace::joint_posterior(fit.fit);
    return {std::move(fit), std::move(coords)};
  } catch (const json::exception& e) {
    throw IoError(std::string("fit file: ") + e.what());
  }
}

}  // namespace spatgev
