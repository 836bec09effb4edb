#pragma once

#include <anholo/curveflow.hpp>
#include <anholo/einstein.hpp>

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace anholo::cli {

using nlohmann::ordered_json;
using sym::Expression;

/// Raised for unreadable, malformed, or structurally invalid scene files.
/// The driver maps it to the usage/parse exit code.
class SceneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FlowSection {
  std::size_t p = 1;
  std::size_t N = 0;
  double Lbox = 0.0;
  int k = 1;
  double Rbar = 0.0;
  double dt = 0.0;
  long steps = 0;
  long stride = 100;
  bool dealias = false;
  flow::H2Variant h2 = flow::H2Variant::Squared;
  std::vector<Expression> initial;
};

struct SolitonSection {
  double kappa = 0.0;
  int eps = 1;
  bool has_f0 = false;                         // overrides ansatz.f0 when set
  Expression f0 = Expression::constant(0.0);
};

/// Parsed scene file.  Sections are optional; each subcommand checks for the
/// ones it needs.  `digest` fingerprints the raw bytes so reports can be tied
/// to their exact input.
struct Scene {
  std::string name;
  std::string digest;
  std::uint64_t seed = 1;
  int points = 32;
  std::map<std::string, double> tolerances;

  std::optional<geo::Splitting> splitting;
  std::optional<geo::DMetric> metric;
  std::optional<geo::NConnection> nconnection;
  std::optional<grav::AnsatzData> ansatz;
  bool ansatz_has_f = false;
  std::optional<grav::SourceSpec> source;
  std::optional<FlowSection> flowsec;
  std::optional<SolitonSection> soliton;

  double tol(const std::string& key, double fallback) const {
    auto it = tolerances.find(key);
    return it == tolerances.end() ? fallback : it->second;
  }
};

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

namespace detail {

inline const ordered_json& need(const ordered_json& j, const char* key,
                                const std::string& where) {
  auto it = j.find(key);
  if (it == j.end())
    throw SceneError("scene: missing required field '" + std::string(key) + "' in " +
                     where);
  return *it;
}

inline double number(const ordered_json& j, const std::string& where) {
  if (!j.is_number()) throw SceneError("scene: " + where + " must be a number");
  return j.get<double>();
}

inline long integer(const ordered_json& j, const std::string& where) {
  if (!j.is_number_integer()) throw SceneError("scene: " + where + " must be an integer");
  return j.get<long>();
}

inline Expression expr(const ordered_json& j, const std::set<std::string>& vars,
                       const std::string& where) {
  if (j.is_number()) return Expression::constant(j.get<double>());
  if (!j.is_string())
    throw SceneError("scene: " + where + " must be an expression string or number");
  try {
    return sym::parse(j.get<std::string>(), vars);
  } catch (const std::exception& e) {
    throw SceneError("scene: cannot parse " + where + ": " + e.what());
  }
}

inline sym::ExprMat expr_matrix(const ordered_json& j, std::size_t rows,
                                std::size_t cols, const std::set<std::string>& vars,
                                const std::string& where) {
  if (!j.is_array() || j.size() != rows)
    throw SceneError("scene: " + where + " must be a " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " array");
  sym::ExprMat out = sym::expr_mat(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols)
      throw SceneError("scene: " + where + " row " + std::to_string(r) +
                       " must have " + std::to_string(cols) + " entries");
    for (std::size_t c = 0; c < cols; ++c)
      out[r][c] = expr(j[r][c], vars,
                       where + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
  }
  return out;
}

inline geo::Splitting parse_splitting(const ordered_json& j) {
  geo::Splitting s;
  s.n = static_cast<std::size_t>(integer(need(j, "n", "splitting"), "splitting.n"));
  s.m = static_cast<std::size_t>(integer(need(j, "m", "splitting"), "splitting.m"));
  const auto& box = need(j, "box", "splitting");
  if (!box.is_array() || box.size() != s.n + s.m)
    throw SceneError("scene: splitting.box must list one [lo, hi] pair per coordinate");
  for (const auto& b : box) {
    if (!b.is_array() || b.size() != 2)
      throw SceneError("scene: splitting.box entries must be [lo, hi] pairs");
    s.box.push_back({number(b[0], "splitting.box lo"), number(b[1], "splitting.box hi")});
  }
  if (auto it = j.find("names"); it != j.end()) {
    if (!it->is_array() || it->size() != s.n + s.m)
      throw SceneError("scene: splitting.names must list every coordinate");
    for (const auto& nm : *it) s.names.push_back(nm.get<std::string>());
  } else {
    for (std::size_t i = 0; i < s.n; ++i) s.names.push_back("x" + std::to_string(i + 1));
    for (std::size_t a = 0; a < s.m; ++a)
      s.names.push_back("y" + std::to_string(s.n + a + 1));
  }
  try {
    s.validate();
  } catch (const std::exception& e) {
    throw SceneError(std::string("scene: invalid splitting: ") + e.what());
  }
  return s;
}

}  // namespace detail

/// Load and validate a scene file.  Throws SceneError for IO problems,
/// malformed JSON, and any structural or expression-level inconsistency.
inline Scene load_scene(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SceneError("cannot read scene file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();

  Scene sc;
  const auto slash = path.find_last_of("/\\");
  sc.name = slash == std::string::npos ? path : path.substr(slash + 1);
  sc.digest = hex64(fnv1a64(bytes));

  ordered_json j;
  try {
    j = ordered_json::parse(bytes);
  } catch (const std::exception& e) {
    throw SceneError("scene parse: " + std::string(e.what()));
  }
  if (!j.is_object()) throw SceneError("scene: top level must be a JSON object");

  static const std::set<std::string> known = {
      "description", "splitting", "metric", "nconnection", "ansatz",
      "source",      "flow",      "soliton", "seed",       "points",
      "tolerances"};
  for (const auto& [key, val] : j.items()) {
    (void)val;
    if (!known.count(key)) throw SceneError("scene: unknown section '" + key + "'");
  }

  if (auto it = j.find("seed"); it != j.end()) {
    if (!it->is_number_unsigned()) throw SceneError("scene: seed must be a nonnegative integer");
    sc.seed = it->get<std::uint64_t>();
  }
  if (auto it = j.find("points"); it != j.end()) {
    sc.points = static_cast<int>(detail::integer(*it, "points"));
    if (sc.points < 1) throw SceneError("scene: points must be positive");
  }
  if (auto it = j.find("tolerances"); it != j.end()) {
    if (!it->is_object()) throw SceneError("scene: tolerances must be an object");
    for (const auto& [key, val] : it->items())
      sc.tolerances[key] = detail::number(val, "tolerances." + key);
  }

  if (auto it = j.find("splitting"); it != j.end())
    sc.splitting = detail::parse_splitting(*it);

  if (auto it = j.find("metric"); it != j.end()) {
    if (!sc.splitting) throw SceneError("scene: metric requires a splitting section");
    const auto& s = *sc.splitting;
    const std::set<std::string> vars(s.names.begin(), s.names.end());
    geo::DMetric dm;
    dm.g = detail::expr_matrix(detail::need(*it, "g", "metric"), s.n, s.n, vars,
                               "metric.g");
    dm.h = detail::expr_matrix(detail::need(*it, "h", "metric"), s.m, s.m, vars,
                               "metric.h");
    sc.metric = std::move(dm);
  }

  if (auto it = j.find("nconnection"); it != j.end()) {
    if (!sc.splitting) throw SceneError("scene: nconnection requires a splitting section");
    const auto& s = *sc.splitting;
    const std::set<std::string> vars(s.names.begin(), s.names.end());
    sc.nconnection = detail::expr_matrix(detail::need(*it, "N", "nconnection"), s.n,
                                         s.m, vars, "nconnection.N");
  }

  if (auto it = j.find("ansatz"); it != j.end()) {
    if (!sc.splitting) throw SceneError("scene: ansatz requires a splitting section");
    if (sc.splitting->n != 2 || sc.splitting->m != 2)
      throw SceneError("scene: the ansatz chart must have n = 2, m = 2");
    grav::AnsatzData ad;
    ad.chart = *sc.splitting;
    const std::vector<std::string> want = {"x1", "x2", "v", "y4"};
    if (j["splitting"].contains("names")) {
      if (ad.chart.names != want)
        throw SceneError("scene: ansatz coordinates must be x1, x2, v, y4");
    } else {
      ad.chart.names = want;
    }
    const std::set<std::string> vars(want.begin(), want.end());

    if (auto f = it->find("f"); f != it->end()) {
      ad.f = detail::expr(*f, vars, "ansatz.f");
      sc.ansatz_has_f = true;
    }
    if (auto e = it->find("psi"); e != it->end())
      ad.psi = detail::expr(*e, vars, "ansatz.psi");
    if (auto e = it->find("f0"); e != it->end())
      ad.f0 = detail::expr(*e, vars, "ansatz.f0");
    if (auto e = it->find("sigma0"); e != it->end())
      ad.sigma0 = detail::expr(*e, vars, "ansatz.sigma0");
    if (auto e = it->find("h0bar"); e != it->end())
      ad.h0bar = detail::expr(*e, vars, "ansatz.h0bar");
    if (auto e = it->find("h0"); e != it->end())
      ad.h0 = detail::number(*e, "ansatz.h0");
    if (auto e = it->find("eps"); e != it->end()) {
      if (!e->is_array() || e->size() != 4)
        throw SceneError("scene: ansatz.eps must be four signs");
      for (int i = 0; i < 4; ++i)
        ad.eps[i] = static_cast<int>(detail::integer((*e)[i], "ansatz.eps"));
    }
    for (const char* fld : {"n1", "n2"}) {
      if (auto e = it->find(fld); e != it->end()) {
        if (!e->is_array() || e->size() != 2)
          throw SceneError(std::string("scene: ansatz.") + fld + " must have two entries");
        for (int i = 0; i < 2; ++i) {
          Expression parsed =
              detail::expr((*e)[i], vars, std::string("ansatz.") + fld);
          (fld[1] == '1' ? ad.n1 : ad.n2)[i] = parsed;
        }
      }
    }
    if (auto e = it->find("w_vac"); e != it->end()) {
      if (!e->is_array() || e->size() != 2)
        throw SceneError("scene: ansatz.w_vac must have two entries");
      for (int i = 0; i < 2; ++i)
        ad.w_vac[i] = detail::expr((*e)[i], vars, "ansatz.w_vac");
    }
    ad.v0 = ad.chart.box[2][0];
    if (auto e = it->find("v0"); e != it->end())
      ad.v0 = detail::number(*e, "ansatz.v0");
    try {
      ad.validate();
    } catch (const std::exception& e) {
      throw SceneError(std::string("scene: invalid ansatz: ") + e.what());
    }
    sc.ansatz = std::move(ad);
  }

  if (auto it = j.find("source"); it != j.end()) {
    const std::set<std::string> vars = {"x1", "x2", "v", "y4"};
    grav::SourceSpec src;
    if (auto e = it->find("Upsilon1"); e != it->end())
      src.Upsilon1 = detail::expr(*e, vars, "source.Upsilon1");
    if (auto e = it->find("Upsilon3"); e != it->end())
      src.Upsilon3 = detail::expr(*e, vars, "source.Upsilon3");
    if (auto e = it->find("kappa"); e != it->end())
      src.kappa = detail::number(*e, "source.kappa");
    sc.source = std::move(src);
  }

  if (auto it = j.find("flow"); it != j.end()) {
    FlowSection fs;
    fs.p = static_cast<std::size_t>(detail::integer(
        it->contains("p") ? (*it)["p"] : ordered_json(1), "flow.p"));
    fs.N = static_cast<std::size_t>(
        detail::integer(detail::need(*it, "N", "flow"), "flow.N"));
    fs.Lbox = detail::number(detail::need(*it, "Lbox", "flow"), "flow.Lbox");
    if (auto e = it->find("k"); e != it->end())
      fs.k = static_cast<int>(detail::integer(*e, "flow.k"));
    if (auto e = it->find("Rbar"); e != it->end())
      fs.Rbar = detail::number(*e, "flow.Rbar");
    fs.dt = detail::number(detail::need(*it, "dt", "flow"), "flow.dt");
    fs.steps = detail::integer(detail::need(*it, "steps", "flow"), "flow.steps");
    if (auto e = it->find("stride"); e != it->end())
      fs.stride = detail::integer(*e, "flow.stride");
    if (auto e = it->find("dealias"); e != it->end()) {
      if (!e->is_boolean()) throw SceneError("scene: flow.dealias must be a boolean");
      fs.dealias = e->get<bool>();
    }
    if (auto e = it->find("h2_variant"); e != it->end()) {
      const std::string v = e->get<std::string>();
      if (v == "printed")
        fs.h2 = flow::H2Variant::Printed;
      else if (v == "squared")
        fs.h2 = flow::H2Variant::Squared;
      else
        throw SceneError("scene: flow.h2_variant must be 'printed' or 'squared'");
    }
    const std::set<std::string> vars = {"l"};
    const auto& init = detail::need(*it, "initial", "flow");
    if (init.is_array()) {
      for (std::size_t q = 0; q < init.size(); ++q)
        fs.initial.push_back(
            detail::expr(init[q], vars, "flow.initial[" + std::to_string(q) + "]"));
    } else {
      fs.initial.push_back(detail::expr(init, vars, "flow.initial"));
    }
    if (fs.initial.size() != fs.p)
      throw SceneError("scene: flow.initial must supply one expression per component");
    sc.flowsec = std::move(fs);
  }

  if (auto it = j.find("soliton"); it != j.end()) {
    SolitonSection ss;
    ss.kappa = detail::number(detail::need(*it, "kappa", "soliton"), "soliton.kappa");
    if (auto e = it->find("eps"); e != it->end()) {
      ss.eps = static_cast<int>(detail::integer(*e, "soliton.eps"));
      if (ss.eps != 1 && ss.eps != -1)
        throw SceneError("scene: soliton.eps must be +1 or -1");
    }
    if (auto e = it->find("f0"); e != it->end()) {
      const std::set<std::string> vars = {"x1", "x2", "v", "y4"};
      ss.f0 = detail::expr(*e, vars, "soliton.f0");
      ss.has_f0 = true;
    }
    sc.soliton = std::move(ss);
  }

  return sc;
}

}  // namespace anholo::cli
