// Batch front end: parse a scene file, run one of the four workflows, and
// emit a machine-readable report plus CSV artifacts.
//
// Exit codes: 0 when the report status is pass or warn, 2 when it is fail,
// 1 for usage, IO, or scene-parse problems (nothing is written in that case
// except artifacts already flushed).

#include <anholo/report.hpp>
#include <anholo/scene.hpp>
#include <anholo/solitonic.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace {

namespace fs = std::filesystem;
using anholo::SplitMix64;
using anholo::cli::Csv;
using anholo::cli::Report;
using anholo::cli::Scene;
using anholo::cli::SceneError;
using anholo::sym::Expression;
using anholo::sym::Point;

struct RunContext {
  Scene scene;
  fs::path out;
  bool vacuum = false;
  bool override_dt = false;
  unsigned threads = 1;
};

// Index-sharded loop; results must be written to per-index slots so the
// outcome is independent of scheduling.  The first worker exception wins.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mx;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mx);
        if (!err) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned nw = static_cast<unsigned>(
      std::min<std::size_t>(threads, count));
  for (unsigned t = 0; t < nw; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

std::string ansatz_fail_code(const std::string& msg) {
  if (msg.find("f*") != std::string::npos) return "f_star_zero";
  if (msg.find("f-degeneracy") != std::string::npos) return "f_degenerate";
  if (msg.find("eps4") != std::string::npos) return "eps4_sign";
  if (msg.find("h4") != std::string::npos) return "h4_sign";
  return "ansatz_error";
}

// ---------------------------------------------------------------------------
// geometry: canonical connection, curvature, Ricci, compatibility.

Report cmd_geometry(const RunContext& ctx) {
  const Scene& sc = ctx.scene;
  if (!sc.splitting || !sc.metric || !sc.nconnection)
    throw SceneError("geometry: scene needs splitting, metric, and nconnection sections");
  const auto& s = *sc.splitting;
  const auto& dm = *sc.metric;
  const auto& N = *sc.nconnection;
  const std::size_t d = s.dim();

  anholo::geo::Frames fr(s, N);
  anholo::geo::Nonholonomy w(s, N);
  auto conn = anholo::geo::canonical_connection(s, N, dm);
  auto T = anholo::geo::torsion(s, w, conn);
  auto R = anholo::geo::curvature(s, fr, w, conn);
  auto ric = anholo::geo::ricci(s, R);
  Expression scal = anholo::geo::scalar_curvature(s, dm, ric);
  auto compat = anholo::geo::metric_compat_residual(s, fr, dm, conn);

  const std::size_t npts = static_cast<std::size_t>(sc.points);
  SplitMix64 rng(sc.seed);
  std::vector<Point> pts;
  for (std::size_t t = 0; t < npts; ++t) pts.push_back(anholo::geo::sample_point(s, rng));

  struct PointEval {
    std::vector<double> gamma, curv, ricv;
    double scal = 0.0, compat = 0.0, t_h = 0.0, t_v = 0.0;
    bool ok = true;
  };
  std::vector<PointEval> ev(npts);
  parallel_for(npts, ctx.threads, [&](std::size_t t) {
    PointEval& e = ev[t];
    const Point& p = pts[t];
    try {
      e.gamma.reserve(d * d * d);
      e.curv.reserve(d * d * d * d);
      e.ricv.reserve(d * d);
      for (std::size_t g = 0; g < d; ++g)
        for (std::size_t a = 0; a < d; ++a)
          for (std::size_t b = 0; b < d; ++b)
            e.gamma.push_back(conn.Gamma[g][a][b].eval(p));
      for (std::size_t g = 0; g < d; ++g)
        for (std::size_t de = 0; de < d; ++de)
          for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b)
              e.curv.push_back(R[g][de][a][b].eval(p));
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) e.ricv.push_back(ric[a][b].eval(p));
      e.scal = scal.eval(p);
      for (std::size_t g = 0; g < d; ++g)
        for (std::size_t a = 0; a < d; ++a)
          for (std::size_t b = 0; b < d; ++b) {
            e.compat = std::max(e.compat, std::fabs(compat[g][a][b].eval(p)));
            const double tv = std::fabs(T[g][a][b].eval(p));
            if (g < s.n)
              e.t_h = std::max(e.t_h, tv);
            else
              e.t_v = std::max(e.t_v, tv);
          }
    } catch (const anholo::sym::EvalError&) {
      e.ok = false;
    }
  });

  Report rep("geometry", sc.name, sc.digest, sc.seed);
  rep.set_tolerance("compatibility", sc.tol("compatibility", 1e-10));

  double cmax = 0.0, csum = 0.0, th = 0.0, tv = 0.0;
  double slo = 1e300, shi = -1e300;
  std::size_t nok = 0;
  for (const auto& e : ev) {
    if (!e.ok) continue;
    ++nok;
    cmax = std::max(cmax, e.compat);
    csum += e.compat;
    th = std::max(th, e.t_h);
    tv = std::max(tv, e.t_v);
    slo = std::min(slo, e.scal);
    shi = std::max(shi, e.scal);
  }
  if (nok == 0) throw SceneError("geometry: no sample point was evaluable on the box");
  if (nok < npts)
    rep.add_warning(std::to_string(npts - nok) + " sample points were not evaluable");
  rep.add_residual("compatibility", cmax, csum / static_cast<double>(nok));

  auto spread_of = [&](std::size_t count, auto pick) {
    double worst = 0.0;
    for (std::size_t idx = 0; idx < count; ++idx) {
      double lo = 1e300, hi = -1e300;
      for (const auto& e : ev) {
        if (!e.ok) continue;
        lo = std::min(lo, pick(e)[idx]);
        hi = std::max(hi, pick(e)[idx]);
      }
      worst = std::max(worst, hi - lo);
    }
    return worst;
  };
  rep.add_constant("L_spread",
                   spread_of(d * d * d, [](const PointEval& e) { return e.gamma.data(); }));
  rep.add_constant("R_blocks_spread",
                   spread_of(d * d * d * d, [](const PointEval& e) { return e.curv.data(); }));
  rep.add_constant("R_exchange_mean", 0.5 * (slo + shi));
  rep.add_constant("R_exchange_spread", shi - slo);
  rep.add_constant("torsion_h_max", th);
  rep.add_constant("torsion_v_max", tv);

  auto coord_header = [&](std::vector<std::string> head) {
    head.insert(head.begin(), "point");
    return head;
  };
  std::vector<std::string> conn_head(s.names), curv_head(s.names), ricci_head(s.names);
  for (std::size_t g = 0; g < d; ++g)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        conn_head.push_back("G_" + std::to_string(g) + "_" + std::to_string(a) + "_" +
                            std::to_string(b));
  for (std::size_t g = 0; g < d; ++g)
    for (std::size_t de = 0; de < d; ++de)
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b)
          curv_head.push_back("R_" + std::to_string(g) + "_" + std::to_string(de) + "_" +
                              std::to_string(a) + "_" + std::to_string(b));
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b)
      ricci_head.push_back("Ric_" + std::to_string(a) + "_" + std::to_string(b));
  ricci_head.push_back("scalar");

  Csv conn_csv(coord_header(conn_head));
  Csv curv_csv(coord_header(curv_head));
  Csv ricci_csv(coord_header(ricci_head));
  for (std::size_t t = 0; t < npts; ++t) {
    if (!ev[t].ok) continue;
    auto coords = [&](Csv& csv) {
      csv.cell(t);
      for (const auto& nm : s.names) csv.cell(pts[t].at(nm));
    };
    coords(conn_csv);
    for (double x : ev[t].gamma) conn_csv.cell(x);
    conn_csv.end_row();
    coords(curv_csv);
    for (double x : ev[t].curv) curv_csv.cell(x);
    curv_csv.end_row();
    coords(ricci_csv);
    for (double x : ev[t].ricv) ricci_csv.cell(x);
    ricci_csv.cell(ev[t].scal);
    ricci_csv.end_row();
  }
  anholo::cli::write_file(ctx.out / "connection_samples.csv", conn_csv.str());
  rep.add_artifact("connection_samples.csv");
  anholo::cli::write_file(ctx.out / "curvature_samples.csv", curv_csv.str());
  rep.add_artifact("curvature_samples.csv");
  anholo::cli::write_file(ctx.out / "ricci_samples.csv", ricci_csv.str());
  rep.add_artifact("ricci_samples.csv");
  return rep;
}

// ---------------------------------------------------------------------------
// generate / soliton-metric shared pieces.

void write_metric_blocks(const anholo::grav::GeneratedSolution& sol, const fs::path& out,
                         Report& rep) {
  const auto& s = sol.s;
  Csv csv({"point", "x1", "x2", "v", "y4", "g11", "g22", "h3", "h4", "w1", "w2", "n1",
           "n2", "sigma"});
  const int per_axis = 4;
  std::size_t row = 0;
  int skipped = 0;
  for (int i0 = 0; i0 < per_axis; ++i0)
    for (int i1 = 0; i1 < per_axis; ++i1)
      for (int i2 = 0; i2 < per_axis; ++i2)
        for (int i3 = 0; i3 < per_axis; ++i3) {
          Point p;
          const int idx[4] = {i0, i1, i2, i3};
          for (int c = 0; c < 4; ++c) {
            const auto& b = s.box[c];
            p[s.names[c]] = b[0] + (idx[c] + 0.5) * (b[1] - b[0]) / per_axis;
          }
          try {
            const double vals[9] = {
                sol.dm.g[0][0].eval(p), sol.dm.g[1][1].eval(p), sol.h3.eval(p),
                sol.h4.eval(p),         sol.w[0].eval(p),       sol.w[1].eval(p),
                sol.nk[0].eval(p),      sol.nk[1].eval(p),      sol.sigma.eval(p)};
            csv.cell(row);
            for (int c = 0; c < 4; ++c) csv.cell(p[s.names[c]]);
            for (double x : vals) csv.cell(x);
            csv.end_row();
          } catch (const anholo::sym::EvalError&) {
            ++skipped;
          }
          ++row;
        }
  if (skipped > 0)
    rep.add_warning(std::to_string(skipped) + " grid nodes were not evaluable");
  anholo::cli::write_file(out / "metric_blocks.csv", csv.str());
  rep.add_artifact("metric_blocks.csv");
}

double component_mean(const anholo::grav::EinsteinReport& er) {
  double sum = 0.0;
  for (const auto& rowv : er.component)
    for (double x : rowv) sum += x;
  return sum / 16.0;
}

void report_lc_constraints(const anholo::grav::GeneratedSolution& sol,
                           const anholo::grav::SourceSpec& src, const Scene& sc,
                           Report& rep) {
  auto lc = anholo::grav::lc_constraint_residual(sol, src, sc.points, sc.seed + 1);
  rep.add_constant("lc_r_phi", lc.r_phi);
  rep.add_constant("lc_r_w", lc.r_w);
  rep.add_constant("lc_r_n", lc.r_n);
  if (lc.phi_degenerate) rep.add_constant("lc_phi_degenerate", 1.0);
  for (const auto& m : lc.warnings) rep.add_warning(m);
}

Report cmd_generate(const RunContext& ctx) {
  const Scene& sc = ctx.scene;
  if (!sc.ansatz) throw SceneError("generate: scene needs an ansatz section");
  if (!sc.ansatz_has_f) throw SceneError("generate: ansatz.f is required");
  anholo::grav::SourceSpec src;
  if (!ctx.vacuum) {
    if (!sc.source)
      throw SceneError("generate: sourced mode needs a source section (or pass --vacuum)");
    src = *sc.source;
  }

  Report rep("generate", sc.name, sc.digest, sc.seed);
  rep.add_constant("mode", std::string(ctx.vacuum ? "vacuum" : "sourced"));

  anholo::grav::GeneratedSolution sol;
  try {
    sol = anholo::grav::generate_solution(*sc.ansatz, src, ctx.vacuum);
  } catch (const anholo::grav::AnsatzError& e) {
    rep.hard_fail(ansatz_fail_code(e.what()));
    rep.add_warning(e.what());
    return rep;
  }
  for (const auto& m : sol.warnings) rep.add_warning(m);

  if (ctx.vacuum) {
    rep.set_tolerance("einstein", sc.tol("einstein", 1e-7));
    auto er = anholo::grav::einstein_residual(sol, src, sc.points, sc.seed);
    rep.add_residual("einstein", er.max_residual, component_mean(er));
    rep.add_constant("psi_residual", er.psi_residual);
    for (const auto& m : er.warnings) rep.add_warning(m);
  } else {
    rep.set_tolerance("source_pattern", sc.tol("source_pattern", 1e-6));
    rep.set_tolerance("c1_spread", sc.tol("c1_spread", 1e-6));
    rep.set_tolerance("c3_spread", sc.tol("c3_spread", 1e-6));

    anholo::geo::Frames fr(sol.s, sol.N);
    anholo::geo::Nonholonomy w(sol.s, sol.N);
    auto conn = anholo::geo::canonical_connection(sol.s, sol.N, sol.dm);
    auto R = anholo::geo::curvature(sol.s, fr, w, conn);
    auto ric = anholo::geo::ricci(sol.s, R);
    auto ginv = anholo::sym::inverse(sol.dm.g);
    auto hinv = anholo::sym::inverse(sol.dm.h);
    const Expression den3e =
        Expression::constant(src.kappa) * anholo::sym::exp(-sol.input.psi) *
        (Expression::constant(static_cast<double>(sol.input.eps[0])) *
             sol.input.psi.diff("x1").diff("x1") +
         Expression::constant(static_cast<double>(sol.input.eps[1])) *
             sol.input.psi.diff("x2").diff("x2"));
    const Expression psi_res =
        Expression::constant(static_cast<double>(sol.input.eps[0])) *
            sol.input.psi.diff("x1").diff("x1") +
        Expression::constant(static_cast<double>(sol.input.eps[1])) *
            sol.input.psi.diff("x2").diff("x2") -
        src.Upsilon3;

    SplitMix64 rng(sc.seed);
    double pat_max = 0.0, pat_sum = 0.0, psi_max = 0.0;
    std::vector<double> c1s, c3s;
    int nok = 0;
    for (int t = 0; t < sc.points; ++t) {
      Point p = anholo::geo::sample_point(sol.s, rng);
      try {
        double up[4][4];
        for (int b = 0; b < 4; ++b) {
          for (int i = 0; i < 2; ++i)
            up[i][b] = ginv[i][0].eval(p) * ric[0][b].eval(p) +
                       ginv[i][1].eval(p) * ric[1][b].eval(p);
          for (int a = 0; a < 2; ++a)
            up[2 + a][b] = hinv[a][0].eval(p) * ric[2][b].eval(p) +
                           hinv[a][1].eval(p) * ric[3][b].eval(p);
        }
        const double trace = up[0][0] + up[1][1] + up[2][2] + up[3][3];
        double G[4][4];
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b)
            G[a][b] = up[a][b] - (a == b ? 0.5 * trace : 0.0);
        double pat = std::max(std::fabs(G[0][0] - G[1][1]), std::fabs(G[2][2] - G[3][3]));
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b)
            if (a != b) pat = std::max(pat, std::fabs(G[a][b]));
        pat_max = std::max(pat_max, pat);
        pat_sum += pat;
        ++nok;
        const double den1 = src.kappa * src.Upsilon1.eval(p);
        if (std::fabs(den1) > 1e-12) c1s.push_back(G[0][0] / den1);
        const double den3 = den3e.eval(p);
        if (std::fabs(den3) > 1e-12) c3s.push_back(G[2][2] / den3);
        psi_max = std::max(psi_max, std::fabs(psi_res.eval(p)));
      } catch (const anholo::sym::EvalError& e) {
        rep.add_warning(std::string("skipped point: ") + e.what());
      }
    }
    if (nok == 0) throw SceneError("generate: no sample point was evaluable on the box");
    rep.add_residual("source_pattern", pat_max, pat_sum / nok);
    auto measure = [&](const char* name, const char* spread_name,
                       const std::vector<double>& samples) {
      if (samples.empty()) {
        rep.add_residual(spread_name, 0.0, 0.0);
        return;
      }
      double lo = samples[0], hi = samples[0], sum = 0.0;
      for (double x : samples) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        sum += x;
      }
      rep.add_constant(name, sum / static_cast<double>(samples.size()));
      rep.add_residual(spread_name, hi - lo, hi - lo);
    };
    measure("convention_c1", "c1_spread", c1s);
    measure("convention_c3", "c3_spread", c3s);
    rep.add_constant("psi_residual", psi_max);
  }

  report_lc_constraints(sol, src, sc, rep);
  write_metric_blocks(sol, ctx.out, rep);
  return rep;
}

// ---------------------------------------------------------------------------
// flow: hierarchy evolution with conservation tracking.

Report cmd_flow(const RunContext& ctx) {
  const Scene& sc = ctx.scene;
  if (!sc.flowsec) throw SceneError("flow: scene needs a flow section");
  const auto& fsec = *sc.flowsec;

  namespace fl = anholo::flow;
  fl::CurveField v0 = fl::field_from_expr(fsec.initial, fsec.N, fsec.Lbox);
  fl::FlowState st{v0, 0.0, fsec.Rbar};
  fl::HierarchyConfig cfg;
  cfg.k = fsec.k;
  cfg.dt = fsec.dt;
  cfg.steps = fsec.steps;
  cfg.stride = fsec.stride;
  cfg.override_dt = ctx.override_dt;
  cfg.dealias = fsec.dealias;
  cfg.h2 = fsec.h2;

  // StabilityError propagates: refusing to run is a usage-level outcome.
  fl::Trajectory traj = fl::evolve(st, cfg);

  Report rep("flow", sc.name, sc.digest, sc.seed);
  rep.set_tolerance("H0_drift", sc.tol("H0_drift", 1e-8));
  rep.set_tolerance("H1_drift", sc.tol("H1_drift", 1e-6));
  rep.add_constant("dt_bound", fl::dt_bound(v0.dl(), cfg.k));
  rep.add_constant("final_tau", traj.snaps.back().tau);

  const auto& Hi = traj.snaps.front().H;
  double d0 = 0.0, d1 = 0.0, dsq = 0.0, dpr = 0.0;
  double s0 = 0.0, s1 = 0.0;
  const double scale2 = std::fabs(Hi.H2_squared) + std::fabs(Hi.H2_printed) + 1e-30;
  for (const auto& snap : traj.snaps) {
    d0 = std::max(d0, std::fabs(snap.H.H0 - Hi.H0) / (std::fabs(Hi.H0) + 1e-30));
    d1 = std::max(d1, std::fabs(snap.H.H1 - Hi.H1) / (std::fabs(Hi.H1) + 1e-30));
    dsq = std::max(dsq, std::fabs(snap.H.H2_squared - Hi.H2_squared) / scale2);
    dpr = std::max(dpr, std::fabs(snap.H.H2_printed - Hi.H2_printed) / scale2);
    s0 += std::fabs(snap.H.H0 - Hi.H0) / (std::fabs(Hi.H0) + 1e-30);
    s1 += std::fabs(snap.H.H1 - Hi.H1) / (std::fabs(Hi.H1) + 1e-30);
  }
  const double ns = static_cast<double>(traj.snaps.size());
  rep.add_residual("H0_drift", d0, s0 / ns);
  rep.add_residual("H1_drift", d1, s1 / ns);
  rep.add_constant("H2_drift_squared", dsq);
  rep.add_constant("H2_drift_printed", dpr);
  rep.add_constant("H2_conserved_variant", std::string(dsq <= dpr ? "squared" : "printed"));
  if (traj.blew_up) rep.hard_fail("blow_up");

  std::vector<std::string> thead = {"snapshot", "tau", "j", "l"};
  for (std::size_t q = 0; q < v0.p; ++q) thead.push_back("v" + std::to_string(q));
  Csv tcsv(thead);
  for (std::size_t sidx = 0; sidx < traj.snaps.size(); ++sidx) {
    const auto& snap = traj.snaps[sidx];
    for (std::size_t j = 0; j < snap.v.N; ++j) {
      tcsv.cell(sidx).cell(snap.tau).cell(j).cell(snap.v.node(j));
      for (std::size_t q = 0; q < snap.v.p; ++q) tcsv.cell(snap.v.comp[q][j]);
      tcsv.end_row();
    }
  }
  anholo::cli::write_file(ctx.out / "trajectory.csv", tcsv.str());
  rep.add_artifact("trajectory.csv");

  Csv hcsv({"snapshot", "tau", "H0", "H1", "H2", "H2_printed", "H2_squared"});
  for (std::size_t sidx = 0; sidx < traj.snaps.size(); ++sidx) {
    const auto& snap = traj.snaps[sidx];
    hcsv.cell(sidx).cell(snap.tau).cell(snap.H.H0).cell(snap.H.H1).cell(snap.H.H2);
    hcsv.cell(snap.H.H2_printed).cell(snap.H.H2_squared);
    hcsv.end_row();
  }
  anholo::cli::write_file(ctx.out / "hamiltonians.csv", hcsv.str());
  rep.add_artifact("hamiltonians.csv");
  return rep;
}

// ---------------------------------------------------------------------------
// soliton-metric: line-soliton vertical block through the vacuum generator.

Report cmd_soliton_metric(const RunContext& ctx) {
  const Scene& sc = ctx.scene;
  if (!sc.soliton) throw SceneError("soliton-metric: scene needs a soliton section");
  if (!sc.ansatz)
    throw SceneError("soliton-metric: scene needs an ansatz section for the chart and signs");
  const auto& ss = *sc.soliton;
  const double kap = ss.kappa;

  const Expression v = Expression::variable("v");
  const Expression x2 = Expression::variable("x2");
  const Expression arg =
      Expression::constant(kap) * (v - Expression::constant(4.0 * kap * kap) * x2);
  const Expression ch =
      (anholo::sym::exp(arg) + anholo::sym::exp(-arg)) * Expression::constant(0.5);
  const Expression h4 = Expression::constant(2.0 * kap * kap) / (ch * ch);

  Report rep("soliton-metric", sc.name, sc.digest, sc.seed);
  rep.add_constant("kappa", kap);
  rep.set_tolerance("solit1", sc.tol("solit1", 1e-8));
  rep.set_tolerance("einstein", sc.tol("einstein", 1e-6));

  const auto& chart = sc.ansatz->chart;
  const std::array<std::array<double, 2>, 3> box3 = {chart.box[0], chart.box[1],
                                                     chart.box[2]};
  const double s1 = anholo::grav::solit1_residual(h4, ss.eps, box3, sc.points, sc.seed);
  rep.add_residual("solit1", s1, s1);

  anholo::grav::AnsatzData ad = *sc.ansatz;
  if (ss.has_f0) ad.f0 = ss.f0;
  anholo::grav::GeneratedSolution sol;
  try {
    sol = anholo::grav::solitonic_metric(h4, ad);
  } catch (const anholo::grav::AnsatzError& e) {
    rep.hard_fail(ansatz_fail_code(e.what()));
    rep.add_warning(e.what());
    return rep;
  }
  for (const auto& m : sol.warnings) rep.add_warning(m);

  auto er = anholo::grav::einstein_residual(sol, anholo::grav::SourceSpec{}, sc.points,
                                            sc.seed);
  rep.add_residual("einstein", er.max_residual, component_mean(er));
  for (const auto& m : er.warnings) rep.add_warning(m);
  report_lc_constraints(sol, anholo::grav::SourceSpec{}, sc, rep);
  write_metric_blocks(sol, ctx.out, rep);
  return rep;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"N-adapted geometry, exact-solution generation, and curve flows"};
  app.require_subcommand(1);

  std::string scene_path, out_dir;
  bool vacuum = false, override_dt = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--scene", scene_path, "scene JSON file")->required();
    sub->add_option("--out", out_dir, "output directory for the report and CSV artifacts")
        ->required();
  };
  CLI::App* cg = app.add_subcommand(
      "geometry", "connection, curvature, and compatibility of a split metric");
  add_common(cg);
  CLI::App* cn = app.add_subcommand(
      "generate", "build and verify an exact-solution family from ansatz data");
  add_common(cn);
  cn->add_flag("--vacuum", vacuum, "zero sources; polarization fixed to 1");
  CLI::App* cf = app.add_subcommand("flow", "evolve a hierarchy flow and track its integrals");
  add_common(cf);
  cf->add_flag("--override-dt", override_dt,
               "run even when dt exceeds the stability bound");
  CLI::App* cs = app.add_subcommand(
      "soliton-metric", "line-soliton vertical block fed through the vacuum generator");
  add_common(cs);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  unsigned threads = std::thread::hardware_concurrency();
  if (threads == 0) threads = 1;
  if (const char* tenv = std::getenv("TOOL_THREADS")) {
    char* end = nullptr;
    const long t = std::strtol(tenv, &end, 10);
    if (end != tenv && *end == '\0' && t >= 1)
      threads = static_cast<unsigned>(std::min(t, 256L));
    else
      std::cerr << "warning: ignoring invalid TOOL_THREADS value\n";
  }

  try {
    RunContext ctx{anholo::cli::load_scene(scene_path), fs::path(out_dir), vacuum,
                   override_dt, threads};
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (ec) throw anholo::cli::IoError("cannot create output directory: " + ctx.out.string());

    Report rep = [&] {
      if (cg->parsed()) return cmd_geometry(ctx);
      if (cn->parsed()) return cmd_generate(ctx);
      if (cf->parsed()) return cmd_flow(ctx);
      return cmd_soliton_metric(ctx);
    }();
    anholo::cli::write_file(ctx.out / "report.json", rep.json());
    std::cout << rep.status() << "\n";
    return rep.exit_code();
  } catch (const anholo::cli::SceneError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const anholo::cli::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const anholo::flow::StabilityError& e) {
    std::cerr << "error: " << e.what() << " (use --override-dt to force)\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
