// Acceptance runner: one PASS/FAIL line per criterion.
//
// Criteria 1, 2 and 4 run in process. The rest read the artifacts of the
// full command-line pipeline (run twice for the determinism check).

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <sys/wait.h>

#include "CLI11.hpp"

#include "artifacts.hpp"
#include "eqtariff/agent_model.hpp"
#include "eqtariff/rnn.hpp"
#include "gradcheck.hpp"

using namespace eqtariff;
using namespace eqtariff::cli;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << x;
  return s.str();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// Pipeline driver

struct Pipeline {
  fs::path root;
  std::map<std::string, int> exit_codes;
  std::map<std::string, double> seconds;

  fs::path data() const { return root / "data"; }
  fs::path models() const { return root / "models"; }
  fs::path design(const std::string& kind) const { return root / "design" / kind; }
  fs::path validation(const std::string& kind) const { return root / "validate" / kind; }
  fs::path mc(const std::string& scale) const { return root / "mc" / scale; }
  bool ok(const std::string& step) const {
    const auto it = exit_codes.find(step);
    return it != exit_codes.end() && it->second == 0;
  }
};

const std::vector<std::string> kKinds = {"tariff_design", "dr_event", "price_surge"};

int run_step(Pipeline& p, const std::string& cli, const std::string& step, const std::string& args,
             unsigned threads) {
  fs::create_directories(p.root / "logs");
  const std::string cmd = cli + " --threads " + std::to_string(threads) + " " + args + " > " +
                          (p.root / "logs" / (step + ".log")).string() + " 2>&1";
  const auto t0 = Clock::now();
  const int status = std::system(cmd.c_str());
  p.seconds[step] = since(t0);
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  p.exit_codes[step] = code;
  std::cout << "  [" << p.root.filename().string() << "] " << step << ": exit " << code << " in "
            << fmt(p.seconds[step], 3) << " s" << std::endl;
  return code;
}

Pipeline run_pipeline(const fs::path& root, const std::string& cli, unsigned threads) {
  fs::remove_all(root);
  Pipeline p{root, {}, {}};
  const auto q = [](const fs::path& path) { return "'" + path.string() + "'"; };
  if (run_step(p, cli, "synth", "synth --out " + q(p.data()), threads) != 0) return p;
  if (run_step(p, cli, "train", "train --data " + q(p.data()) + " --out " + q(p.models()), threads) != 0) return p;
  for (const auto& kind : kKinds) {
    run_step(p, cli, "optimize_" + kind,
             "optimize --models " + q(p.models()) + " --kind " + kind + " --out " + q(p.design(kind)), threads);
    if (!fs::exists(p.design(kind) / "result.json")) continue;
    run_step(p, cli, "validate_" + kind,
             "validate --result " + q(p.design(kind)) + " --out " + q(p.validation(kind)), threads);
  }
  if (fs::exists(p.design("dr_event") / "result.json")) {
    run_step(p, cli, "mc_scale1",
             "mc --result " + q(p.design("dr_event")) + " --variance-scale 1 --out " + q(p.mc("scale1")), threads);
    run_step(p, cli, "mc_scale2",
             "mc --result " + q(p.design("dr_event")) + " --variance-scale 2 --out " + q(p.mc("scale2")), threads);
  }
  return p;
}

std::vector<std::vector<std::string>> read_rows(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw StateError("'" + path.string() + "' is missing");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw StateError("no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

// ---------------------------------------------------------------------------
// In-process criteria

Consumer random_consumer(std::mt19937_64& rng, std::size_t T) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FlexParams f;
  f.c1 = 0.1 + 2.0 * u(rng);
  f.c2 = 0.1 + 2.0 * u(rng);
  for (std::size_t t = 0; t < T; ++t) {
    f.shift_lo.push_back(-0.3 * u(rng));
    f.shift_hi.push_back(0.3 * u(rng));
    f.reduce_lo.push_back(-0.3 * u(rng));
    f.reduce_hi.push_back(0.1 * u(rng));
  }
  std::vector<double> base(T);
  for (auto& b : base) b = 0.5 + 1.5 * u(rng);
  return Consumer(0, 1000.0, DemandProfile(std::move(base)), std::move(f));
}

Verdict criterion_agent() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double kkt_tol = 1e-8;
  double worst_gap = -1e300, worst_kkt = 0.0;
  int beaten = 0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t T = 1 + static_cast<std::size_t>(k % 3);
    const auto c = random_consumer(rng, T);
    std::vector<double> pv(T);
    for (auto& x : pv) x = u(rng);
    const PriceProfile p(pv);
    const auto exact = solve_response(c, p);
    const auto grid = brute_force_response(c, p, 0.01);
    // The grid holds only feasible points, so the exact optimum can be no worse.
    const double gap = exact.objective - grid.objective;
    worst_gap = std::max(worst_gap, gap);
    if (gap > 1e-12) ++beaten;

    const auto& f = c.flex();
    double sum_s = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      sum_s += exact.d_s[t];
      if (exact.d_r[t] > f.reduce_lo[t] && exact.d_r[t] < f.reduce_hi[t]) {
        worst_kkt = std::max(worst_kkt, std::abs(p[t] + 2.0 * f.c1 * exact.d_r[t]));
      }
      if (exact.d_s[t] > f.shift_lo[t] && exact.d_s[t] < f.shift_hi[t]) {
        worst_kkt = std::max(worst_kkt, std::abs(p[t] + exact.nu + 2.0 * f.c2 * exact.d_s[t]));
      }
    }
    worst_kkt = std::max(worst_kkt, std::abs(sum_s));
  }
  return {beaten == 0 && worst_kkt <= kkt_tol,
          "1000 instances; max(exact - grid) = " + fmt(worst_gap) + ", instances beaten by grid = " +
              std::to_string(beaten) + ", max KKT residual = " + fmt(worst_kkt)};
}

Verdict criterion_rnn_gradients() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> width(2, 12);
  std::uniform_int_distribution<int> act(0, 1);
  const std::size_t T = 24;
  double worst_param = 0.0, worst_jac = 0.0;
  std::size_t checked = 0, skipped = 0, redrawn = 0;
  for (int k = 0; k < 100; ++k) {
    const auto a0 = act(rng) ? Activation::Selu : Activation::Relu;
    const auto a1 = act(rng) ? Activation::Selu : Activation::Relu;
    RnnModel m(k == 0 ? std::vector<std::size_t>{10, 10}
                      : std::vector<std::size_t>{static_cast<std::size_t>(width(rng)), static_cast<std::size_t>(width(rng))},
               {a0, a1});
    m.init_uniform(static_cast<std::uint64_t>(1000 + k));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t t = 0; t < T; ++t) {
      m.norm.price_mean.push_back(0.02 + 0.1 * u(rng));
      m.norm.price_std.push_back(0.01 + 0.05 * u(rng));
      m.norm.dd_mean.push_back(0.1 * (u(rng) - 0.5));
      m.norm.dd_std.push_back(0.01 + 0.2 * u(rng));
    }
    std::vector<double> pv(T), dv(T);
    for (;;) {
      for (auto& x : pv) x = 0.01 + 0.2 * u(rng);
      if (gradcheck::smooth_point(m, pv)) break;
      ++redrawn;
    }
    for (auto& x : dv) x = 0.4 * (u(rng) - 0.5);
    const PriceProfile p(pv);
    const auto g = gradcheck::check_param_gradient(m, p, DemandProfile::change(dv));
    const auto j = gradcheck::check_input_jacobian(m, p);
    worst_param = std::max(worst_param, g.max_rel);
    worst_jac = std::max(worst_jac, j.max_rel);
    checked += g.checked + j.checked;
    skipped += g.skipped + j.skipped;
  }
  return {worst_param <= 1e-5 && worst_jac <= 1e-5 && checked > 10 * skipped,
          "100 models; max rel err param_gradient = " + fmt(worst_param) + ", input_jacobian = " + fmt(worst_jac) +
              " (" + std::to_string(checked) + " coordinates, " + std::to_string(skipped) + " coordinates skipped; " +
              std::to_string(redrawn) + " inputs redrawn for a kink margin below " + fmt(gradcheck::kSmoothMargin) + ")"};
}

Verdict criterion_barrier_gradient(const Pipeline& a) {
  const auto pop = load_population(a.data() / "population.json");
  std::vector<RnnModel> models;
  for (std::size_t n = 1; n <= pop.groups.size(); ++n) {
    models.push_back(load_model(a.models() / ("group_" + std::to_string(n) + ".json")));
  }
  std::vector<const DemandResponseModel*> ptrs;
  for (const auto& m : models) ptrs.push_back(&m);
  const auto result = read_json_file(a.design("dr_event") / "result.json");
  const auto cfg = scenario_config_from_json(result.at("config"));
  const TariffProblem problem(pop, ptrs, pop.reference_price, cfg);
  const auto start = phase1_initialize(problem).x;

  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> jitter(0.9, 1.1);
  double worst = 0.0;
  std::size_t checked = 0, skipped = 0;
  int points = 0, tries = 0;
  while (points < 100 && tries < 10000) {
    ++tries;
    Eigen::VectorXd x = start;
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] *= jitter(rng);
    if (!problem.slacks(problem.evaluate(x, false)).interior()) continue;
    bool smooth = true;
    for (std::size_t n = 0; n < models.size() && smooth; ++n) {
      const auto T = static_cast<Eigen::Index>(problem.horizon());
      const Eigen::VectorXd slice = x.segment(static_cast<Eigen::Index>(n) * T, T);
      smooth = gradcheck::smooth_point(models[n], std::span<const double>(slice.data(), slice.size()));
    }
    if (!smooth) continue;
    const double mu = std::pow(10.0, points % 4);
    const auto o = gradcheck::check_barrier_gradient(problem, x, mu, GradientMode::FullJacobian);
    worst = std::max(worst, o.max_rel);
    checked += o.checked;
    skipped += o.skipped;
    ++points;
  }
  return {points == 100 && worst <= 1e-5,
          std::to_string(points) + " interior points on the trained models; max rel err = " + fmt(worst) + " (" +
              std::to_string(checked) + " coordinates, " + std::to_string(skipped) + " coordinates skipped)"};
}

// ---------------------------------------------------------------------------
// Pipeline criteria

Verdict criterion_identification(const Pipeline& a) {
  if (!a.ok("train")) return {false, "train step exited " + std::to_string(a.exit_codes.at("train"))};
  const auto manifest = read_manifest(a.data());
  const auto models_manifest = read_manifest(a.models());
  const auto& train_cfg = models_manifest.at("config").at("train");
  const std::size_t days = manifest.at("dataset").at("days").get<std::size_t>();
  const auto rows = read_rows(a.models() / "training_report.csv");
  const std::size_t c_val = column(rows[0], "val_mse");
  double worst = 0.0;
  for (std::size_t r = 1; r < rows.size(); ++r) worst = std::max(worst, std::stod(rows[r][c_val]));
  const std::size_t groups = rows.size() - 1;
  const bool setup = groups == 10 && days >= 500 && train_cfg.at("hidden") == json::array({10, 10}) &&
                     train_cfg.at("learning_rate").get<double>() == 1e-4;
  const double secs = a.seconds.at("train");
  return {setup && worst <= 2e-3 && secs <= 600.0,
          std::to_string(groups) + " groups, " + std::to_string(days) + " days, hidden " + train_cfg.at("hidden").dump() +
              ", lr " + fmt(train_cfg.at("learning_rate").get<double>()) + "; worst normalized val MSE = " +
              fmt(worst) + " (limit 2e-3), training " + fmt(secs, 3) + " s (limit 600)"};
}

Verdict criterion_interior(const Pipeline& a) {
  std::size_t rows_checked = 0, bad_slack = 0, increases = 0, runs = 0;
  for (const auto& kind : kKinds) {
    const auto path = a.design(kind) / "trace.csv";
    if (!fs::exists(path)) continue;
    ++runs;
    const auto rows = read_rows(path);
    const auto& h = rows[0];
    const std::size_t c_outer = column(h, "outer"), c_inner = column(h, "inner"), c_bar = column(h, "barrier");
    std::vector<std::size_t> slack_cols = {column(h, "slack_revenue"), column(h, "min_price"), column(h, "min_headroom")};
    for (std::size_t c = 0; c < h.size(); ++c) {
      if (h[c].rfind("slack_peak_", 0) == 0) slack_cols.push_back(c);
    }
    for (std::size_t r = 1; r < rows.size(); ++r) {
      ++rows_checked;
      for (std::size_t c : slack_cols) {
        if (!(std::stod(rows[r][c]) > 0.0)) ++bad_slack;
      }
      if (r > 1 && std::stoi(rows[r][c_inner]) > 0 && rows[r][c_outer] == rows[r - 1][c_outer] &&
          std::stod(rows[r][c_bar]) > std::stod(rows[r - 1][c_bar])) {
        ++increases;
      }
    }
  }
  return {runs == kKinds.size() && rows_checked > 0 && bad_slack == 0 && increases == 0,
          std::to_string(runs) + " runs, " + std::to_string(rows_checked) + " iterates; non-positive slacks = " +
              std::to_string(bad_slack) + ", F0 increases within an inner loop = " + std::to_string(increases)};
}

Verdict criterion_dr(const Pipeline& a) {
  if (!fs::exists(a.validation("dr_event") / "validation.json")) return {false, "dr_event run produced no validation"};
  const auto result = read_json_file(a.design("dr_event") / "result.json");
  const auto val = read_json_file(a.validation("dr_event") / "validation.json");
  const bool converged = result.at("converged").get<bool>();
  const double beta = result.at("config").at("beta").get<double>();
  const auto& peaks = val.at("peaks");
  int predicted_ok = 0, tested_budget = 0, tested_strict = 0;
  std::string per_hour;
  for (const auto& pk : peaks) {
    const double cap = pk.at("cap").get<double>(), base = pk.at("baseline").get<double>();
    const double pred = pk.at("predicted").get<double>(), tested = pk.at("tested").get<double>();
    if (pred <= cap * (1.0 + 1e-6)) ++predicted_ok;
    if (tested <= cap * 1.15) ++tested_budget;
    if (tested <= cap) ++tested_strict;
    per_hour += " h" + std::to_string(pk.at("hour").get<int>()) + " " + fmt(100.0 * (1.0 - pred / base), 3) + "/" +
                fmt(100.0 * (1.0 - tested / base), 3) + "%";
  }
  const double secs = a.seconds.at("optimize_dr_event");
  const bool setup = peaks.size() == 4 && beta == 0.02;
  return {setup && converged && predicted_ok == 4 && tested_budget >= 3 && secs <= 300.0,
          "beta " + fmt(beta) + ", k " + std::to_string(peaks.size()) + ", converged " + (converged ? "yes" : "no") +
              "; reductions predicted/tested:" + per_hour + "; predicted within cap at " +
              std::to_string(predicted_ok) + "/4, tested within 15% budget at " + std::to_string(tested_budget) +
              "/4 (strictly at cap at " + std::to_string(tested_strict) + "/4); solve " + fmt(secs, 3) +
              " s (limit 300)"};
}

Verdict criterion_equity(const Pipeline& a) {
  if (!fs::exists(a.validation("tariff_design") / "validation.json")) return {false, "no tariff_design validation"};
  const auto val = read_json_file(a.validation("tariff_design") / "validation.json");
  const double cap = read_json_file(a.design("tariff_design") / "result.json").at("config").at("energy_burden_cap").get<double>();
  double hinge_base = 0.0, hinge_design = 0.0;
  int above = 0, lowered = 0;
  for (const auto& g : val.at("groups")) {
    const double b = g.at("baseline_burden").get<double>(), p = g.at("predicted_burden").get<double>();
    hinge_base += std::pow(hinge(b - cap), 2);
    hinge_design += std::pow(hinge(p - cap), 2);
    if (b > cap) {
      ++above;
      if (p < b) ++lowered;
    }
  }
  const double reduction = hinge_base > 0.0 ? 1.0 - hinge_design / hinge_base : 0.0;
  return {above > 0 && lowered == above && reduction >= 0.5,
          std::to_string(above) + " groups above the cap, " + std::to_string(lowered) +
              " lowered; hinge sum " + fmt(hinge_base) + " -> " + fmt(hinge_design) + " (" +
              fmt(100.0 * reduction, 3) + "% reduction, need >= 50%)"};
}

Verdict criterion_revenue(const Pipeline& a) {
  int converged = 0, ok = 0;
  std::string detail;
  for (const auto& kind : kKinds) {
    const auto rpath = a.design(kind) / "result.json", vpath = a.validation(kind) / "validation.json";
    if (!fs::exists(rpath) || !fs::exists(vpath)) continue;
    if (!read_json_file(rpath).at("converged").get<bool>()) continue;
    ++converged;
    const double margin = read_json_file(vpath).at("tested_revenue_margin").get<double>();
    if (margin >= -0.02) ++ok;
    detail += " " + kind + " " + fmt(100.0 * margin, 3) + "%";
  }
  return {converged == static_cast<int>(kKinds.size()) && ok == converged,
          std::to_string(converged) + " converged runs; tested revenue vs requirement:" + detail +
              " (need >= -2%; reference surplus band +4.5..+5.5% not asserted)"};
}

Verdict criterion_surge(const Pipeline& a) {
  if (!fs::exists(a.validation("price_surge") / "validation.json") ||
      !fs::exists(a.validation("tariff_design") / "validation.json")) {
    return {false, "surge or no-surge validation missing"};
  }
  const auto result = read_json_file(a.design("price_surge") / "result.json");
  const auto surge_val = read_json_file(a.validation("price_surge") / "validation.json");
  const auto plain_val = read_json_file(a.validation("tariff_design") / "validation.json");
  const auto wholesale = result.at("wholesale").get<std::vector<double>>();
  const auto prices = result.at("prices").get<std::vector<std::vector<double>>>();
  const auto hours = result.at("config").at("surge").at("hours").get<std::vector<std::size_t>>();  // 1-based
  const std::size_t N = prices.size();

  bool tariffs_ok = true;
  std::string tariff_detail;
  for (std::size_t n : {N - 2, N - 1}) {
    for (std::size_t h : hours) {
      const double p = prices[n][h - 1], w = wholesale[h - 1];
      if (p > w) tariffs_ok = false;
      tariff_detail += " g" + std::to_string(n + 1) + "@h" + std::to_string(h) + " " + fmt(p, 6) + (p > w ? ">" : "<=") +
                       fmt(w, 6);
    }
  }
  auto increase = [&](std::size_t n) {
    return surge_val.at("groups")[n].at("tested_burden").get<double>() -
           plain_val.at("groups")[n].at("tested_burden").get<double>();
  };
  const double bottom = std::max(increase(N - 2), increase(N - 1));
  const double top = std::min(increase(0), increase(1));
  return {tariffs_ok && bottom <= top,
          "tariffs vs surged wholesale:" + tariff_detail + "; tested burden increase g1 " + fmt(increase(0)) + ", g2 " +
              fmt(increase(1)) + ", g" + std::to_string(N - 1) + " " + fmt(increase(N - 2)) + ", g" +
              std::to_string(N) + " " + fmt(increase(N - 1))};
}

Verdict criterion_reliability(const Pipeline& a) {
  if (!fs::exists(a.mc("scale1") / "reliability.csv") || !fs::exists(a.mc("scale2") / "reliability.csv")) {
    return {false, "Monte-Carlo outputs missing"};
  }
  const bool converged = read_json_file(a.design("dr_event") / "result.json").at("converged").get<bool>();
  const auto one = read_rows(a.mc("scale1") / "reliability.csv");
  const auto two = read_rows(a.mc("scale2") / "reliability.csv");
  const std::size_t c_rate = column(one[0], "success_rate"), c_trials = column(one[0], "trials");
  bool high = true, monotone = one.size() == two.size(), trials = true;
  std::string detail;
  for (std::size_t r = 1; r < one.size() && r < two.size(); ++r) {
    const double s1 = std::stod(one[r][c_rate]), s2 = std::stod(two[r][c_rate]);
    high = high && s1 >= 0.95;
    monotone = monotone && s2 <= s1;
    trials = trials && std::stod(one[r][c_trials]) == 10000.0;
    detail += " h" + one[r][0] + " " + fmt(100.0 * s1, 4) + "%/" + fmt(100.0 * s2, 4) + "%";
  }
  return {converged && high && monotone && trials && one.size() > 1,
          "success at variance x1/x2:" + detail + " (10000 trials, need >= 95% and non-increasing)"};
}

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root);
    if (e.path().filename() == "timings.csv" || *rel.begin() == "logs") continue;
    out.push_back(rel);
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool same_bytes(const fs::path& x, const fs::path& y) {
  std::ifstream a(x, std::ios::binary), b(y, std::ios::binary);
  return std::equal(std::istreambuf_iterator<char>(a), std::istreambuf_iterator<char>(),
                    std::istreambuf_iterator<char>(b), std::istreambuf_iterator<char>());
}

Verdict criterion_determinism(const Pipeline& a, const Pipeline& b) {
  if (a.exit_codes != b.exit_codes) return {false, "step exit codes differ between runs"};
  const auto fa = files_under(a.root), fb = files_under(b.root);
  if (fa != fb) return {false, "file lists differ (" + std::to_string(fa.size()) + " vs " + std::to_string(fb.size()) + ")"};
  std::vector<std::string> differ;
  for (const auto& rel : fa) {
    if (!same_bytes(a.root / rel, b.root / rel)) differ.push_back(rel.string());
  }
  std::string detail = std::to_string(fa.size()) + " files compared (timings.csv and logs excluded); " +
                       std::to_string(differ.size()) + " differ";
  for (std::size_t i = 0; i < differ.size() && i < 5; ++i) detail += (i ? ", " : ": ") + differ[i];
  return {differ.empty() && !fa.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance runner"};
  std::string work = "acceptance_work";
  std::string cli = EQTARIFF_CLI_PATH;
  std::vector<int> known_red;
  std::vector<int> only;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--work", work, "Scratch directory for the pipeline runs");
  app.add_option("--cli", cli, "Path of the eqtariff binary");
  app.add_option("--known-red", known_red, "Criteria whose failure is documented and does not fail the run");
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--threads", threads, "Threads passed to the pipeline");
  CLI11_PARSE(app, argc, argv);

  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int id) { return selected.empty() || selected.count(id) > 0; };
  const std::vector<int> pipeline_ids = {3, 4, 5, 6, 7, 8, 9, 10, 11};
  const bool need_a = std::any_of(pipeline_ids.begin(), pipeline_ids.end(), [&](int id) { return wanted(id); });

  std::map<int, Verdict> verdicts;
  std::map<int, double> elapsed;
  auto record = [&](int id, const std::function<Verdict()>& fn) {
    if (!wanted(id)) return;
    const auto t0 = Clock::now();
    try {
      verdicts[id] = fn();
    } catch (const std::exception& e) {
      verdicts[id] = {false, std::string("error: ") + e.what()};
    }
    elapsed[id] = since(t0);
  };

  record(1, criterion_agent);
  record(2, criterion_rnn_gradients);

  Pipeline a, b;
  if (need_a) {
    std::cout << "pipeline run A" << std::endl;
    a = run_pipeline(fs::path(work) / "run_a", cli, threads);
  }
  record(3, [&] { return criterion_identification(a); });
  record(4, [&] { return criterion_barrier_gradient(a); });
  record(5, [&] { return criterion_interior(a); });
  record(6, [&] { return criterion_dr(a); });
  record(7, [&] { return criterion_equity(a); });
  record(8, [&] { return criterion_revenue(a); });
  record(9, [&] { return criterion_surge(a); });
  record(10, [&] { return criterion_reliability(a); });
  if (wanted(11)) {
    std::cout << "pipeline run B" << std::endl;
    b = run_pipeline(fs::path(work) / "run_b", cli, threads);
    record(11, [&] { return criterion_determinism(a, b); });
  }

  const std::set<int> red(known_red.begin(), known_red.end());
  int unexpected = 0;
  std::cout << "\n";
  for (const auto& [id, v] : verdicts) {
    std::string tag = v.pass ? "PASS" : "FAIL";
    if (!v.pass && red.count(id)) tag += " (known)";
    if (!v.pass && !red.count(id)) ++unexpected;
    std::cout << "criterion " << id << ": " << tag << " - " << v.detail << " [" << fmt(elapsed[id], 3) << " s]\n";
  }
  const auto passed = std::count_if(verdicts.begin(), verdicts.end(), [](const auto& kv) { return kv.second.pass; });
  std::cout << passed << "/" << verdicts.size() << " criteria pass";
  if (unexpected == 0 && passed < static_cast<long>(verdicts.size())) std::cout << "; every failure is listed as known";
  std::cout << std::endl;
  return unexpected == 0 ? 0 : 1;
}
