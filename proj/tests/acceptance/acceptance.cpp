// Acceptance suite: one PASS/FAIL line per criterion. Optional arguments
// select criteria by name; with none, every criterion runs.
#include <malloc.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "fd_check.hpp"
#include "support.hpp"
#include "tppf/filter.hpp"
#include "tppf/harness.hpp"
#include "tppf/losses.hpp"
#include "tppf/models.hpp"
#include "tppf/oracle.hpp"

using namespace tppf;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void note(const std::string& line) { std::cerr << "  " << line << std::endl; }

// ---------------------------------------------------------------- zero variance

Verdict zero_variance() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_err = 0.0, worst_spread = 0.0;
  for (std::size_t d : {1, 2, 5}) {
    LinearGaussianSpec spec;
    spec.d = d;
    const Dataset data = generate_dataset(spec, SeedSpec{1});
    const FeynmanKacModel m = build_lgm(spec, data);
    const double log_z = kalman_log_z(spec, data).log_marginal;
    const auto twist = as_twist(lgm_optimal_twist(lgm_system(spec, data)),
                                std::dynamic_pointer_cast<const GaussianKernel>(m.kernel));
    FilterOptions opts;
    opts.particles = 64;
    double lo = INFINITY, hi = -INFINITY;
    for (std::uint64_t s = 0; s < 100; ++s) {
      Rng rng(SeedSpec{s}, StreamTag::filter);
      const double v = run_tpf(m, *twist, opts, rng).log_z_hat;
      worst_err = std::max(worst_err, std::abs(v - log_z));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    worst_spread = std::max(worst_spread, hi - lo);
  }
  const double secs = seconds_since(t0);
  return {worst_err < 1e-8 && worst_spread < 1e-10 && secs < 10.0,
          "max |logZ - Kalman| " + num(worst_err) + ", spread " + num(worst_spread) + ", " + num(secs) + " s"};
}

// ---------------------------------------------------------------- unbiasedness

struct Target {
  std::string name;
  FeynmanKacModel model;
  double z = 0.0;
  std::vector<std::pair<std::string, std::shared_ptr<const Twist>>> twists;  // null = BPF
  std::size_t particles = 0;
};

Verdict unbiasedness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Target> targets;
  {
    Rng gen(SeedSpec{2}, StreamTag::oracle);
    const FiniteChain chain = random_finite_chain(3, 4, gen);
    Target t{"chain", finite_chain_model(chain), support::brute_force_z(chain.p, chain.log_g, 0), {}, 4};
    t.twists.emplace_back("bpf", nullptr);
    t.twists.emplace_back("fa-apf", fa_apf_twist(t.model));
    auto kernel = std::dynamic_pointer_cast<const FiniteKernel>(t.model.kernel);
    for (int i = 0; i < 5; ++i) {
      auto tw = std::make_shared<TabularTwist>(kernel, chain.horizon());
      tw->table() = random_log_twist(chain, gen);
      t.twists.emplace_back("tpf" + std::to_string(i), tw);
    }
    targets.push_back(std::move(t));
  }
  {
    LinearGaussianSpec spec;
    spec.d = 1;
    spec.t_end = 0.1;
    const Dataset data = generate_dataset(spec, SeedSpec{3});
    Target t{"lgm", build_lgm(spec, data), std::exp(kalman_log_z(spec, data).log_marginal), {}, 16};
    t.twists.emplace_back("bpf", nullptr);
    t.twists.emplace_back("fa-apf", fa_apf_twist(t.model));
    auto kernel = std::dynamic_pointer_cast<const GaussianKernel>(t.model.kernel);
    Rng gen(SeedSpec{4}, StreamTag::oracle);
    for (int i = 0; i < 5; ++i) {
      auto tw = std::make_shared<GaussianTwist>(kernel, t.model.horizon, 8, std::log(0.5));
      tw->init(gen);
      for (Eigen::Index j = 0; j < tw->params().size(); ++j) tw->params().values()[j] += 0.3 * gen.normal();
      t.twists.emplace_back("tpf" + std::to_string(i), tw);
    }
    targets.push_back(std::move(t));
  }
  bool pass = true;
  double worst = 0.0;
  for (const Target& t : targets) {
    for (std::size_t i = 0; i < t.twists.size(); ++i) {
      const auto& [name, twist] = t.twists[i];
      FilterOptions opts;
      opts.particles = t.particles;
      support::Moments mom;
      for (std::uint64_t r = 0; r < 100000; ++r) {
        Rng rng(SeedSpec{100 + i}, StreamTag::filter, r);
        const FilterReport rep = twist ? run_tpf(t.model, *twist, opts, rng) : run_bpf(t.model, opts, rng);
        mom.add(std::exp(rep.log_z_hat));
      }
      const double zscore = (mom.mean() - t.z) / mom.se();
      worst = std::max(worst, std::abs(zscore));
      if (std::abs(zscore) >= 4.0) {
        pass = false;
        note(t.name + " " + name + ": mean " + num(mom.mean()) + " vs " + num(t.z) + " (" + num(zscore) + " SE)");
      }
    }
  }
  const double secs = seconds_since(t0);
  return {pass && secs < 60.0, "worst |z-score| " + num(worst) + " over 14 estimators, " + num(secs) + " s"};
}

// ---------------------------------------------------------------- identities

double kl(const Eigen::VectorXd& lp, const Eigen::VectorXd& lq) { return (lp.array().exp() * (lp - lq).array()).sum(); }

Verdict identities() {
  const auto t0 = std::chrono::steady_clock::now();
  double j_err = 0.0, chi_err = 0.0, dv_star = 0.0, dv_min = INFINITY;
  bool bounds = true;
  for (std::uint64_t i = 0; i < 100; ++i) {
    Rng gen(SeedSpec{i}, StreamTag::oracle, 7);
    const FiniteChain c = random_finite_chain(2 + i % 4, 2 + i % 3, gen);
    const Enumeration e = enumerate_chain(c);
    const Eigen::MatrixXd log_phi = random_log_twist(c, gen);
    const Eigen::VectorXd tilde = twisted_path_log_prob(c, e, log_phi);
    const Eigen::VectorXd star = (e.log_p + e.log_g).array() - e.log_z;
    auto j = [&](const Eigen::VectorXd& lq) { return (lq.array().exp() * -e.log_g.array()).sum() + kl(lq, e.log_p); };
    j_err = std::max(j_err, std::abs(j(tilde) - j(star) - kl(tilde, star)));
    const DivergenceReport d = divergences(c, e, log_phi);
    j_err = std::max(j_err, std::abs(d.j_phi - d.j_star - d.kl_phi_star));
    chi_err = std::max(chi_err, std::abs(d.r2 - d.chi2) / std::max(1.0, d.chi2));
    dv_min = std::min(dv_min, d.dv_gap);
    dv_star = std::max(dv_star, std::abs(divergences(c, e, optimal_log_twist(c)).dv_gap));
    const double tol = 1e-12 * std::max(1.0, d.r2);
    if (!(d.bound_lower <= d.r2 + tol && d.r2 <= d.bound_upper + tol)) bounds = false;
  }
  const double secs = seconds_since(t0);
  const bool pass = j_err < 1e-10 && chi_err < 1e-12 && dv_min >= -1e-12 && dv_star < 1e-10 && bounds && secs < 30.0;
  return {pass, "J gap vs KL " + num(j_err) + ", r2 vs chi2 " + num(chi_err) + ", DV gap at phi* " + num(dv_star) +
                    ", min DV gap " + num(dv_min) + ", bounds " + (bounds ? "hold" : "violated") + ", " + num(secs) +
                    " s"};
}

// ---------------------------------------------------------------- gradients

Verdict gradients() {
  double worst_loss = 0.0, worst_prim = 0.0;
  for (std::uint64_t i = 0; i < 5; ++i) {
    Rng gen(SeedSpec{i}, StreamTag::oracle, 8);
    const FiniteChain c = random_finite_chain(3, 3, gen);
    const Enumeration e = enumerate_chain(c);
    const FeynmanKacModel m = finite_chain_model(c);
    TabularTwist tw(std::dynamic_pointer_cast<const FiniteKernel>(m.kernel), 3);
    tw.table() = random_log_twist(c, gen, 0.7);
    const Eigen::MatrixXd t = tw.table();
    const PathBatch twisted = enumerated_batch(c, e, &t);
    const PathBatch untwisted = enumerated_batch(c, e, nullptr);

    auto fd = [&](const std::function<double(const Eigen::MatrixXd&)>& loss) {
      Eigen::MatrixXd probe = t;
      Eigen::VectorXd g(t.size());
      for (Eigen::Index k = 0; k < t.size(); ++k) {
        const double h = 1e-6, keep = probe.data()[k];
        probe.data()[k] = keep + h;
        const double up = loss(probe);
        probe.data()[k] = keep - h;
        const double dn = loss(probe);
        probe.data()[k] = keep;
        g[k] = (up - dn) / (2 * h);
      }
      return g;
    };
    auto rel = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
      return (a - b).norm() / std::max(1e-12, b.norm());
    };
    auto re = [&](const Eigen::MatrixXd& x) { return enumerated_loss_re(c, e, x); };
    auto ce = [&](const Eigen::MatrixXd& x) { return enumerated_loss_ce(c, e, x); };
    const Eigen::VectorXd g_re = fd(re), g_ce = fd(ce);
    worst_loss = std::max(worst_loss, rel(loss_re(tw, twisted, 0).grad, g_re));
    worst_loss = std::max(worst_loss, rel(loss_re(tw, untwisted, 0).grad, g_re));
    worst_loss = std::max(worst_loss, rel(loss_ce(tw, untwisted, 0).grad, g_ce));
    worst_loss = std::max(worst_loss, rel(loss_rece(tw, untwisted, untwisted, 0).grad, g_re + g_ce));
  }
  for (std::uint64_t s = 1; s <= 3; ++s)
    for (const auto& [name, err] : fdcheck::primitive_errors(s)) worst_prim = std::max(worst_prim, err);
  return {worst_loss < 1e-3 && worst_prim < 1e-5,
          "losses: worst relative error " + num(worst_loss) + "; primitives: " + num(worst_prim)};
}

// ---------------------------------------------------------------- training

Verdict training() {
  Rng gen(SeedSpec{9}, StreamTag::oracle);
  const FiniteChain c = random_finite_chain(3, 3, gen);
  const Enumeration e = enumerate_chain(c);
  const FeynmanKacModel m = finite_chain_model(c);
  TabularTwist tw(std::dynamic_pointer_cast<const FiniteKernel>(m.kernel), 3);
  const double before = divergences(c, e, tw.table()).kl_phi_star;
  TrainConfig cfg;
  cfg.loss = LossKind::re;
  cfg.mode = SamplingMode::twisted;
  cfg.batch = 256;
  cfg.iterations = 2000;
  cfg.adam.lr = 0.05;
  train_tppf(m, tw, cfg, SeedSpec{10});
  const double after = divergences(c, e, tw.table()).kl_phi_star;
  return {after < 1e-3, "KL(P^phi || P^phi*) " + num(before) + " -> " + num(after) + " after 2000 iterations"};
}

// ---------------------------------------------------------------- kernel slope

Verdict kernel_slope() {
  const SlopeReport rep = check_em_kernel_convergence({0.2, 0.1, 0.05, 0.025, 0.0125}, 1.0, 10);
  const bool pass = rep.slope >= 1.8 && rep.slope <= 2.2 && rep.monotone && rep.linearity_error < 1e-12;
  return {pass, "slope " + num(rep.slope) + ", d-linearity error " + num(rep.linearity_error)};
}

// ---------------------------------------------------------------- orderings

struct Sweep {
  TableReport table;
  double seconds = 0.0;
};

Sweep sweep(const std::string& model, std::size_t d, const std::vector<Method>& methods) {
  ExperimentConfig c;
  c.model = model;
  c.d = d;
  c.methods = methods;
  const auto t0 = std::chrono::steady_clock::now();
  Sweep s;
  s.table = run_experiment(c, [](const std::string& line) { note(line); }).table;
  s.seconds = seconds_since(t0);
  for (const auto& [m, err] : s.table.failures) note(m + " failed: " + err);
  return s;
}

double sigma(const Sweep& s, const std::string& method) {
  const MethodSummary* m = s.table.find(method);
  return m ? m->sigma_logz : NAN;
}

double ess(const Sweep& s, const std::string& method) {
  const MethodSummary* m = s.table.find(method);
  return m ? m->mean_ess_rel : NAN;
}

Verdict orderings() {
  bool pass = true;
  std::ostringstream out;
  auto report = [&](const std::string& tag, bool ok, const std::string& text) {
    pass = pass && ok;
    out << (out.tellp() > 0 ? "; " : "") << tag << (ok ? " ok" : " FAIL") << " (" << text << ")";
    note(tag + ": " + text);
  };
  // Each check runs its own sweep; a runtime error fails that check only.
  auto check = [&](const std::string& tag, const std::string& model, std::size_t d, std::vector<Method> methods,
                   const std::function<std::pair<bool, std::string>(const Sweep&)>& judge) {
    try {
      const Sweep s = sweep(model, d, std::move(methods));
      const auto [ok, text] = judge(s);
      const bool fast = s.seconds < 1800.0;
      report(tag, ok && fast, text + ", " + num(s.seconds) + " s");
    } catch (const std::exception& e) {
      report(tag, false, std::string("error: ") + e.what());
    }
  };
  check("(i)", "lgm", 2, {Method::bpf, Method::iapf, Method::tppf_re}, [](const Sweep& s) {
    const double b = sigma(s, "bpf"), i = sigma(s, "iapf"), r = sigma(s, "tppf-re");
    // "Much smaller" read as two orders of magnitude.
    return std::pair{i < 1e-6 && 100.0 * i < r && r < b && b >= 0.3 && b <= 1.2,
                     "iAPF " + num(i) + ", RE " + num(r) + ", BPF " + num(b)};
  });
  check("(ii)", "lgm", 20, {Method::tppf_re, Method::tppf_ce}, [](const Sweep& s) {
    const double r = sigma(s, "tppf-re"), c = sigma(s, "tppf-ce");
    return std::pair{r < c, "RE " + num(r) + ", CE " + num(c)};
  });
  check("(iii)", "lgm", 5, {Method::bpf, Method::tppf_re}, [](const Sweep& s) {
    const double r = ess(s, "tppf-re"), b = ess(s, "bpf");
    return std::pair{r > b, "ESS-r RE " + num(r) + ", BPF " + num(b)};
  });
  check("(iv)", "ngm78", 5, {Method::tppf_re, Method::iapf}, [](const Sweep& s) {
    const double r = sigma(s, "tppf-re"), i = sigma(s, "iapf");
    return std::pair{r < i, "RE " + num(r) + ", iAPF " + num(i)};
  });
  check("(v)", "lorenz96", 5, {Method::tppf_re, Method::bpf}, [](const Sweep& s) {
    const double r = sigma(s, "tppf-re"), b = sigma(s, "bpf");
    return std::pair{r < b, "RE " + num(r) + ", BPF " + num(b)};
  });
  return {pass, out.str()};
}

// ---------------------------------------------------------------- determinism

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  const auto dir = std::filesystem::temp_directory_path() / "tppf_acceptance_det";
  std::filesystem::create_directories(dir);
  std::vector<ExperimentConfig> configs(3);
  configs[0].model = "lgm";
  configs[0].methods = {Method::bpf, Method::fa_apf, Method::iapf, Method::tppf_re};
  configs[0].train_iters = 20;
  configs[1].model = "ngm78";
  configs[1].d = 2;
  configs[1].methods = {Method::bpf, Method::tppf_rece};
  configs[1].train_iters = 3;
  configs[1].particles = 64;
  configs[2].model = "lorenz96";
  configs[2].d = 3;
  configs[2].alphas = {2.0, 3.0};
  configs[2].methods = {Method::bpf, Method::tppf_ce};
  configs[2].train_iters = 3;
  configs[2].particles = 64;
  bool pass = true;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    ExperimentConfig& c = configs[i];
    c.replicates = 10;
    std::string first;
    for (int rep = 0; rep < 2; ++rep) {
      c.csv_path = (dir / ("run" + std::to_string(i) + "_" + std::to_string(rep) + ".csv")).string();
      if (c.alphas.empty())
        run_experiment(c);
      else
        run_sweep(c);
      const std::string text = slurp(c.csv_path);
      if (rep == 0)
        first = text;
      else if (text != first || text.empty())
        pass = false;
    }
  }
  std::filesystem::remove_all(dir);
  return {pass, "run and sweep repeated on lgm, ngm78 and a lorenz96 alpha grid"};
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"zero-variance", zero_variance}, {"unbiasedness", unbiasedness}, {"identities", identities},
      {"gradients", gradients},         {"training", training},         {"kernel-slope", kernel_slope},
      {"orderings", orderings},         {"determinism", determinism},
  };
  std::vector<std::string> wanted(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), name) == wanted.end()) continue;
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
