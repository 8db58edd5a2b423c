// Acceptance checks. Prints one PASS/FAIL line per criterion; exits nonzero if any fails.
// Usage: acceptance [criterion numbers...]   (all when none given)
#include <sys/wait.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "igauss/diagnostics.hpp"
#include "igauss/experiments.hpp"

using namespace igauss;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double se_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

Matrix random_symmetric(Eigen::Index d, RandomStream& rng) {
  const Matrix a = rng.normal_matrix(d, d);
  return 0.5 * (a + a.transpose());
}

// Covariance whose precision has unit diagonal and whose condition number is exactly kappa:
// start from Q diag(lambda) Q^T with mean eigenvalue 1 and apply plane rotations that fix one
// diagonal entry at a time (each rotation preserves the spectrum).
Matrix unit_precision_covariance(Eigen::Index d, double kappa, RandomStream& rng) {
  Vector lam(d);
  for (Eigen::Index i = 0; i < d; ++i) lam(i) = std::pow(kappa, d == 1 ? 0.0 : double(i) / double(d - 1));
  lam *= static_cast<double>(d) / lam.sum();
  const Matrix q = sample_haar_matrix(d, rng);
  Matrix p = q * lam.asDiagonal() * q.transpose();
  for (int step = 0; step < 4 * d; ++step) {
    Eigen::Index lo = -1, hi = -1;
    for (Eigen::Index i = 0; i < d; ++i) {
      if (p(i, i) < 1.0 - 1e-14 && lo < 0) lo = i;
      if (p(i, i) > 1.0 + 1e-14 && hi < 0) hi = i;
    }
    if (lo < 0 || hi < 0) break;
    auto diag_after = [&](double th) {
      const double c = std::cos(th), s = std::sin(th);
      return c * c * p(lo, lo) + 2 * c * s * p(lo, hi) + s * s * p(hi, hi);
    };
    // diag_after(0) < 1 < diag_after(pi/2); bisect for the crossing.
    double a = 0.0, b = std::numbers::pi / 2;
    for (int it = 0; it < 200; ++it) {
      const double m = 0.5 * (a + b);
      (diag_after(m) < 1.0 ? a : b) = m;
    }
    const double th = 0.5 * (a + b), c = std::cos(th), s = std::sin(th);
    Matrix g = Matrix::Identity(d, d);
    g(lo, lo) = c;
    g(hi, lo) = s;
    g(lo, hi) = -s;
    g(hi, hi) = c;
    p = g.transpose() * p * g;
    p(lo, lo) = 1.0;
  }
  p = 0.5 * (p + p.transpose());
  return p.inverse();
}

double condition_number(const Matrix& s) {
  const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(s).eigenvalues();
  return ev.maxCoeff() / ev.minCoeff();
}

// ---- 1: projected Fisher information equality for Gaussians ----------------

Outcome criterion1() {
  const long batches = 20, per_batch = 5000;  // N = 1e5
  int ok = 0;
  double worst = 0.0;
  RandomStream root(101);
  for (int t = 0; t < 10; ++t) {
    RandomStream rng = root.split(t);
    // Algorithm state: a target whose mean-field fit is gamma (unit-diagonal precision).
    const Matrix raw = make_conditioned_gaussian(3, 6.0, rng).covariance();
    const Matrix sigma = gaussian_mf_step(raw, Matrix::Identity(3, 3)).next_sigma;
    const GaussianTarget target(Vector::Zero(3), sigma);

    std::vector<HMatrix> parts;
    Matrix h = Matrix::Zero(3, 3);
    for (long b = 0; b < batches; ++b) {
      RandomStream s = rng.split(1000 + b);
      parts.push_back(estimate_H(target, per_batch, s));
      h += parts.back().matrix / double(batches);
    }
    const Rotation r = Rotation::dense(eig_sym(h).vectors.transpose());
    const double est = pfi_lower_bound(h, r);
    std::vector<double> per;
    for (const auto& p : parts) per.push_back(pfi_lower_bound(p.matrix, r));
    const double se = se_of(per);
    const Matrix rs = r.to_dense() * sigma * r.to_dense().transpose();
    const double exact = gaussian_projected_fi(GaussianTarget(Vector::Zero(3), 0.5 * (rs + rs.transpose())));
    const double z = std::abs(est - exact) / se;
    worst = std::max(worst, z);
    if (z <= 3.0) ++ok;
  }
  return {ok == 10, std::to_string(ok) + "/10 within 3 SE, worst |z| = " + fmt("%.2f", worst)};
}

// ---- 2: eigenrotation maximizes the bound -----------------------------------

Outcome criterion2() {
  RandomStream rng(202);
  double min_slack = INFINITY;
  for (int t = 0; t < 20; ++t) {
    const Eigen::Index d = 2 + t % 5;
    const Matrix h = random_symmetric(d, rng);
    const EigenDecomposition e = eig_sym(h);
    const double top = pfi_lower_bound(h, Rotation::dense(e.vectors.transpose()));
    for (int k = 0; k < 200; ++k) min_slack = std::min(min_slack, top - pfi_lower_bound(h, sample_haar_rotation(d, rng)));
  }
  return {min_slack >= -1e-10, "min slack = " + fmt("%.3e", min_slack)};
}

// ---- 3: Haar average of the bound ------------------------------------------

Outcome criterion3() {
  RandomStream rng(303);
  bool pass = true;
  std::string detail;
  for (Eigen::Index d : {2, 4, 8}) {
    const Matrix h = random_symmetric(d, rng);
    std::vector<double> v;
    v.reserve(10000);
    for (int k = 0; k < 10000; ++k) v.push_back(pfi_lower_bound(h, sample_haar_rotation(d, rng)));
    const double target = random_rotation_bound(eig_sym(h).values);
    const double z = (mean_of(v) - target) / se_of(v);
    pass = pass && std::abs(z) <= 3.0;
    detail += "d=" + std::to_string(d) + " z=" + fmt("%.2f", z) + " ";
  }
  return {pass, detail};
}

// ---- 4: contraction of the Gaussian post-MF KL -----------------------------

Outcome criterion4() {
  RandomStream rng(404);
  bool pass = true;
  double worst_ratio = 0.0;
  int cells = 0;
  for (Eigen::Index d : {2, 4, 8}) {
    for (double kappa : {1.5, 4.0, 10.0}) {
      const Matrix sigma = unit_precision_covariance(d, kappa, rng);
      const Matrix prec = sigma.inverse();
      if ((prec.diagonal() - Vector::Ones(d)).cwiseAbs().maxCoeff() > 1e-8 ||
          std::abs(condition_number(sigma) / kappa - 1.0) > 1e-8)
        return {false, "could not construct the test covariance"};
      const double l0 = kl_gaussian_analytic(Eigen::SelfAdjointEigenSolver<Matrix>(sigma).eigenvalues());
      std::vector<double> v;
      v.reserve(10000);
      for (int k = 0; k < 10000; ++k) v.push_back(kl_gaussian_after_mf(sigma, sample_haar_rotation(d, rng)));
      const double bound = (1.0 - 2.0 / ((double(d) + 2.0) * kappa * kappa)) * l0;
      const double m = mean_of(v);
      pass = pass && m <= bound + 3.0 * se_of(v);
      worst_ratio = std::max(worst_ratio, m / bound);
      ++cells;
    }
  }
  return {pass, std::to_string(cells) + " cells, max mean/bound = " + fmt("%.3f", worst_ratio)};
}

// ---- 5: iterations-to-threshold trends --------------------------------------

Outcome criterion5() {
  const int threads = std::max(1u, std::thread::hardware_concurrency());
  std::map<long, double> rnd, pca;
  bool pca_d2_exact = false;
  for (long d : {2L, 4L, 8L, 16L}) {
    const std::uint64_t seed = 500 + d;
    const SweepCell r = iterations_to_threshold(d, 4.0, RotationStrategy::random(), 0.01, 30, seed, threads);
    const SweepCell p = iterations_to_threshold(d, 4.0, RotationStrategy::pca(), 0.01, 30, seed, threads);
    if (r.censored || p.censored) return {false, "censored cell at d=" + std::to_string(d)};
    rnd[d] = r.mean_iters;
    pca[d] = p.mean_iters;
    if (d == 2) pca_d2_exact = std::all_of(p.counts.begin(), p.counts.end(), [](long c) { return c == 1; });
  }
  bool third = true;
  for (auto [d, m] : rnd) third = third && pca[d] <= m / 3.0;
  const bool increasing = rnd[4] < rnd[8] && rnd[8] < rnd[16];
  std::string detail = "random";
  for (auto [d, m] : rnd) detail += " d" + std::to_string(d) + "=" + fmt("%.2f", m);
  detail += "; pca";
  for (auto [d, m] : pca) detail += " d" + std::to_string(d) + "=" + fmt("%.2f", m);
  return {increasing && third && pca_d2_exact, detail};
}

// ---- 8: numerical bedrock ---------------------------------------------------

Outcome criterion8() {
  RandomStream rng(808);
  std::string bad;

  // Spline roundtrip.
  double worst_rt = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Eigen::Index d = 4;
    Matrix w = 1.5 * rng.normal_matrix(d, 10), h = 1.5 * rng.normal_matrix(d, 10), dr = 1.5 * rng.normal_matrix(d, 9);
    dr.array() += RQSplineMap::identity_raw_deriv();
    const CoordinatewiseMap sp(RQSplineMap(10, 8.0, w, h, dr));
    for (int k = 0; k < 100; ++k) {
      const Vector x = 5.0 * rng.normal_vector(d);
      const auto [y, ld] = sp.forward(x);
      const auto [x2, ld2] = sp.inverse(y);
      worst_rt = std::max({worst_rt, (x2 - x).lpNorm<Eigen::Infinity>(), std::abs(ld + ld2)});
    }
  }
  if (worst_rt > 1e-8) bad += " roundtrip";

  // Analytic gradients against central differences.
  auto fd_rel = [](const std::function<double(const Vector&)>& f, const Vector& x, const Vector& g) {
    Vector fd(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double hstep = 1e-5 * std::max(1.0, std::abs(x(i)));
      Vector a = x, b = x;
      a(i) += hstep;
      b(i) -= hstep;
      fd(i) = (f(a) - f(b)) / (2 * hstep);
    }
    return (g - fd).norm() / std::max(fd.norm(), 1e-8);
  };
  double worst_grad = 0.0;
  for (int t = 0; t < 5; ++t) {
    const GaussianTarget g = make_conditioned_gaussian(3, 5.0, rng);
    const Vector x = rng.normal_vector(3);
    worst_grad = std::max(worst_grad, fd_rel([&](const Vector& v) { return g.log_density(v); }, x, g.score(x)));

    LogisticDataOptions lo;
    lo.n = 30;
    lo.d = 3;
    const LogisticRegressionTarget lt = make_logistic_benchmark(rng, lo);
    const Vector b = rng.normal_vector(3);
    worst_grad = std::max(worst_grad, fd_rel([&](const Vector& v) { return lt.log_density(v); }, b, lt.score(b)));

    Matrix w = 0.7 * rng.normal_matrix(3, 8), hh = 0.7 * rng.normal_matrix(3, 8), dr = 0.7 * rng.normal_matrix(3, 7);
    dr.array() += RQSplineMap::identity_raw_deriv();
    const CoordinatewiseMap sp(RQSplineMap(8, 4.0, w, hh, dr));
    const Matrix z = rng.normal_matrix(100, 3);
    const Vector theta = sp.params();
    worst_grad = std::max(worst_grad, fd_rel(
                                          [&](const Vector& th) {
                                            CoordinatewiseMap c = sp;
                                            c.set_params(th);
                                            return reverse_kl_estimate(c, g, z).value;
                                          },
                                          theta, reverse_kl_gradient(sp, g, z)));

    TransportChain chain(3);
    chain.push_back(TransportLayer(sample_haar_rotation(3, rng), sp));
    chain.push_back(TransportLayer(sample_haar_rotation(3, rng), AffineMap(rng.normal_vector(3), 0.3 * rng.normal_vector(3))));
    const Vector y = rng.normal_vector(3);
    worst_grad = std::max(worst_grad, fd_rel([&](const Vector& v) { return pullback_log_density(chain, g, v); }, y,
                                             pullback_score(chain, g, y)));
    const Vector xx = 2.0 * rng.normal_vector(3);
    for (Eigen::Index i = 0; i < 3; ++i) {
      auto f = [&](const Vector& v) { return sp.evaluate(v).log_deriv(i); };
      Vector gi = Vector::Zero(3);
      gi(i) = coordwise_dlogdet_dx(sp, xx)(i);
      worst_grad = std::max(worst_grad, fd_rel(f, xx, gi));
    }
  }
  if (worst_grad > 1e-3) bad += " gradients";

  // Haar fourth moments of a row.
  std::string moments;
  for (Eigen::Index d : {3, 6}) {
    std::vector<double> r4, r2r2;
    for (int k = 0; k < 100000; ++k) {
      const Matrix q = sample_haar_matrix(d, rng);
      r4.push_back(std::pow(q(0, 0), 4));
      r2r2.push_back(q(0, 0) * q(0, 0) * q(0, 1) * q(0, 1));
    }
    const double dd = double(d) * (double(d) + 2.0);
    const double z4 = (mean_of(r4) - 3.0 / dd) / se_of(r4);
    const double z22 = (mean_of(r2r2) - 1.0 / dd) / se_of(r2r2);
    if (std::abs(z4) > 3.0 || std::abs(z22) > 3.0) bad += " haar-d" + std::to_string(d);
    moments += " z4(d" + std::to_string(d) + ")=" + fmt("%.2f", z4) + " z22=" + fmt("%.2f", z22);
  }

  // Jacobi reconstruction.
  double worst_rec = 0.0;
  for (Eigen::Index d : {2, 5, 10, 20, 40}) {
    const Matrix h = random_symmetric(d, rng);
    const EigenDecomposition e = eig_sym(h);
    worst_rec = std::max(worst_rec, (e.vectors * e.values.asDiagonal() * e.vectors.transpose() - h).cwiseAbs().maxCoeff());
  }
  if (worst_rec > 1e-10) bad += " jacobi";

  return {bad.empty(), "roundtrip " + fmt("%.1e", worst_rt) + ", grad rel " + fmt("%.1e", worst_grad) + "," + moments +
                           ", jacobi " + fmt("%.1e", worst_rec) + (bad.empty() ? "" : "; failed:" + bad)};
}

// ---- logistic study helpers (6, 7, 9) --------------------------------------

const fs::path kWork = IGAUSS_ACCEPTANCE_TMP;

int run_cli(const std::string& args) {
  const std::string cmd = std::string(IGAUSS_CLI_PATH) + " " + args + " >/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

double num(const std::string& s) { return s == "nan" || s.empty() ? NAN : std::stod(s); }

const fs::path& logistic_study() {
  static const fs::path out = [] {
    const fs::path dir = kWork / "logistic20";
    fs::remove_all(dir);
    fs::create_directories(kWork);
    std::ofstream(kWork / "logistic20.json") << R"({"experiment": "logistic", "seed": 2024, "replicates": 20})";
    const int threads = std::max(1u, std::thread::hardware_concurrency());
    const int rc = run_cli("logistic --config " + (kWork / "logistic20.json").string() + " --out " + dir.string() +
                           " --threads " + std::to_string(threads));
    if (rc != 0) throw std::runtime_error("logistic run exited with " + std::to_string(rc));
    return dir;
  }();
  return out;
}

// run_id "repXX-variant" -> k -> row
using MetricIndex = std::map<std::string, std::map<long, std::vector<std::string>>>;
MetricIndex index_rows(const fs::path& csv) {
  MetricIndex idx;
  for (auto& r : read_csv(csv)) idx[r[0]][std::stol(r[1])] = r;
  return idx;
}

std::string rep_id(int r) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "rep%02d", r);
  return buf;
}

Outcome criterion6() {
  const MetricIndex mono = index_rows(logistic_study() / "monotonicity.csv");
  int ok = 0;
  for (int r = 0; r < 20; ++r) {
    auto it = mono.find(rep_id(r) + "-random_iter");
    if (it == mono.end()) continue;
    bool good = true;
    for (long k = 2; k <= 5; ++k) {
      auto row = it->second.find(k);
      if (row == it->second.end()) {
        good = false;
        break;
      }
      const double diff = num(row->second[4]), se = num(row->second[5]);
      good = good && std::isfinite(diff) && diff <= 3.0 * se;
    }
    ok += good;
  }
  return {ok >= 18, std::to_string(ok) + "/20 replicates non-increasing over k=1..5 within 3 SE"};
}

Outcome criterion7() {
  const MetricIndex m = index_rows(logistic_study() / "metrics.csv");
  int mmd_wins = 0, elbo_wins = 0, both = 0;
  std::map<long, std::vector<double>> rk;
  for (int r = 0; r < 20; ++r) {
    const std::string id = rep_id(r);
    auto pca = m.find(id + "-pca"), ident = m.find(id + "-identity");
    if (pca != m.end() && ident != m.end() && pca->second.count(1) && ident->second.count(1)) {
      const auto& p = pca->second.at(1);
      const auto& i = ident->second.at(1);
      const bool wm = num(p[3]) < num(i[3]);
      const bool we = -num(p[2]) < -num(i[2]);
      mmd_wins += wm;
      elbo_wins += we;
      both += wm && we;
    }
    auto ri = m.find(id + "-random_iter");
    if (ri != m.end())
      for (long k : {3L, 5L, 7L})
        if (ri->second.count(k) && std::isfinite(num(ri->second.at(k)[3]))) rk[k].push_back(num(ri->second.at(k)[3]));
  }
  const bool complete = rk[3].size() == 20 && rk[5].size() == 20 && rk[7].size() == 20;
  const double m3 = mean_of(rk[3]), m5 = mean_of(rk[5]), m7 = mean_of(rk[7]);
  const bool monotone = complete && m3 > m5 && m5 > m7;
  return {both >= 16 && monotone, "pca beats identity on mmd " + std::to_string(mmd_wins) + "/20, -elbo " +
                                      std::to_string(elbo_wins) + "/20, both " + std::to_string(both) +
                                      "/20; mean mmd R3=" + fmt("%.4f", m3) + " R5=" + fmt("%.4f", m5) +
                                      " R7=" + fmt("%.4f", m7)};
}

Outcome criterion9() {
  std::ofstream(kWork / "determinism.json") << R"({"experiment": "logistic", "seed": 77, "replicates": 3})";
  const fs::path a = kWork / "det_a", b = kWork / "det_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const std::string cfg = " --config " + (kWork / "determinism.json").string();
  if (run_cli("logistic" + cfg + " --threads 1 --out " + a.string()) != 0 ||
      run_cli("logistic" + cfg + " --threads 2 --out " + b.string()) != 0)
    return {false, "logistic run failed"};
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  int compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    const std::string ext = rel.extension().string();
    if (rel.filename() == "manifest.json") continue;  // records the output directory
    if (ext != ".csv" && ext != ".json") continue;
    if (!fs::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) return {false, "differs: " + rel.string()};
    ++compared;
  }
  return {compared >= 12, std::to_string(compared) + " files byte-identical (chain JSON and CSV)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> all{
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
      {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}};
  std::set<int> chosen;
  for (int i = 1; i < argc; ++i) chosen.insert(std::stoi(argv[i]));
  int failures = 0;
  for (const auto& [id, fn] : all) {
    if (!chosen.empty() && !chosen.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d: %s (%.1fs) %s\n", id, o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
