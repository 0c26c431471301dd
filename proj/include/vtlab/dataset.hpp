#pragma once

// Dataset generation and persistence: parameter sampling, trajectory
// generation over a worker pool, z-score statistics, ODE magnitude weight
// factors, and the binary container (byte layout in docs/formats.md).

#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "vtlab/common.hpp"
#include "vtlab/integrate.hpp"
#include "vtlab/irregularity.hpp"
#include "vtlab/params.hpp"
#include "vtlab/psd.hpp"
#include "vtlab/residual.hpp"

namespace vtlab {

// Uniform per-component draws in [lo, hi] x nominal.
struct ParamSampler {
  Eigen::VectorXd nominal;  // 13
  double lo = 0.8;
  double hi = 1.2;

  static ParamSampler around(const VehicleParams& base, double lo = 0.8,
                             double hi = 1.2) {
    ParamSampler s;
    auto v = extract_param_vector(base);
    s.nominal = Eigen::Map<const Eigen::VectorXd>(v.data(), 13);
    s.lo = lo;
    s.hi = hi;
    return s;
  }

  Eigen::VectorXd sample(Rng& rng) const {
    require(lo <= hi && lo > 0, "bad sampler range");
    Eigen::VectorXd out(nominal.size());
    for (int i = 0; i < nominal.size(); ++i)
      out[i] = nominal[i] * rng.uniform(lo, hi);
    return out;
  }
};

struct DatasetRecord {
  Eigen::VectorXd params;          // 13
  Eigen::MatrixXd irre;            // [4 x S]
  Eigen::MatrixXd X, V, A;         // [14 x S]
};

struct Dataset {
  std::uint64_t master_seed = 0;
  int n_train = 0;
  int n_val = 0;
  double dt_out = 0.0;
  double duration = 0.0;
  std::vector<std::string> channel_names;
  std::vector<std::string> param_names;
  std::vector<DatasetRecord> records;

  int size() const { return static_cast<int>(records.size()); }
  long samples() const { return records.empty() ? 0 : records.front().X.cols(); }

  void validate() const {
    require(n_train + n_val == size(), "split does not cover the dataset");
    for (const auto& r : records)
      require(r.X.allFinite() && r.V.allFinite() && r.A.allFinite() &&
                  r.irre.allFinite(),
              "non-finite record");
  }

  void save(const std::string& path) const;
  static Dataset load(const std::string& path);
};

// ---------------------------------------------------------------------------
// Container IO.

namespace detail {

inline void write_matrix_rows(std::ostream& os, const Eigen::MatrixXd& m) {
  std::vector<double> row(static_cast<std::size_t>(m.cols()));
  for (long r = 0; r < m.rows(); ++r) {
    for (long c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    io::write_f64_array(os, row.data(), row.size());
  }
}

inline void read_matrix_rows(std::istream& is, Eigen::MatrixXd& m, long rows,
                             long cols) {
  m.resize(rows, cols);
  std::vector<double> row(static_cast<std::size_t>(cols));
  for (long r = 0; r < rows; ++r) {
    io::read_f64_array(is, row.data(), row.size());
    for (long c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
}

inline constexpr char kDatasetMagic[8] = {'V', 'T', 'L', 'A', 'B', 'D', 'S', '1'};

}  // namespace detail

inline void Dataset::save(const std::string& path) const {
  validate();
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot open for writing: " + path);
  os.write(detail::kDatasetMagic, 8);
  io::write_u32(os, 1);  // version
  io::write_u64(os, master_seed);
  io::write_u32(os, static_cast<std::uint32_t>(records.size()));
  io::write_u32(os, static_cast<std::uint32_t>(n_train));
  io::write_u32(os, static_cast<std::uint32_t>(n_val));
  io::write_f64(os, dt_out);
  io::write_f64(os, duration);
  io::write_u32(os, static_cast<std::uint32_t>(kOutputChannels));
  io::write_u32(os, 4);   // irregularity channels
  io::write_u32(os, 13);  // parameter entries
  io::write_u32(os, static_cast<std::uint32_t>(samples()));
  for (const auto& n : channel_names) io::write_string(os, n);
  for (const auto& n : param_names) io::write_string(os, n);
  for (const auto& r : records) {
    io::write_f64_array(os, r.params.data(), 13);
    detail::write_matrix_rows(os, r.irre);
    detail::write_matrix_rows(os, r.X);
    detail::write_matrix_rows(os, r.V);
    detail::write_matrix_rows(os, r.A);
  }
  require(os.good(), "write failed: " + path);
}

inline Dataset Dataset::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open dataset: " + path);
  char magic[8];
  is.read(magic, 8);
  require(is.good() && std::memcmp(magic, detail::kDatasetMagic, 8) == 0,
          "not a dataset container: " + path);
  require(io::read_u32(is) == 1, "unsupported dataset version");
  Dataset d;
  d.master_seed = io::read_u64(is);
  std::uint32_t n = io::read_u32(is);
  d.n_train = static_cast<int>(io::read_u32(is));
  d.n_val = static_cast<int>(io::read_u32(is));
  d.dt_out = io::read_f64(is);
  d.duration = io::read_f64(is);
  std::uint32_t n_ch = io::read_u32(is);
  std::uint32_t n_irre = io::read_u32(is);
  std::uint32_t n_par = io::read_u32(is);
  std::uint32_t n_samples = io::read_u32(is);
  require(n_ch == kOutputChannels && n_irre == 4 && n_par == 13,
          "unexpected channel layout in " + path);
  d.channel_names.resize(n_ch);
  for (auto& s : d.channel_names) s = io::read_string(is);
  d.param_names.resize(n_par);
  for (auto& s : d.param_names) s = io::read_string(is);
  d.records.resize(n);
  for (auto& r : d.records) {
    r.params.resize(13);
    io::read_f64_array(is, r.params.data(), 13);
    detail::read_matrix_rows(is, r.irre, 4, n_samples);
    detail::read_matrix_rows(is, r.X, kOutputChannels, n_samples);
    detail::read_matrix_rows(is, r.V, kOutputChannels, n_samples);
    detail::read_matrix_rows(is, r.A, kOutputChannels, n_samples);
  }
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// Generation.

struct GenerateConfig {
  int n_train = 500;
  int n_val = 100;
  std::uint64_t master_seed = 1;
  double duration = 1.0;
  IntegratorConfig integrator;   // dt 1e-4, stride 10, zhai by default
  double profile_dx = 0.25;      // m
  double range_lo = 0.8;
  double range_hi = 1.2;
  int workers = 2;
  int max_retries = 3;
  double residual_gate = 1e-4;   // reject records above gate * ||F||_inf
  bool quiet = false;
};

// One data pair; throws NumericalError on divergence or a failed residual
// gate so the caller can retry with a salted seed.
inline DatasetRecord generate_record(const VehicleParams& base,
                                     const ParamSampler& sampler,
                                     const PsdModel& psd,
                                     const GenerateConfig& cfg,
                                     std::uint64_t pair_seed) {
  Rng rng(derive_seed(pair_seed, 0, 0));
  Eigen::VectorXd pvec = sampler.sample(rng);
  VehicleParams p = apply_param_vector(base, pvec.data());
  p.validate();
  auto modal = beam_modal(p.beam);
  auto sys = assemble_codes(p, modal);
  check_window(sys, cfg.duration);

  auto prof = synthesize(psd, p.beam.rail_length, cfg.profile_dx,
                         derive_seed(pair_seed, 1, 0));
  auto exc = profile_excitation(prof, sys);
  TrajectoryRecord traj = integrate(sys, exc, cfg.integrator, cfg.duration);
  if (traj.residual_inf > cfg.residual_gate * traj.forcing_inf)
    throw NumericalError("record failed the residual gate");

  DatasetRecord rec;
  rec.params = pvec;
  rec.irre = std::move(traj.irre);
  rec.X = std::move(traj.X);
  rec.V = std::move(traj.V);
  rec.A = std::move(traj.A);
  return rec;
}

inline Dataset generate_dataset(const VehicleParams& base, const PsdModel& psd,
                                const GenerateConfig& cfg) {
  require(cfg.n_train >= 1 && cfg.n_val >= 0, "need at least one record");
  const int total = cfg.n_train + cfg.n_val;
  ParamSampler sampler = ParamSampler::around(base, cfg.range_lo, cfg.range_hi);

  Dataset d;
  d.master_seed = cfg.master_seed;
  d.n_train = cfg.n_train;
  d.n_val = cfg.n_val;
  d.dt_out = cfg.integrator.dt * cfg.integrator.output_stride;
  d.duration = cfg.duration;
  d.channel_names.assign(output_channel_names().begin(), output_channel_names().end());
  d.param_names.assign(varied_param_names().begin(), varied_param_names().end());
  d.records.resize(static_cast<std::size_t>(total));

  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex err_mu;

  auto fail_with = [&](const std::string& msg) {
    std::scoped_lock lock(err_mu);
    failed.store(true);
    if (first_error.empty()) first_error = msg;
  };
  auto worker = [&]() {
    for (;;) {
      int idx = next.fetch_add(1);
      if (idx >= total || failed.load()) return;
      bool done = false;
      for (int attempt = 0; attempt <= cfg.max_retries && !done; ++attempt) {
        std::uint64_t pair_seed =
            derive_seed(cfg.master_seed, static_cast<std::uint64_t>(attempt),
                        static_cast<std::uint64_t>(idx) + 1);
        try {
          d.records[static_cast<std::size_t>(idx)] =
              generate_record(base, sampler, psd, cfg, pair_seed);
          done = true;
        } catch (const NumericalError& e) {
          // aborted pair: regenerate with a salted seed
          if (!cfg.quiet)
            std::fprintf(stderr, "pair %d attempt %d failed: %s\n", idx, attempt,
                         e.what());
        } catch (const std::exception& e) {
          fail_with("pair " + std::to_string(idx) + ": " + e.what());
          return;
        }
      }
      if (!done)
        fail_with("pair " + std::to_string(idx) + " failed after retries");
    }
  };

  int workers = std::max(1, cfg.workers);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failed.load()) throw NumericalError("generation failed: " + first_error);
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// Normalization statistics (train split only).

struct ChannelStats {
  Eigen::VectorXd mean, stddev;
  std::vector<std::uint8_t> constant;  // passthrough flags

  void resize(int n) {
    mean = Eigen::VectorXd::Zero(n);
    stddev = Eigen::VectorXd::Ones(n);
    constant.assign(static_cast<std::size_t>(n), 0);
  }
};

struct NormStats {
  ChannelStats input;  // 4 irregularity channels + 13 parameters
  ChannelStats x, v, a;  // 14 output channels each

  static constexpr int kInputChannels = 17;
};

namespace detail {

inline void finalize_channel(ChannelStats& cs, int ch, double sum, double sumsq,
                             double count, bool quiet) {
  double mean = sum / count;
  double var = std::max(0.0, sumsq / count - mean * mean);
  double sd = std::sqrt(var);
  cs.mean[ch] = mean;
  if (sd < 1e-14 * std::max(1.0, std::abs(mean))) {
    cs.constant[static_cast<std::size_t>(ch)] = 1;
    cs.stddev[ch] = 1.0;
    if (!quiet)
      std::fprintf(stderr, "warning: constant channel %d, normalization is a passthrough\n", ch);
  } else {
    cs.stddev[ch] = sd;
  }
}

}  // namespace detail

inline NormStats compute_norm_stats(const Dataset& d, bool quiet = false) {
  require(d.n_train >= 1, "stats need a training split");
  NormStats ns;
  ns.input.resize(NormStats::kInputChannels);
  ns.x.resize(kOutputChannels);
  ns.v.resize(kOutputChannels);
  ns.a.resize(kOutputChannels);

  const long S = d.samples();
  const double nt = static_cast<double>(d.n_train);
  // irregularity channels
  for (int ch = 0; ch < 4; ++ch) {
    double sum = 0, sumsq = 0;
    for (int r = 0; r < d.n_train; ++r) {
      sum += d.records[static_cast<std::size_t>(r)].irre.row(ch).sum();
      sumsq += d.records[static_cast<std::size_t>(r)].irre.row(ch).squaredNorm();
    }
    detail::finalize_channel(ns.input, ch, sum, sumsq, nt * static_cast<double>(S), quiet);
  }
  // parameters
  for (int pidx = 0; pidx < 13; ++pidx) {
    double sum = 0, sumsq = 0;
    for (int r = 0; r < d.n_train; ++r) {
      double v = d.records[static_cast<std::size_t>(r)].params[pidx];
      sum += v;
      sumsq += v * v;
    }
    detail::finalize_channel(ns.input, 4 + pidx, sum, sumsq, nt, quiet);
  }
  auto output_stats = [&](ChannelStats& cs, auto member) {
    for (int ch = 0; ch < kOutputChannels; ++ch) {
      double sum = 0, sumsq = 0;
      for (int r = 0; r < d.n_train; ++r) {
        const auto& m = d.records[static_cast<std::size_t>(r)].*member;
        sum += m.row(ch).sum();
        sumsq += m.row(ch).squaredNorm();
      }
      detail::finalize_channel(cs, ch, sum, sumsq, nt * static_cast<double>(S), quiet);
    }
  };
  output_stats(ns.x, &DatasetRecord::X);
  output_stats(ns.v, &DatasetRecord::V);
  output_stats(ns.a, &DatasetRecord::A);
  return ns;
}

namespace detail {

inline void zscore_rows(Eigen::MatrixXd& m, const ChannelStats& cs, int offset,
                        bool forward) {
  for (long ch = 0; ch < m.rows(); ++ch) {
    int c = static_cast<int>(ch) + offset;
    if (cs.constant[static_cast<std::size_t>(c)]) continue;
    if (forward)
      m.row(ch) = (m.row(ch).array() - cs.mean[c]) / cs.stddev[c];
    else
      m.row(ch) = m.row(ch).array() * cs.stddev[c] + cs.mean[c];
  }
}

}  // namespace detail

inline DatasetRecord normalize(const DatasetRecord& rec, const NormStats& ns) {
  DatasetRecord out = rec;
  detail::zscore_rows(out.irre, ns.input, 0, true);
  for (int p = 0; p < 13; ++p) {
    int c = 4 + p;
    if (!ns.input.constant[static_cast<std::size_t>(c)])
      out.params[p] = (out.params[p] - ns.input.mean[c]) / ns.input.stddev[c];
  }
  detail::zscore_rows(out.X, ns.x, 0, true);
  detail::zscore_rows(out.V, ns.v, 0, true);
  detail::zscore_rows(out.A, ns.a, 0, true);
  return out;
}

inline DatasetRecord denormalize(const DatasetRecord& rec, const NormStats& ns) {
  DatasetRecord out = rec;
  detail::zscore_rows(out.irre, ns.input, 0, false);
  for (int p = 0; p < 13; ++p) {
    int c = 4 + p;
    if (!ns.input.constant[static_cast<std::size_t>(c)])
      out.params[p] = out.params[p] * ns.input.stddev[c] + ns.input.mean[c];
  }
  detail::zscore_rows(out.X, ns.x, 0, false);
  detail::zscore_rows(out.V, ns.v, 0, false);
  detail::zscore_rows(out.A, ns.a, 0, false);
  return out;
}

// ---------------------------------------------------------------------------
// ODE magnitude weight factors.

struct WeightFactors {
  Eigen::MatrixXd phi;  // [records x equations], strictly positive
  double sensitivity = 0.02;
  std::uint64_t seed = 0;
};

// Generic path: per-record residual closure over a perturbed (X, V, A)
// triple. Channel-wise Gaussian noise with variance r * Var(channel) is
// injected independently into each of X, V and A.
template <typename ResidualFn>
WeightFactors compute_weight_factors_generic(
    const std::vector<DatasetRecord>& records, ResidualFn&& residual_of,
    int n_equations, double r, std::uint64_t seed, bool perturb = true) {
  require(r > 0.0, "sensitivity r must be positive");
  WeightFactors wf;
  wf.sensitivity = r;
  wf.seed = seed;
  wf.phi.resize(static_cast<long>(records.size()), n_equations);

  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& rec = records[k];
    Eigen::MatrixXd Xp = rec.X, Vp = rec.V, Ap = rec.A;
    if (perturb) {
      Rng rng(derive_seed(seed, 17, static_cast<std::uint64_t>(k)));
      auto add_noise = [&](Eigen::MatrixXd& m) {
        for (long ch = 0; ch < m.rows(); ++ch) {
          double mean = m.row(ch).mean();
          double var = m.row(ch).squaredNorm() / static_cast<double>(m.cols()) -
                       mean * mean;
          double sd = std::sqrt(std::max(0.0, r * var));
          for (long s = 0; s < m.cols(); ++s) m(ch, s) += rng.normal(0.0, sd);
        }
      };
      add_noise(Xp);
      add_noise(Vp);
      add_noise(Ap);
    }
    Eigen::MatrixXd res = residual_of(rec, Xp, Vp, Ap);
    require(res.rows() == n_equations, "residual row count mismatch");
    require(res.allFinite(), "non-finite residual in weight factors");
    for (int i = 0; i < n_equations; ++i)
      wf.phi(static_cast<long>(k), i) = res.row(i).cwiseAbs().maxCoeff();
  }
  return wf;
}

// Vehicle-track path: residuals of the ten vehicle equations with the
// contact force recomputed from the perturbed channels.
inline WeightFactors compute_weight_factors(const Dataset& d,
                                            const VehicleParams& base, double r,
                                            std::uint64_t seed,
                                            bool perturb = true) {
  return compute_weight_factors_generic(
      d.records,
      [&base](const DatasetRecord& rec, const Eigen::MatrixXd& X,
              const Eigen::MatrixXd& V, const Eigen::MatrixXd& A) {
        VehicleParams p = apply_param_vector(base, rec.params.data());
        return vtcd_residual(VehicleBlocks::from(p), X, V, A, rec.irre);
      },
      kResidualEquations, r, seed, perturb);
}

// ---------------------------------------------------------------------------
// Sidecar (stats + weight factors) IO.

namespace detail {

inline constexpr char kSidecarMagic[8] = {'V', 'T', 'L', 'A', 'B', 'S', 'D', '1'};

inline void write_channel_stats(std::ostream& os, const ChannelStats& cs) {
  io::write_u32(os, static_cast<std::uint32_t>(cs.mean.size()));
  io::write_f64_array(os, cs.mean.data(), static_cast<std::size_t>(cs.mean.size()));
  io::write_f64_array(os, cs.stddev.data(), static_cast<std::size_t>(cs.stddev.size()));
  os.write(reinterpret_cast<const char*>(cs.constant.data()),
           static_cast<std::streamsize>(cs.constant.size()));
}

inline ChannelStats read_channel_stats(std::istream& is) {
  ChannelStats cs;
  std::uint32_t n = io::read_u32(is);
  cs.resize(static_cast<int>(n));
  io::read_f64_array(is, cs.mean.data(), n);
  io::read_f64_array(is, cs.stddev.data(), n);
  is.read(reinterpret_cast<char*>(cs.constant.data()), n);
  require(is.good(), "sidecar truncated");
  return cs;
}

}  // namespace detail

inline void save_sidecar(const std::string& path, const NormStats* stats,
                         const WeightFactors* weights) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot open for writing: " + path);
  os.write(detail::kSidecarMagic, 8);
  io::write_u32(os, 1);
  io::write_pod<std::uint8_t>(os, stats ? 1 : 0);
  io::write_pod<std::uint8_t>(os, weights ? 1 : 0);
  if (stats) {
    detail::write_channel_stats(os, stats->input);
    detail::write_channel_stats(os, stats->x);
    detail::write_channel_stats(os, stats->v);
    detail::write_channel_stats(os, stats->a);
  }
  if (weights) {
    io::write_u32(os, static_cast<std::uint32_t>(weights->phi.rows()));
    io::write_u32(os, static_cast<std::uint32_t>(weights->phi.cols()));
    io::write_f64(os, weights->sensitivity);
    io::write_u64(os, weights->seed);
    detail::write_matrix_rows(os, weights->phi);
  }
  require(os.good(), "write failed: " + path);
}

inline std::pair<std::optional<NormStats>, std::optional<WeightFactors>>
load_sidecar(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open sidecar: " + path);
  char magic[8];
  is.read(magic, 8);
  require(is.good() && std::memcmp(magic, detail::kSidecarMagic, 8) == 0,
          "not a sidecar file: " + path);
  require(io::read_u32(is) == 1, "unsupported sidecar version");
  auto has_stats = io::read_pod<std::uint8_t>(is);
  auto has_weights = io::read_pod<std::uint8_t>(is);
  std::optional<NormStats> stats;
  std::optional<WeightFactors> weights;
  if (has_stats) {
    NormStats ns;
    ns.input = detail::read_channel_stats(is);
    ns.x = detail::read_channel_stats(is);
    ns.v = detail::read_channel_stats(is);
    ns.a = detail::read_channel_stats(is);
    stats = std::move(ns);
  }
  if (has_weights) {
    WeightFactors wf;
    std::uint32_t rows = io::read_u32(is);
    std::uint32_t cols = io::read_u32(is);
    wf.sensitivity = io::read_f64(is);
    wf.seed = io::read_u64(is);
    detail::read_matrix_rows(is, wf.phi, rows, cols);
    weights = std::move(wf);
  }
  return {std::move(stats), std::move(weights)};
}

inline std::string sidecar_path(const std::string& dataset_path) {
  return dataset_path + ".side";
}

// Fingerprint of the container bytes, for determinism checks.
inline std::uint64_t file_fingerprint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (is.read(buf, sizeof buf) || is.gcount() > 0)
    h = fnv1a(buf, static_cast<std::size_t>(is.gcount()), h);
  return h;
}

}  // namespace vtlab
