#pragma once

// 1-D Fourier neural operator over the time axis: pointwise lift, L spectral
// blocks sigma(W v + IFFT(R . FFT(v))) with the last block unactivated, and a
// two-layer pointwise projection head. Inputs are the 4 irregularity series,
// the 13 standardized parameters broadcast along time, and a unit time ramp;
// outputs are the 14 response channels.

#include <fstream>
#include <string>
#include <vector>

#include "vtlab/dataset.hpp"
#include "vtlab/tensor.hpp"

namespace vtlab {

struct FnoConfig {
  int width = 72;
  int depth = 3;
  int modes = 16;        // retained Fourier modes per block
  int in_channels = 18;  // 4 irregularity + 13 parameters + time ramp
  int out_channels = 14;
  int proj_hidden = 128;
  ad::Activation act = ad::Activation::gelu;

  void validate() const {
    require(width >= 1 && depth >= 1 && modes >= 1, "bad model dimensions");
    require(in_channels >= 1 && out_channels >= 1 && proj_hidden >= 1,
            "bad channel counts");
  }

  // number of learned scalars (complex entries count twice)
  long parameter_count() const {
    long lift = static_cast<long>(in_channels) * width + width;
    long per_block = 2L * modes * width * width  // spectral weights
                     + static_cast<long>(width) * width + width;
    long proj = static_cast<long>(width) * proj_hidden + proj_hidden +
                static_cast<long>(proj_hidden) * out_channels + out_channels;
    return lift + depth * per_block + proj;
  }
};

// Input channel layout recorded in checkpoints so decoding is unambiguous.
inline std::vector<std::string> input_channel_names() {
  std::vector<std::string> names = {"irre_1", "irre_2", "irre_3", "irre_4"};
  for (const auto& p : varied_param_names()) names.push_back("param_" + p);
  names.emplace_back("time_ramp");
  return names;
}

struct FnoModel {
  FnoConfig cfg;
  ad::Tensor lift_W, lift_b;
  std::vector<ad::Tensor> spec_R;            // complex [modes, width, width]
  std::vector<ad::Tensor> block_W, block_b;  // [1, width, width], [1, width, 1]
  ad::Tensor proj1_W, proj1_b, proj2_W, proj2_b;

  std::vector<ad::Tensor> parameters() {
    std::vector<ad::Tensor> ps = {lift_W, lift_b};
    for (int l = 0; l < cfg.depth; ++l) {
      ps.push_back(spec_R[static_cast<std::size_t>(l)]);
      ps.push_back(block_W[static_cast<std::size_t>(l)]);
      ps.push_back(block_b[static_cast<std::size_t>(l)]);
    }
    ps.push_back(proj1_W);
    ps.push_back(proj1_b);
    ps.push_back(proj2_W);
    ps.push_back(proj2_b);
    return ps;
  }

  long parameter_count() {
    long n = 0;
    for (auto& p : parameters()) n += p.size();
    return n;
  }

  ad::Tensor forward(const ad::Tensor& input) const {
    const auto& s = input.shape();
    require(s.c == cfg.in_channels, "forward: input channel mismatch");
    require(s.t >= 2 * cfg.modes, "forward: time grid shorter than 2*modes");

    ad::Tensor v = ad::pointwise_linear(input, lift_W, lift_b);
    for (int l = 0; l < cfg.depth; ++l) {
      ad::Spectrum spec = ad::rfft(v);
      ad::Spectrum mixed = ad::complex_mode_mul(spec, spec_R[static_cast<std::size_t>(l)]);
      ad::Tensor conv = ad::irfft(mixed, s.t);
      ad::Tensor wv = ad::pointwise_linear(v, block_W[static_cast<std::size_t>(l)],
                                           block_b[static_cast<std::size_t>(l)]);
      v = ad::add(wv, conv);
      if (l + 1 < cfg.depth) v = ad::activation(v, cfg.act);
    }
    ad::Tensor h = ad::activation(ad::pointwise_linear(v, proj1_W, proj1_b), cfg.act);
    return ad::pointwise_linear(h, proj2_W, proj2_b);
  }
};

// Deterministic initialization: gain-corrected uniform fan-in bounds
// sqrt(6/fan_in) on the pointwise layers keep the per-block variance near
// unity under the activation; spectral weights are uniform in
// [0, 1/width^2) per real component.
inline FnoModel init_parameters(const FnoConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  FnoModel m;
  m.cfg = cfg;
  Rng rng(derive_seed(seed, 3, 0));

  auto uniform_fill = [&](ad::Tensor& t, long fan_in) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (long i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-bound, bound);
  };

  m.lift_W = ad::Tensor::param({1, cfg.width, cfg.in_channels});
  uniform_fill(m.lift_W, cfg.in_channels);
  m.lift_b = ad::Tensor::param({1, cfg.width, 1});

  const double spec_scale = 1.0 / (static_cast<double>(cfg.width) * cfg.width);
  for (int l = 0; l < cfg.depth; ++l) {
    ad::Tensor R = ad::Tensor::param({cfg.modes, cfg.width, cfg.width}, true);
    for (long i = 0; i < R.size(); ++i) R.data()[i] = spec_scale * rng.uniform01();
    m.spec_R.push_back(R);
    ad::Tensor W = ad::Tensor::param({1, cfg.width, cfg.width});
    uniform_fill(W, cfg.width);
    m.block_W.push_back(W);
    m.block_b.push_back(ad::Tensor::param({1, cfg.width, 1}));
  }

  m.proj1_W = ad::Tensor::param({1, cfg.proj_hidden, cfg.width});
  uniform_fill(m.proj1_W, cfg.width);
  m.proj1_b = ad::Tensor::param({1, cfg.proj_hidden, 1});
  m.proj2_W = ad::Tensor::param({1, cfg.out_channels, cfg.proj_hidden});
  uniform_fill(m.proj2_W, cfg.proj_hidden);
  m.proj2_b = ad::Tensor::param({1, cfg.out_channels, 1});
  return m;
}

// ---------------------------------------------------------------------------
// Input encoding: [B, 18, T] from normalized records. Channels 0-3 carry the
// z-scored irregularity series, 4-16 the z-scored parameters broadcast along
// time, 17 a linear ramp over [0, 1].

inline ad::Tensor encode_input(const std::vector<const DatasetRecord*>& batch,
                               const NormStats& ns) {
  require(!batch.empty(), "encode_input: empty batch");
  const long T = batch.front()->X.cols();
  const long B = static_cast<long>(batch.size());
  // constant input channels cannot be scaled but are still centered, so a
  // collapsed sampler encodes to zero rather than raw magnitudes
  auto zscore = [&](double v, int ch) {
    if (ns.input.constant[static_cast<std::size_t>(ch)])
      return v - ns.input.mean[ch];
    return (v - ns.input.mean[ch]) / ns.input.stddev[ch];
  };
  ad::Tensor in = ad::Tensor::zeros({B, 18, T});
  for (long b = 0; b < B; ++b) {
    const auto& rec = *batch[static_cast<std::size_t>(b)];
    require(rec.X.cols() == T, "encode_input: ragged batch");
    for (int ch = 0; ch < 4; ++ch)
      for (long t = 0; t < T; ++t) in.at(b, ch, t) = zscore(rec.irre(ch, t), ch);
    for (int p = 0; p < 13; ++p) {
      double v = zscore(rec.params[p], 4 + p);
      for (long t = 0; t < T; ++t) in.at(b, 4 + p, t) = v;
    }
    for (long t = 0; t < T; ++t)
      in.at(b, 17, t) = static_cast<double>(t) / static_cast<double>(T - 1);
  }
  return in;
}

inline ad::Tensor encode_input(const DatasetRecord& rec, const NormStats& ns) {
  return encode_input(std::vector<const DatasetRecord*>{&rec}, ns);
}

// Inverse of encode_input for one batch entry: recovers the physical
// parameter vector and irregularity series.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> decode_input(
    const ad::Tensor& in, long b, const NormStats& ns) {
  const long T = in.shape().t;
  auto invert = [&](double v, int ch) {
    if (ns.input.constant[static_cast<std::size_t>(ch)])
      return v + ns.input.mean[ch];
    return v * ns.input.stddev[ch] + ns.input.mean[ch];
  };
  Eigen::MatrixXd irre(4, T);
  for (int ch = 0; ch < 4; ++ch)
    for (long t = 0; t < T; ++t) irre(ch, t) = invert(in(b, ch, t), ch);
  Eigen::VectorXd params(13);
  for (int p = 0; p < 13; ++p) params[p] = invert(in(b, 4 + p, 0), 4 + p);
  return {params, irre};
}

// ---------------------------------------------------------------------------
// Checkpoints: named-tensor archive with the config, channel layout and
// normalization stats embedded (layout in docs/formats.md).

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'V', 'T', 'L', 'A', 'B', 'C', 'K', '1'};

inline void write_tensor_entry(std::ostream& os, const std::string& name,
                               const ad::Tensor& t) {
  io::write_string(os, name);
  io::write_pod<std::uint8_t>(os, t.is_complex() ? 1 : 0);
  io::write_u32(os, static_cast<std::uint32_t>(t.shape().b));
  io::write_u32(os, static_cast<std::uint32_t>(t.shape().c));
  io::write_u32(os, static_cast<std::uint32_t>(t.shape().t));
  io::write_f64_array(os, t.data(), static_cast<std::size_t>(t.size()));
}

inline std::pair<std::string, ad::Tensor> read_tensor_entry(std::istream& is) {
  std::string name = io::read_string(is);
  bool complex_vals = io::read_pod<std::uint8_t>(is) != 0;
  long b = io::read_u32(is);
  long c = io::read_u32(is);
  long t = io::read_u32(is);
  ad::Tensor out = ad::Tensor::param({b, c, t}, complex_vals);
  io::read_f64_array(is, out.data(), static_cast<std::size_t>(out.size()));
  return {name, out};
}

}  // namespace detail

struct Checkpoint {
  FnoConfig cfg;
  NormStats stats;
  std::vector<std::string> input_layout;
  std::vector<std::string> output_layout;
  std::vector<std::pair<std::string, ad::Tensor>> tensors;
  std::vector<std::pair<std::string, double>> meta;

  const ad::Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
  double meta_or(const std::string& name, double fallback) const {
    for (const auto& [n, v] : meta)
      if (n == name) return v;
    return fallback;
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), "cannot open for writing: " + path);
    os.write(detail::kCheckpointMagic, 8);
    io::write_u32(os, 1);
    io::write_u32(os, static_cast<std::uint32_t>(cfg.width));
    io::write_u32(os, static_cast<std::uint32_t>(cfg.depth));
    io::write_u32(os, static_cast<std::uint32_t>(cfg.modes));
    io::write_u32(os, static_cast<std::uint32_t>(cfg.in_channels));
    io::write_u32(os, static_cast<std::uint32_t>(cfg.out_channels));
    io::write_u32(os, static_cast<std::uint32_t>(cfg.proj_hidden));
    io::write_u32(os, static_cast<std::uint32_t>(cfg.act));
    io::write_u32(os, static_cast<std::uint32_t>(input_layout.size()));
    for (const auto& s : input_layout) io::write_string(os, s);
    io::write_u32(os, static_cast<std::uint32_t>(output_layout.size()));
    for (const auto& s : output_layout) io::write_string(os, s);
    detail::write_channel_stats(os, stats.input);
    detail::write_channel_stats(os, stats.x);
    detail::write_channel_stats(os, stats.v);
    detail::write_channel_stats(os, stats.a);
    io::write_u32(os, static_cast<std::uint32_t>(meta.size()));
    for (const auto& [n, v] : meta) {
      io::write_string(os, n);
      io::write_f64(os, v);
    }
    io::write_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [n, t] : tensors) detail::write_tensor_entry(os, n, t);
    require(os.good(), "write failed: " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    require(is.good() && std::memcmp(magic, detail::kCheckpointMagic, 8) == 0,
            "not a checkpoint: " + path);
    require(io::read_u32(is) == 1, "unsupported checkpoint version");
    Checkpoint ck;
    ck.cfg.width = static_cast<int>(io::read_u32(is));
    ck.cfg.depth = static_cast<int>(io::read_u32(is));
    ck.cfg.modes = static_cast<int>(io::read_u32(is));
    ck.cfg.in_channels = static_cast<int>(io::read_u32(is));
    ck.cfg.out_channels = static_cast<int>(io::read_u32(is));
    ck.cfg.proj_hidden = static_cast<int>(io::read_u32(is));
    ck.cfg.act = static_cast<ad::Activation>(io::read_u32(is));
    ck.input_layout.resize(io::read_u32(is));
    for (auto& s : ck.input_layout) s = io::read_string(is);
    ck.output_layout.resize(io::read_u32(is));
    for (auto& s : ck.output_layout) s = io::read_string(is);
    ck.stats.input = detail::read_channel_stats(is);
    ck.stats.x = detail::read_channel_stats(is);
    ck.stats.v = detail::read_channel_stats(is);
    ck.stats.a = detail::read_channel_stats(is);
    std::uint32_t n_meta = io::read_u32(is);
    for (std::uint32_t i = 0; i < n_meta; ++i) {
      std::string n = io::read_string(is);
      double v = io::read_f64(is);
      ck.meta.emplace_back(std::move(n), v);
    }
    std::uint32_t n_tensors = io::read_u32(is);
    for (std::uint32_t i = 0; i < n_tensors; ++i)
      ck.tensors.push_back(detail::read_tensor_entry(is));
    return ck;
  }
};

inline std::vector<std::pair<std::string, ad::Tensor>> named_model_tensors(
    FnoModel& m) {
  std::vector<std::pair<std::string, ad::Tensor>> out;
  out.emplace_back("lift.W", m.lift_W);
  out.emplace_back("lift.b", m.lift_b);
  for (int l = 0; l < m.cfg.depth; ++l) {
    std::string p = "block" + std::to_string(l);
    out.emplace_back(p + ".R", m.spec_R[static_cast<std::size_t>(l)]);
    out.emplace_back(p + ".W", m.block_W[static_cast<std::size_t>(l)]);
    out.emplace_back(p + ".b", m.block_b[static_cast<std::size_t>(l)]);
  }
  out.emplace_back("proj1.W", m.proj1_W);
  out.emplace_back("proj1.b", m.proj1_b);
  out.emplace_back("proj2.W", m.proj2_W);
  out.emplace_back("proj2.b", m.proj2_b);
  return out;
}

inline Checkpoint make_checkpoint(FnoModel& m, const NormStats& stats) {
  Checkpoint ck;
  ck.cfg = m.cfg;
  ck.stats = stats;
  ck.input_layout = input_channel_names();
  ck.output_layout.assign(output_channel_names().begin(), output_channel_names().end());
  ck.tensors = named_model_tensors(m);
  return ck;
}

inline FnoModel model_from_checkpoint(const Checkpoint& ck) {
  FnoModel m = init_parameters(ck.cfg, 0);
  for (auto& [name, t] : named_model_tensors(m)) {
    const ad::Tensor* src = ck.find(name);
    require(src != nullptr, "checkpoint missing tensor: " + name);
    require(src->shape() == t.shape() && src->is_complex() == t.is_complex(),
            "checkpoint tensor shape mismatch: " + name);
    std::copy(src->data(), src->data() + src->size(), t.data());
  }
  return m;
}

}  // namespace vtlab
