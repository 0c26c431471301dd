#pragma once

// Training loop, Adam, the step learning-rate schedule, and relative-L2
// evaluation.
//
// Loss frames: the data and derivative losses are computed on z-scored
// channels (X, V, A standardized by their own training-split stats) so the
// terms share scale; the ODE residual loss runs in physical units on the
// denormalized prediction. Reported metrics are always physical.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <limits>
#include <map>
#include <thread>

#include "vtlab/fno.hpp"
#include "vtlab/losses.hpp"

namespace vtlab {

inline double lr_schedule(int epoch, double lr0 = 5e-4, double decay = 0.75,
                          int every = 30) {
  require(epoch >= 0, "epoch must be nonnegative");
  require(lr0 > 0 && decay > 0 && decay <= 1.0 && every >= 1, "bad schedule");
  double lr = lr0;
  for (int k = 0; k < epoch / every; ++k) lr *= decay;
  return lr;
}

struct TrainConfig {
  double lr0 = 5e-4;
  double decay = 0.75;
  int decay_every = 30;
  int epochs = 100;
  int batch_size = 20;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  LossConfig loss;
  FnoConfig model;
  std::uint64_t model_seed = 1;

  void validate() const {
    require(lr0 > 0 && decay > 0 && decay <= 1.0, "bad learning-rate schedule");
    require(epochs >= 1 && batch_size >= 1, "bad epochs/batch size");
    loss.validate();
    model.validate();
  }
};

struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;
  std::vector<std::vector<double>> m, v;

  void init(std::vector<ad::Tensor>& params) {
    m.clear();
    v.clear();
    for (auto& p : params) {
      m.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
      v.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
    }
    t = 0;
  }

  void step(std::vector<ad::Tensor>& params, double lr) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (!p.has_grad()) continue;
      const double* g = p.grad_data();
      double* mv = m[i].data();
      double* vv = v[i].data();
      double* w = p.data();
      const long n = p.size();
      for (long j = 0; j < n; ++j) {
        mv[j] = beta1 * mv[j] + (1.0 - beta1) * g[j];
        vv[j] = beta2 * vv[j] + (1.0 - beta2) * g[j] * g[j];
        w[j] -= lr * (mv[j] / bc1) / (std::sqrt(vv[j] / bc2) + eps);
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Relative-L2 evaluation over a dataset split, physical units, pooled over
// the split's records per channel. Derivative rows compare finite
// differences of the prediction against the integrator-stored V and A on the
// trimmed interior.

struct EvalReport {
  Eigen::MatrixXd channel_pct;  // [3 x 14]: solutions, d1, d2
  Eigen::Vector3d aggregate_pct;
  std::vector<std::string> channel_names;
  std::map<std::string, double> timings;

  std::string to_text() const {
    std::string s = "eval v1\n";
    s += "channels";
    for (const auto& n : channel_names) s += " " + n;
    s += "\n";
    const char* rows[3] = {"solutions_pct", "first_derivatives_pct",
                           "second_derivatives_pct"};
    char buf[64];
    for (int r = 0; r < 3; ++r) {
      s += rows[r];
      for (long c = 0; c < channel_pct.cols(); ++c) {
        std::snprintf(buf, sizeof buf, " %.6f", channel_pct(r, c));
        s += buf;
      }
      s += "\n";
    }
    s += "aggregate_pct";
    for (int r = 0; r < 3; ++r) {
      std::snprintf(buf, sizeof buf, " %.6f", aggregate_pct[r]);
      s += buf;
    }
    s += "\n";
    for (const auto& [k, v] : timings) {
      std::snprintf(buf, sizeof buf, " %.6f", v);
      s += "timing_" + k + buf + "\n";
    }
    return s;
  }
};

// Forward a batch and return the denormalized physical prediction. Larger
// batches are processed in cache-resident chunks; per-sample results are
// identical bits either way.
inline ad::Tensor predict_physical(const FnoModel& model,
                                   const std::vector<const DatasetRecord*>& batch,
                                   const NormStats& ns, int chunk = 1) {
  const long B = static_cast<long>(batch.size());
  if (B <= chunk) {
    ad::Tensor in = encode_input(batch, ns);
    ad::Tensor out = model.forward(in);
    return ad::affine_channels(out, ns.x.stddev, ns.x.mean);
  }
  ad::NoGradGuard ng;
  const long T = batch.front()->X.cols();
  ad::Tensor full = ad::Tensor::zeros({B, kOutputChannels, T});
  for (long start = 0; start < B; start += chunk) {
    long stop = std::min(B, start + chunk);
    std::vector<const DatasetRecord*> part(batch.begin() + start,
                                           batch.begin() + stop);
    ad::Tensor in = encode_input(part, ns);
    ad::Tensor out = model.forward(in);
    ad::Tensor phys = ad::affine_channels(out, ns.x.stddev, ns.x.mean);
    std::copy(phys.data(), phys.data() + phys.size(),
              full.data() + start * kOutputChannels * T);
  }
  return full;
}

// Generic metric core: predict_fn maps a batch of records to the physical
// prediction tensor (the model path in production, an injected oracle in
// tests).
template <typename PredictFn>
EvalReport evaluate_with(PredictFn&& predict_fn, const Dataset& data, int begin,
                         int end, int batch_size = 25, int trim = 2) {
  require(begin >= 0 && end <= data.size() && begin < end, "empty split");
  ad::NoGradGuard ng;
  const long T = data.samples();
  const double dt = data.dt_out;

  Eigen::MatrixXd num = Eigen::MatrixXd::Zero(3, kOutputChannels);
  Eigen::MatrixXd den = Eigen::MatrixXd::Zero(3, kOutputChannels);

  for (int start = begin; start < end; start += batch_size) {
    int stop = std::min(end, start + batch_size);
    std::vector<const DatasetRecord*> batch;
    for (int r = start; r < stop; ++r)
      batch.push_back(&data.records[static_cast<std::size_t>(r)]);
    ad::Tensor pred = predict_fn(batch);
    ad::Tensor d1 = numerical_derivative(pred, dt, 1);
    ad::Tensor d2 = numerical_derivative(pred, dt, 2);
    for (long b = 0; b < static_cast<long>(batch.size()); ++b) {
      const auto& rec = *batch[static_cast<std::size_t>(b)];
      for (int c = 0; c < kOutputChannels; ++c) {
        for (long t = 0; t < T; ++t) {
          double dx = pred(b, c, t) - rec.X(c, t);
          num(0, c) += dx * dx;
          den(0, c) += rec.X(c, t) * rec.X(c, t);
        }
        for (long t = trim; t < T - trim; ++t) {
          double dv = d1(b, c, t) - rec.V(c, t);
          double da = d2(b, c, t) - rec.A(c, t);
          num(1, c) += dv * dv;
          den(1, c) += rec.V(c, t) * rec.V(c, t);
          num(2, c) += da * da;
          den(2, c) += rec.A(c, t) * rec.A(c, t);
        }
      }
    }
  }

  EvalReport rep;
  rep.channel_names = data.channel_names;
  rep.channel_pct.resize(3, kOutputChannels);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < kOutputChannels; ++c)
      rep.channel_pct(r, c) =
          100.0 * std::sqrt(num(r, c) / std::max(den(r, c), 1e-300));
  rep.aggregate_pct = rep.channel_pct.rowwise().mean();
  return rep;
}

inline EvalReport evaluate(const FnoModel& model, const NormStats& ns,
                           const Dataset& data, int begin, int end,
                           int batch_size = 25, int trim = 2) {
  return evaluate_with(
      [&](const std::vector<const DatasetRecord*>& batch) {
        return predict_physical(model, batch, ns);
      },
      data, begin, end, batch_size, trim);
}

// ---------------------------------------------------------------------------
// Training.

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_solutions = 0.0;
  double val_first = 0.0;
  double val_second = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> curve;
  int best_epoch = -1;
  double best_val = 0.0;
  Checkpoint best;
  Checkpoint last;
};

namespace detail {

inline Checkpoint training_checkpoint(FnoModel& model, const NormStats& ns,
                                      Adam& adam, std::vector<ad::Tensor>& params,
                                      int next_epoch, int best_epoch,
                                      double best_val,
                                      const std::vector<ad::Tensor>& best_params) {
  Checkpoint ck = make_checkpoint(model, ns);
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor mt = ad::Tensor::zeros(params[i].shape(), false, params[i].is_complex());
    std::copy(adam.m[i].begin(), adam.m[i].end(), mt.data());
    ck.tensors.emplace_back("adam.m." + std::to_string(i), mt);
    ad::Tensor vt = ad::Tensor::zeros(params[i].shape(), false, params[i].is_complex());
    std::copy(adam.v[i].begin(), adam.v[i].end(), vt.data());
    ck.tensors.emplace_back("adam.v." + std::to_string(i), vt);
  }
  for (std::size_t i = 0; i < best_params.size(); ++i) {
    ad::Tensor bt = ad::Tensor::zeros(best_params[i].shape(), false,
                                      best_params[i].is_complex());
    std::copy(best_params[i].data(), best_params[i].data() + best_params[i].size(),
              bt.data());
    ck.tensors.emplace_back("best." + std::to_string(i), bt);
  }
  ck.meta.emplace_back("next_epoch", static_cast<double>(next_epoch));
  ck.meta.emplace_back("adam_t", static_cast<double>(adam.t));
  ck.meta.emplace_back("best_epoch", static_cast<double>(best_epoch));
  ck.meta.emplace_back("best_val", best_val);
  return ck;
}

}  // namespace detail

// Deterministic single-worker training. Per-epoch batch order is a pure
// function of (seed, epoch), so a resumed run reproduces an uninterrupted
// one exactly. Returns the best-validation checkpoint (by the solutions
// relative-L2) plus the final state for resumption.
inline TrainResult train(const TrainConfig& cfg, const Dataset& data,
                         const NormStats& ns, const VehicleParams& base,
                         const WeightFactors* wf = nullptr,
                         const Checkpoint* resume = nullptr,
                         bool verbose = false) {
  cfg.validate();
  require(data.n_train >= 1 && data.n_val >= 1, "train and val splits required");
  if (cfg.loss.mode == LossMode::weighted_ode)
    require(wf != nullptr && wf->phi.rows() == data.size(),
            "weighted mode needs weight factors for every record");

  FnoModel model = init_parameters(cfg.model, cfg.model_seed);
  auto params = model.parameters();
  Adam adam;
  adam.beta1 = cfg.adam_beta1;
  adam.beta2 = cfg.adam_beta2;
  adam.eps = cfg.adam_eps;
  adam.init(params);

  std::vector<ad::Tensor> best_params;
  for (auto& p : params) {
    ad::Tensor cp = ad::Tensor::zeros(p.shape(), false, p.is_complex());
    std::copy(p.data(), p.data() + p.size(), cp.data());
    best_params.push_back(cp);
  }

  int start_epoch = 0;
  int best_epoch = -1;
  double best_val = std::numeric_limits<double>::infinity();
  if (resume) {
    require(resume->cfg.parameter_count() == cfg.model.parameter_count(),
            "resume checkpoint does not match the model config");
    auto named = named_model_tensors(model);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const ad::Tensor* src = resume->find(named[i].first);
      require(src != nullptr, "resume checkpoint missing " + named[i].first);
      std::copy(src->data(), src->data() + src->size(), params[i].data());
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const ad::Tensor* mt = resume->find("adam.m." + std::to_string(i));
      const ad::Tensor* vt = resume->find("adam.v." + std::to_string(i));
      const ad::Tensor* bt = resume->find("best." + std::to_string(i));
      require(mt && vt && bt, "resume checkpoint lacks optimizer state");
      std::copy(mt->data(), mt->data() + mt->size(), adam.m[i].data());
      std::copy(vt->data(), vt->data() + vt->size(), adam.v[i].data());
      std::copy(bt->data(), bt->data() + bt->size(), best_params[i].data());
    }
    adam.t = static_cast<long>(resume->meta_or("adam_t", 0.0));
    start_epoch = static_cast<int>(resume->meta_or("next_epoch", 0.0));
    best_epoch = static_cast<int>(resume->meta_or("best_epoch", -1.0));
    best_val = resume->meta_or("best_val", best_val);
  }

  const double dt = data.dt_out;
  TrainResult result;

  auto record_best = [&]() {
    for (std::size_t i = 0; i < params.size(); ++i)
      std::copy(params[i].data(), params[i].data() + params[i].size(),
                best_params[i].data());
  };

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg.lr0, cfg.decay, cfg.decay_every);

    std::vector<int> order(static_cast<std::size_t>(data.n_train));
    for (int i = 0; i < data.n_train; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng shuffle_rng(derive_seed(cfg.seed, 100, static_cast<std::uint64_t>(epoch)));
    shuffle(order, shuffle_rng);

    double epoch_loss = 0.0;
    long batches = 0;
    for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<const DatasetRecord*> batch;
      std::vector<int> batch_ids;
      for (std::size_t i = pos;
           i < std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size)); ++i) {
        batch.push_back(&data.records[static_cast<std::size_t>(order[i])]);
        batch_ids.push_back(order[i]);
      }
      const long B = static_cast<long>(batch.size());
      const long T = data.samples();

      ad::Tensor in = encode_input(batch, ns);
      ad::Tensor out_norm = model.forward(in);

      // normalized truth targets
      ad::Tensor xt = ad::Tensor::zeros({B, kOutputChannels, T});
      ad::Tensor vt = ad::Tensor::zeros({B, kOutputChannels, T});
      ad::Tensor at = ad::Tensor::zeros({B, kOutputChannels, T});
      for (long b = 0; b < B; ++b) {
        DatasetRecord norm = normalize(*batch[static_cast<std::size_t>(b)], ns);
        for (int c = 0; c < kOutputChannels; ++c)
          for (long t = 0; t < T; ++t) {
            xt.at(b, c, t) = norm.X(c, t);
            vt.at(b, c, t) = norm.V(c, t);
            at.at(b, c, t) = norm.A(c, t);
          }
      }

      ad::Tensor dl = data_loss(out_norm, xt, dt);
      ad::Tensor ode, dd;
      if (cfg.loss.mode == LossMode::plain_ode ||
          cfg.loss.mode == LossMode::weighted_ode) {
        ad::Tensor pred_phys = ad::affine_channels(out_norm, ns.x.stddev, ns.x.mean);
        auto spec = vtcd_batch_spec(batch, base);
        Eigen::MatrixXd phi;
        if (cfg.loss.mode == LossMode::weighted_ode) {
          phi.resize(B, wf->phi.cols());
          for (long b = 0; b < B; ++b)
            phi.row(b) = wf->phi.row(batch_ids[static_cast<std::size_t>(b)]);
        }
        ode = ode_residual_loss(spec, pred_phys, dt, cfg.loss,
                                cfg.loss.mode == LossMode::weighted_ode ? &phi : nullptr);
      } else if (cfg.loss.mode == LossMode::direct_deriv) {
        // z-scored derivative supervision: differentiate the physical
        // prediction, then standardize by the derivative stats
        ad::Tensor pred_phys = ad::affine_channels(out_norm, ns.x.stddev, ns.x.mean);
        ad::Tensor d1 = numerical_derivative(pred_phys, dt, 1);
        ad::Tensor d2 = numerical_derivative(pred_phys, dt, 2);
        Eigen::VectorXd v_inv = ns.v.stddev.cwiseInverse();
        Eigen::VectorXd a_inv = ns.a.stddev.cwiseInverse();
        ad::Tensor d1n = ad::affine_channels(d1, v_inv, (-ns.v.mean.array() * v_inv.array()).matrix());
        ad::Tensor d2n = ad::affine_channels(d2, a_inv, (-ns.a.mean.array() * a_inv.array()).matrix());
        dd = ad::add(data_loss(d1n, vt, dt, cfg.loss.trim),
                     data_loss(d2n, at, dt, cfg.loss.trim));
      }
      ad::Tensor loss = total_loss(cfg.loss, dl, ode, dd);
      double loss_val = loss.item();

      if (!std::isfinite(loss_val)) {
        result.last = detail::training_checkpoint(model, ns, adam, params, epoch,
                                                  best_epoch, best_val, best_params);
        throw NumericalError("non-finite training loss at epoch " +
                             std::to_string(epoch));
      }

      ad::zero_grad(params);
      ad::backward(loss);
      adam.step(params, lr);
      epoch_loss += loss_val;
      ++batches;
    }
    epoch_loss /= static_cast<double>(batches);

    EvalReport val = evaluate(model, ns, data, data.n_train, data.size());
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_loss = epoch_loss;
    log.val_solutions = val.aggregate_pct[0];
    log.val_first = val.aggregate_pct[1];
    log.val_second = val.aggregate_pct[2];
    result.curve.push_back(log);
    if (verbose)
      std::fprintf(stderr,
                   "epoch %4d  lr %.3e  loss %.6e  val %%L2 %.3f / %.3f / %.3f\n",
                   epoch, lr, epoch_loss, log.val_solutions, log.val_first,
                   log.val_second);

    if (log.val_solutions < best_val) {
      best_val = log.val_solutions;
      best_epoch = epoch;
      record_best();
    }
  }

  // package checkpoints: best-model tensors under the model names
  FnoModel best_model = init_parameters(cfg.model, cfg.model_seed);
  auto bp = best_model.parameters();
  for (std::size_t i = 0; i < bp.size(); ++i)
    std::copy(best_params[i].data(), best_params[i].data() + best_params[i].size(),
              bp[i].data());
  result.best = make_checkpoint(best_model, ns);
  result.best.meta.emplace_back("best_epoch", static_cast<double>(best_epoch));
  result.best.meta.emplace_back("best_val", best_val);
  result.last = detail::training_checkpoint(model, ns, adam, params, cfg.epochs,
                                            best_epoch, best_val, best_params);
  result.best_epoch = best_epoch;
  result.best_val = best_val;
  return result;
}

}  // namespace vtlab
