#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>

#include "casr/errors.hpp"
#include "casr/transducer.hpp"

namespace casr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

void check_lattice_inputs(const Tensor& logits, const TokenSequence& y, const char* op) {
  if (logits.rank() != 3 || logits.dim(1) != y.size() + 1 || logits.dim(2) < 2) {
    throw DimensionError(std::string(op) + ": logits " + shape_to_string(logits.shape()) +
                         " do not match label length " + std::to_string(y.size()));
  }
  if (logits.dim(0) == 0) {
    throw InputError(std::string(op) + ": infeasible alignment, no encoder frames");
  }
  validate_tokens(y, logits.dim(2) - 1);
  for (double v : logits.values()) {
    if (std::isnan(v)) throw InputError(std::string(op) + ": NaN in logits");
  }
}

// Log-softmax over the last axis: [T x (U+1) x K].
std::vector<double> log_softmax_last(const Tensor& logits) {
  const std::size_t K = logits.shape().back();
  const std::size_t rows = logits.numel() / K;
  const auto x = logits.values();
  std::vector<double> out(logits.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = kNegInf;
    for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, x[r * K + k]);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(x[r * K + k] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t k = 0; k < K; ++k) out[r * K + k] = x[r * K + k] - lz;
  }
  return out;
}

LossResult transducer_loss(const Tensor& logits, const TokenSequence& y, double lambda_fe,
                           const char* op) {
  check_lattice_inputs(logits, y, op);
  const std::size_t T = logits.dim(0), U = y.size(), U1 = U + 1, K = logits.dim(2);
  auto lp = std::make_shared<std::vector<double>>(log_softmax_last(logits));
  auto blank = [&lp, U1, K](std::size_t t, std::size_t u) { return (*lp)[(t * U1 + u) * K]; };
  auto label = [&lp, &y, U1, K](std::size_t t, std::size_t u) {
    return (*lp)[(t * U1 + u) * K + static_cast<std::size_t>(y[u])];
  };

  Lattice lat;
  lat.T = T;
  lat.U = U;
  lat.alpha.assign(T * U1, kNegInf);
  lat.beta.assign(T * U1, kNegInf);
  auto A = [&lat, U1](std::size_t t, std::size_t u) -> double& { return lat.alpha[t * U1 + u]; };
  auto B = [&lat, U1](std::size_t t, std::size_t u) -> double& { return lat.beta[t * U1 + u]; };

  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u < U1; ++u) {
      if (t == 0 && u == 0) {
        A(0, 0) = 0.0;
        continue;
      }
      double v = kNegInf;
      if (t > 0) v = log_add(v, A(t - 1, u) + blank(t - 1, u));
      if (u > 0) v = log_add(v, A(t, u - 1) + label(t, u - 1));
      A(t, u) = v;
    }
  }
  for (std::size_t t = T; t-- > 0;) {
    for (std::size_t u = U1; u-- > 0;) {
      if (t == T - 1 && u == U) {
        B(t, u) = blank(t, u);
        continue;
      }
      double v = kNegInf;
      if (t + 1 < T) v = log_add(v, B(t + 1, u) + blank(t, u));
      if (u < U) v = log_add(v, B(t, u + 1) + label(t, u));
      B(t, u) = v;
    }
  }
  lat.log_likelihood = A(T - 1, U) + blank(T - 1, U);
  if (!std::isfinite(lat.log_likelihood)) {
    throw InputError(std::string(op) + ": log-likelihood is not finite");
  }

  Tensor loss = Tensor::scalar(-lat.log_likelihood);
  Tape* tape = recording_tape({&logits});
  if (tape != nullptr) {
    auto shared_lat = std::make_shared<Lattice>(lat);
    const double label_scale = 1.0 + lambda_fe;
    tape->record({logits}, loss, [logits, loss, y, lp, shared_lat, T, U, U1, K, label_scale](Tape& tp) {
      const double g = tp.grad(loss)[0];
      auto gx = tp.grad_buffer(logits);
      const Lattice& L = *shared_lat;
      const double ll = L.log_likelihood;
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t u = 0; u < U1; ++u) {
          const double* row = lp->data() + (t * U1 + u) * K;
          const double a = L.a(t, u);
          // d(-log P)/d log p(blank | t, u)
          double next_blank = kNegInf;
          if (t + 1 < T) next_blank = L.b(t + 1, u);
          else if (u == U) next_blank = 0.0;
          const double d_blank =
              next_blank == kNegInf ? 0.0 : -std::exp(a + row[0] + next_blank - ll);
          double d_label = 0.0;
          std::size_t label_id = 0;
          if (u < U) {
            label_id = static_cast<std::size_t>(y[u]);
            d_label = -std::exp(a + row[label_id] + L.b(t, u + 1) - ll) * label_scale;
          }
          const double total = d_blank + d_label;
          double* grow = gx.data() + (t * U1 + u) * K;
          for (std::size_t k = 0; k < K; ++k) {
            double d = -std::exp(row[k]) * total;
            if (k == 0) d += d_blank;
            if (u < U && k == label_id) d += d_label;
            grow[k] += g * d;
          }
        }
      }
    });
  }
  return {loss, std::move(lat)};
}

}  // namespace

LossResult rnnt_loss(const Tensor& logits, const TokenSequence& y) {
  return transducer_loss(logits, y, 0.0, "rnnt_loss");
}

LossResult fastemit_rnnt_loss(const Tensor& logits, const TokenSequence& y, double lambda_fe) {
  if (!(lambda_fe >= 0.0)) throw InputError("fastemit_rnnt_loss: lambda_fe must be >= 0");
  return transducer_loss(logits, y, lambda_fe, "fastemit_rnnt_loss");
}

double brute_force_loss(const Tensor& logits, const TokenSequence& y, std::size_t* path_count) {
  if (logits.rank() != 3 || logits.dim(1) != y.size() + 1) {
    throw DimensionError("brute_force_loss: logits " + shape_to_string(logits.shape()) +
                         " do not match label length " + std::to_string(y.size()));
  }
  const std::size_t T = logits.dim(0), U = y.size(), K = logits.dim(2);
  if (T + U > 12) throw InputError("brute_force_loss: T + U > 12 refused");
  if (T == 0) throw InputError("brute_force_loss: no encoder frames");
  validate_tokens(y, K - 1);

  auto log_prob = [&](std::size_t t, std::size_t u, std::size_t k) {
    const std::size_t base = (t * (U + 1) + u) * K;
    double z = 0.0;
    for (std::size_t j = 0; j < K; ++j) z += std::exp(logits[base + j]);
    return logits[base + k] - std::log(z);
  };

  // Enumerate every ordering of (T-1) blanks and U labels, then the final blank.
  double total = kNegInf;
  std::size_t paths = 0;
  const std::size_t moves = T - 1 + U;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << moves); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != U) continue;
    std::size_t t = 0, u = 0;
    double score = 0.0;
    for (std::size_t m = 0; m < moves; ++m) {
      if (mask & (std::uint64_t{1} << m)) {
        score += log_prob(t, u, static_cast<std::size_t>(y[u]));
        ++u;
      } else {
        score += log_prob(t, u, 0);
        ++t;
      }
    }
    score += log_prob(T - 1, U, 0);
    total = log_add(total, score);
    ++paths;
  }
  if (path_count != nullptr) *path_count = paths;
  return -total;
}

EncoderMode sample_path(double lambda, Rng& rng) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InputError("sample_path: lambda must lie in [0, 1]");
  return rng.uniform() < lambda ? EncoderMode::kCausal : EncoderMode::kNonCausal;
}

std::string to_string(LossStrategy s) { return s == LossStrategy::kSampled ? "sampled" : "weighted"; }

LossStrategy parse_loss_strategy(const std::string& s) {
  if (s == "sampled") return LossStrategy::kSampled;
  if (s == "weighted") return LossStrategy::kWeighted;
  throw InputError("unknown loss strategy '" + s + "' (expected sampled|weighted)");
}

namespace {

Tensor loss_from_encoder(const EncoderOutput& e, const Tensor& pred, const TokenSequence& y,
                         const CascadedModel& model, double beta) {
  const Tensor logits = model.joint().forward(e.features, pred);
  if (e.mode == EncoderMode::kCausal) return fastemit_rnnt_loss(logits, y, beta).loss;
  return rnnt_loss(logits, y).loss;
}

}  // namespace

Tensor path_loss(const FeatureSequence& raw, const TokenSequence& y, const CascadedModel& model,
                 EncoderMode mode, double beta) {
  const Tensor pred = model.prediction().forward(y);
  return loss_from_encoder(model.encode(raw, mode), pred, y, model, beta);
}

CombinedLoss combined_loss(const FeatureSequence& raw, const TokenSequence& y,
                           const CascadedModel& model, double lambda, double beta, Rng& rng,
                           LossStrategy strategy) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InputError("combined_loss: lambda must lie in [0, 1]");
  if (!(beta >= 0.0)) throw InputError("combined_loss: beta must be >= 0");
  if (strategy == LossStrategy::kSampled) {
    const EncoderMode mode = sample_path(lambda, rng);
    return {path_loss(raw, y, model, mode, beta), mode};
  }
  const Tensor pred = model.prediction().forward(y);
  const EncoderOutput e_s = causal_encode(model.prepare(raw), model.causal_encoder());
  if (lambda == 1.0) return {loss_from_encoder(e_s, pred, y, model, beta), std::nullopt};
  const EncoderOutput e_a = cascade_encode(e_s, model.cascade_encoder());
  const Tensor l_a = loss_from_encoder(e_a, pred, y, model, beta);
  if (lambda == 0.0) return {l_a, std::nullopt};
  const Tensor l_s = loss_from_encoder(e_s, pred, y, model, beta);
  return {add(mul(l_s, lambda), mul(l_a, 1.0 - lambda)), std::nullopt};
}

}  // namespace casr
