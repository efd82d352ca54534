#include <cmath>

#include "casr/encoders.hpp"
#include "casr/errors.hpp"

namespace casr {

namespace {

double sigm(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Per-step activations kept for backpropagation through time.
struct LstmTrace {
  std::vector<double> gates;   // [T x 4h] post-nonlinearity i, f, g, o
  std::vector<double> cell;    // [T x h]
  std::vector<double> tanh_c;  // [T x h]
  std::vector<double> hidden;  // [T x h] o * tanh(c), pre-projection
  std::vector<double> out;     // [T x p]
  std::vector<double> init_cell;
  std::vector<double> init_out;
};

}  // namespace

LstmParams LstmParams::create(ParamStore& store, const std::string& name, std::size_t in,
                              std::size_t hidden, std::size_t proj, Rng& rng) {
  LstmParams p;
  p.w_input = store.uniform(name + "/w_input", {in, 4 * hidden}, in, rng);
  p.w_recurrent = store.uniform(name + "/w_recurrent", {proj, 4 * hidden}, proj, rng);
  std::vector<double> bias(4 * hidden, 0.0);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) bias[j] = 1.0;
  p.bias = store.constant(name + "/bias", {4 * hidden}, 0.0);
  std::copy(bias.begin(), bias.end(), p.bias.mutable_values().begin());
  p.w_proj = store.uniform(name + "/w_proj", {hidden, proj}, hidden, rng);
  return p;
}

Tensor lstm_recurrence(const Tensor& gate_inputs, const LstmParams& p, LstmState* state) {
  const std::size_t H = p.hidden(), P = p.proj();
  if (gate_inputs.rank() != 2 || gate_inputs.dim(1) != 4 * H || p.w_recurrent.dim(0) != P ||
      p.w_recurrent.dim(1) != 4 * H || p.bias.numel() != 4 * H) {
    throw DimensionError("lstm: gate inputs " + shape_to_string(gate_inputs.shape()) +
                         " inconsistent with recurrent weights " +
                         shape_to_string(p.w_recurrent.shape()) + " and projection " +
                         shape_to_string(p.w_proj.shape()));
  }
  const std::size_t T = gate_inputs.dim(0);
  const std::size_t G = 4 * H;
  const auto gin = gate_inputs.values();
  const auto wr = p.w_recurrent.values();
  const auto bias = p.bias.values();
  const auto wp = p.w_proj.values();

  auto trace = std::make_shared<LstmTrace>();
  trace->gates.resize(T * G);
  trace->cell.resize(T * H);
  trace->tanh_c.resize(T * H);
  trace->hidden.resize(T * H);
  trace->out.assign(T * P, 0.0);
  trace->init_cell = state ? state->cell : std::vector<double>(H, 0.0);
  trace->init_out = state ? state->output : std::vector<double>(P, 0.0);
  if (trace->init_cell.size() != H || trace->init_out.size() != P) {
    throw DimensionError("lstm: initial state size mismatch");
  }

  std::vector<double> rec(G);
  for (std::size_t t = 0; t < T; ++t) {
    const double* r_prev = t == 0 ? trace->init_out.data() : trace->out.data() + (t - 1) * P;
    const double* c_prev = t == 0 ? trace->init_cell.data() : trace->cell.data() + (t - 1) * H;
    std::fill(rec.begin(), rec.end(), 0.0);
    for (std::size_t k = 0; k < P; ++k) {
      const double rk = r_prev[k];
      const double* row = wr.data() + k * G;
      for (std::size_t j = 0; j < G; ++j) rec[j] += rk * row[j];
    }
    double* gates = trace->gates.data() + t * G;
    for (std::size_t j = 0; j < G; ++j) {
      const double z = gin[t * G + j] + rec[j] + bias[j];
      gates[j] = (j >= 2 * H && j < 3 * H) ? std::tanh(z) : sigm(z);
    }
    double* c = trace->cell.data() + t * H;
    double* tc = trace->tanh_c.data() + t * H;
    double* m = trace->hidden.data() + t * H;
    for (std::size_t j = 0; j < H; ++j) {
      const double i = gates[j], f = gates[H + j], g = gates[2 * H + j], o = gates[3 * H + j];
      c[j] = f * c_prev[j] + i * g;
      tc[j] = std::tanh(c[j]);
      m[j] = o * tc[j];
    }
    double* r = trace->out.data() + t * P;
    for (std::size_t j = 0; j < H; ++j) {
      const double mj = m[j];
      const double* row = wp.data() + j * P;
      for (std::size_t k = 0; k < P; ++k) r[k] += mj * row[k];
    }
  }
  if (state != nullptr && T > 0) {
    state->cell.assign(trace->cell.end() - static_cast<std::ptrdiff_t>(H), trace->cell.end());
    state->output.assign(trace->out.end() - static_cast<std::ptrdiff_t>(P), trace->out.end());
  }

  Tensor y({T, P}, trace->out);
  Tape* tape = recording_tape({&gate_inputs, &p.w_recurrent, &p.bias, &p.w_proj});
  if (tape == nullptr) return y;
  tape->record({gate_inputs, p.w_recurrent, p.bias, p.w_proj}, y,
               [gate_inputs, p, y, trace, T, H, P, G](Tape& tp) {
                 const auto gy = tp.grad(y);
                 auto g_gin = tp.grad_buffer(gate_inputs);
                 auto g_wr = tp.grad_buffer(p.w_recurrent);
                 auto g_b = tp.grad_buffer(p.bias);
                 auto g_wp = tp.grad_buffer(p.w_proj);
                 const auto wr = p.w_recurrent.values();
                 const auto wp = p.w_proj.values();
                 std::vector<double> dr_next(P, 0.0), dc_next(H, 0.0);
                 std::vector<double> dr(P), dm(H), dz(G);
                 for (std::size_t t = T; t-- > 0;) {
                   const double* gates = trace->gates.data() + t * G;
                   const double* tc = trace->tanh_c.data() + t * H;
                   const double* m = trace->hidden.data() + t * H;
                   const double* c_prev =
                       t == 0 ? trace->init_cell.data() : trace->cell.data() + (t - 1) * H;
                   const double* r_prev =
                       t == 0 ? trace->init_out.data() : trace->out.data() + (t - 1) * P;
                   for (std::size_t k = 0; k < P; ++k) dr[k] = gy[t * P + k] + dr_next[k];
                   for (std::size_t j = 0; j < H; ++j) {
                     double acc = 0.0;
                     for (std::size_t k = 0; k < P; ++k) acc += dr[k] * wp[j * P + k];
                     dm[j] = acc;
                     if (!g_wp.empty()) {
                       for (std::size_t k = 0; k < P; ++k) g_wp[j * P + k] += m[j] * dr[k];
                     }
                   }
                   for (std::size_t j = 0; j < H; ++j) {
                     const double i = gates[j], f = gates[H + j], g = gates[2 * H + j],
                                  o = gates[3 * H + j];
                     const double d_o = dm[j] * tc[j];
                     const double dc = dc_next[j] + dm[j] * o * (1.0 - tc[j] * tc[j]);
                     dz[j] = dc * g * i * (1.0 - i);
                     dz[H + j] = dc * c_prev[j] * f * (1.0 - f);
                     dz[2 * H + j] = dc * i * (1.0 - g * g);
                     dz[3 * H + j] = d_o * o * (1.0 - o);
                     dc_next[j] = dc * f;
                   }
                   if (!g_gin.empty()) {
                     for (std::size_t j = 0; j < G; ++j) g_gin[t * G + j] += dz[j];
                   }
                   if (!g_b.empty()) {
                     for (std::size_t j = 0; j < G; ++j) g_b[j] += dz[j];
                   }
                   for (std::size_t k = 0; k < P; ++k) {
                     double acc = 0.0;
                     const double* row = wr.data() + k * G;
                     for (std::size_t j = 0; j < G; ++j) acc += dz[j] * row[j];
                     dr_next[k] = acc;
                     if (!g_wr.empty()) {
                       double* grow = g_wr.data() + k * G;
                       for (std::size_t j = 0; j < G; ++j) grow[j] += r_prev[k] * dz[j];
                     }
                   }
                 }
               });
  return y;
}

Tensor lstm_layer_forward(const Tensor& x, const LstmParams& p, Direction direction) {
  if (x.rank() != 2 || x.dim(1) != p.w_input.dim(0)) {
    throw DimensionError("lstm_layer_forward: input " + shape_to_string(x.shape()) +
                         " vs input weights " + shape_to_string(p.w_input.shape()));
  }
  if (direction == Direction::kForward) return lstm_recurrence(matmul(x, p.w_input), p);
  return flip_rows(lstm_recurrence(matmul(flip_rows(x), p.w_input), p));
}

BiLstmParams BiLstmParams::create(ParamStore& store, const std::string& name, std::size_t in,
                                  std::size_t hidden, std::size_t proj, Rng& rng) {
  BiLstmParams p;
  p.forward = LstmParams::create(store, name + "/fwd", in, hidden, proj, rng);
  p.backward = LstmParams::create(store, name + "/bwd", in, hidden, proj, rng);
  p.merge = Linear::create(store, name + "/merge", 2 * proj, proj, rng);
  return p;
}

Tensor bilstm_layer_forward(const Tensor& x, const BiLstmParams& p) {
  const Tensor fwd = lstm_layer_forward(x, p.forward, Direction::kForward);
  const Tensor bwd = lstm_layer_forward(x, p.backward, Direction::kBackward);
  return p.merge(concat_cols({fwd, bwd}));
}

}  // namespace casr
