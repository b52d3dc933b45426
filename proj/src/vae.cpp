#include "lens/vae.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "lens/adam.hpp"
#include "lens/errors.hpp"

namespace lens {

namespace {

constexpr double kLogVarMin = -10.0;
constexpr double kLogVarMax = 10.0;
constexpr double kW2GradSmoothing = 1e-12;
constexpr std::size_t kBatchBlock = 16;

void affine(const Linear& layer, std::span<const double> x,
            std::vector<double>& y) {
  const std::size_t out = layer.w.rows();
  const std::size_t in = layer.w.cols();
  y.assign(out, 0.0);
  for (std::size_t i = 0; i < out; ++i) {
    double acc = layer.b(0, i);
    const double* row = layer.w.data() + i * in;
    for (std::size_t j = 0; j < in; ++j) {
      acc += row[j] * x[j];
    }
    y[i] = acc;
  }
}

// Accumulates dW += dy (x) x, db += dy and returns dx = W^T dy in `dx`.
void affine_backward(const Linear& layer, std::span<const double> x,
                     std::span<const double> dy, Linear& glayer,
                     std::vector<double>* dx) {
  const std::size_t out = layer.w.rows();
  const std::size_t in = layer.w.cols();
  for (std::size_t i = 0; i < out; ++i) {
    const double g = dy[i];
    glayer.b(0, i) += g;
    double* grow = glayer.w.data() + i * in;
    for (std::size_t j = 0; j < in; ++j) {
      grow[j] += g * x[j];
    }
  }
  if (dx != nullptr) {
    dx->assign(in, 0.0);
    for (std::size_t i = 0; i < out; ++i) {
      const double g = dy[i];
      const double* row = layer.w.data() + i * in;
      for (std::size_t j = 0; j < in; ++j) {
        (*dx)[j] += row[j] * g;
      }
    }
  }
}

Linear init_linear(std::size_t out, std::size_t in, Rng& rng) {
  Linear l;
  l.w = Matrix(out, in);
  l.b = Matrix(1, out);
  const double s = 1.0 / std::sqrt(static_cast<double>(in));
  for (std::size_t i = 0; i < l.w.size(); ++i) {
    l.w.data()[i] = rng.normal() * s;
  }
  return l;
}

Linear zeros_linear(const Linear& other) {
  Linear l;
  l.w = Matrix(other.w.rows(), other.w.cols());
  l.b = Matrix(other.b.rows(), other.b.cols());
  return l;
}

void check_dim(std::span<const double> e, int dim, const char* what) {
  if (static_cast<int>(e.size()) != dim) {
    throw ShapeError(std::string(what) + ": input length " +
                     std::to_string(e.size()) + " does not match " +
                     std::to_string(dim));
  }
}

void check_posterior(const DiagonalGaussian& q, const char* what) {
  if (q.mu.size() != q.log_var.size()) {
    throw ShapeError(std::string(what) + ": mu/log_var length mismatch");
  }
}

struct SampleLoss {
  double recon = 0.0;
  double kl = 0.0;
  EncodeCache ec;
  std::vector<double> z;
  DecodeCache dc;
};

SampleLoss sample_forward(const VaeParams& params, std::span<const double> e,
                          Sign sign, std::span<const double> eps) {
  SampleLoss s;
  s.ec = encode_forward(params, e, sign);
  if (static_cast<int>(eps.size()) != params.d_vae) {
    throw ShapeError("vae loss: noise length does not match d_vae");
  }
  s.z.resize(params.d_vae);
  for (int i = 0; i < params.d_vae; ++i) {
    s.z[i] = s.ec.q.mu[i] + s.ec.sigma[i] * eps[i];
  }
  s.dc = decode_forward(params, s.z, sign);
  for (std::size_t k = 0; k < e.size(); ++k) {
    const double d = s.dc.out[k] - e[k];
    s.recon += d * d;
  }
  s.kl = kl_to_standard_normal(s.ec.q);
  if (!std::isfinite(s.recon)) {
    throw NumericError("vae loss: reconstruction term is non-finite");
  }
  if (!std::isfinite(s.kl)) {
    throw NumericError("vae loss: KL term is non-finite");
  }
  return s;
}

// Backward through decoder, reparameterization and KL with overall loss
// coefficient `coeff`. Leaves the encoder upstream gradient in d_mu/d_lv so
// the caller can merge divergence contributions before encode_backward.
void sample_backward(const VaeParams& params, std::span<const double> e,
                     Sign sign, const SampleLoss& s, std::span<const double> eps,
                     double beta, double coeff, VaeParams& grads,
                     std::vector<double>& d_mu, std::vector<double>& d_lv) {
  std::vector<double> d_out(e.size());
  for (std::size_t k = 0; k < e.size(); ++k) {
    d_out[k] = coeff * 2.0 * (s.dc.out[k] - e[k]);
  }
  std::vector<double> d_z;
  decode_backward(params, s.z, sign, s.dc, d_out, grads, d_z);

  d_mu.assign(params.d_vae, 0.0);
  d_lv.assign(params.d_vae, 0.0);
  for (int i = 0; i < params.d_vae; ++i) {
    d_mu[i] = d_z[i];
    d_lv[i] = d_z[i] * 0.5 * s.ec.sigma[i] * eps[i];
    d_mu[i] += coeff * beta * s.ec.q.mu[i];
    d_lv[i] += coeff * beta * 0.5 * (std::exp(s.ec.q.log_var[i]) - 1.0);
  }
}

struct PairTerms {
  double loss = 0.0;
};

// Loss and gradient contribution of one preference pair inside a batch of
// size n. inv_n multiplies the two sample losses, -gamma*inv_n the W2 term.
PairTerms pair_loss_backward(const VaeParams& params, const PreferencePair& pair,
                             std::span<const double> eps_p,
                             std::span<const double> eps_m, double beta,
                             double gamma, double inv_n, VaeParams* grads) {
  SampleLoss sp = sample_forward(params, pair.e_plus, Sign::plus, eps_p);
  SampleLoss sm = sample_forward(params, pair.e_minus, Sign::minus, eps_m);
  const double w2 = w2_diag_gaussians(sp.ec.q, sm.ec.q);
  if (!std::isfinite(w2)) {
    throw NumericError("total loss: divergence term is non-finite");
  }

  PairTerms t;
  t.loss = inv_n * (sp.recon + beta * sp.kl + sm.recon + beta * sm.kl) -
           gamma * inv_n * w2;
  if (grads == nullptr) {
    return t;
  }

  std::vector<double> d_mu_p, d_lv_p, d_mu_m, d_lv_m;
  sample_backward(params, pair.e_plus, Sign::plus, sp, eps_p, beta, inv_n,
                  *grads, d_mu_p, d_lv_p);
  sample_backward(params, pair.e_minus, Sign::minus, sm, eps_m, beta, inv_n,
                  *grads, d_mu_m, d_lv_m);
  if (gamma != 0.0) {
    w2_backward(sp.ec.q, sm.ec.q, -gamma * inv_n, d_mu_p, d_lv_p, d_mu_m,
                d_lv_m);
  }
  encode_backward(params, pair.e_plus, Sign::plus, sp.ec, d_mu_p, d_lv_p,
                  *grads);
  encode_backward(params, pair.e_minus, Sign::minus, sm.ec, d_mu_m, d_lv_m,
                  *grads);
  return t;
}

void accumulate_params(VaeParams& dst, VaeParams& src) {
  auto d = dst.tensors();
  auto s = src.tensors();
  for (std::size_t i = 0; i < d.size(); ++i) {
    axpy(*d[i], *s[i], 1.0);
  }
}

}  // namespace

std::string to_string(Sharing s) {
  switch (s) {
    case Sharing::separate: return "separate";
    case Sharing::shared_trunk: return "shared_trunk";
    case Sharing::fully_shared: return "fully_shared";
  }
  return "shared_trunk";
}

Sharing sharing_from_string(const std::string& s) {
  if (s == "separate") return Sharing::separate;
  if (s == "shared_trunk") return Sharing::shared_trunk;
  if (s == "fully_shared") return Sharing::fully_shared;
  throw ConfigError("unknown sharing mode '" + s + "'");
}

std::vector<double> DiagonalGaussian::sigma() const {
  std::vector<double> s(log_var.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = std::exp(0.5 * log_var[i]);
  }
  return s;
}

Linear& VaeParams::trunk(Sign s) {
  return (sharing == Sharing::separate && s == Sign::minus) ? trunk_m : trunk_p;
}
const Linear& VaeParams::trunk(Sign s) const {
  return (sharing == Sharing::separate && s == Sign::minus) ? trunk_m : trunk_p;
}
Linear& VaeParams::head(Sign s) {
  return (sharing != Sharing::fully_shared && s == Sign::minus) ? head_m : head_p;
}
const Linear& VaeParams::head(Sign s) const {
  return (sharing != Sharing::fully_shared && s == Sign::minus) ? head_m : head_p;
}
Linear& VaeParams::dec1(Sign s) {
  return (sharing == Sharing::separate && s == Sign::minus) ? dec1_m : dec1_p;
}
const Linear& VaeParams::dec1(Sign s) const {
  return (sharing == Sharing::separate && s == Sign::minus) ? dec1_m : dec1_p;
}
Linear& VaeParams::dec2(Sign s) {
  return (sharing == Sharing::separate && s == Sign::minus) ? dec2_m : dec2_p;
}
const Linear& VaeParams::dec2(Sign s) const {
  return (sharing == Sharing::separate && s == Sign::minus) ? dec2_m : dec2_p;
}

std::vector<std::pair<std::string, Matrix*>> VaeParams::named_tensors() {
  std::vector<std::pair<std::string, Matrix*>> out;
  auto push = [&out](const std::string& name, Linear& l) {
    out.emplace_back(name + ".w", &l.w);
    out.emplace_back(name + ".b", &l.b);
  };
  push("trunk_p", trunk_p);
  if (sharing == Sharing::separate) push("trunk_m", trunk_m);
  push("head_p", head_p);
  if (sharing != Sharing::fully_shared) push("head_m", head_m);
  push("dec1_p", dec1_p);
  push("dec2_p", dec2_p);
  if (sharing == Sharing::separate) {
    push("dec1_m", dec1_m);
    push("dec2_m", dec2_m);
  }
  return out;
}

std::vector<Matrix*> VaeParams::tensors() {
  std::vector<Matrix*> out;
  for (auto& [name, m] : named_tensors()) {
    out.push_back(m);
  }
  return out;
}

VaeParams VaeParams::init(int dim, int d_vae, int hidden, Sharing sharing,
                          Rng& rng) {
  if (dim < 1 || d_vae < 1 || hidden < 1) {
    throw ConfigError("vae init: dim, d_vae and hidden must be >= 1");
  }
  VaeParams p;
  p.dim = dim;
  p.d_vae = d_vae;
  p.hidden = hidden;
  p.sharing = sharing;
  p.trunk_p = init_linear(hidden, dim, rng);
  if (sharing == Sharing::separate) p.trunk_m = init_linear(hidden, dim, rng);
  p.head_p = init_linear(2 * d_vae, hidden, rng);
  if (sharing != Sharing::fully_shared) {
    p.head_m = init_linear(2 * d_vae, hidden, rng);
  }
  p.dec1_p = init_linear(hidden, d_vae, rng);
  p.dec2_p = init_linear(dim, hidden, rng);
  if (sharing == Sharing::separate) {
    p.dec1_m = init_linear(hidden, d_vae, rng);
    p.dec2_m = init_linear(dim, hidden, rng);
  }
  return p;
}

VaeParams VaeParams::zeros_like(const VaeParams& other) {
  VaeParams p;
  p.dim = other.dim;
  p.d_vae = other.d_vae;
  p.hidden = other.hidden;
  p.sharing = other.sharing;
  p.trunk_p = zeros_linear(other.trunk_p);
  p.head_p = zeros_linear(other.head_p);
  p.dec1_p = zeros_linear(other.dec1_p);
  p.dec2_p = zeros_linear(other.dec2_p);
  if (other.sharing == Sharing::separate) {
    p.trunk_m = zeros_linear(other.trunk_m);
    p.dec1_m = zeros_linear(other.dec1_m);
    p.dec2_m = zeros_linear(other.dec2_m);
  }
  if (other.sharing != Sharing::fully_shared) {
    p.head_m = zeros_linear(other.head_m);
  }
  return p;
}

EncodeCache encode_forward(const VaeParams& params, std::span<const double> e,
                           Sign sign) {
  check_dim(e, params.dim, "encode");
  EncodeCache c;
  affine(params.trunk(sign), e, c.trunk_pre);
  c.trunk_act.resize(c.trunk_pre.size());
  for (std::size_t i = 0; i < c.trunk_pre.size(); ++i) {
    c.trunk_act[i] = c.trunk_pre[i] > 0.0 ? c.trunk_pre[i] : 0.0;
  }
  std::vector<double> head_out;
  affine(params.head(sign), c.trunk_act, head_out);
  c.q.mu.assign(head_out.begin(), head_out.begin() + params.d_vae);
  c.q.log_var.resize(params.d_vae);
  c.clamped.assign(params.d_vae, 0);
  for (int i = 0; i < params.d_vae; ++i) {
    double lv = head_out[params.d_vae + i];
    if (lv < kLogVarMin) {
      lv = kLogVarMin;
      c.clamped[i] = 1;
    } else if (lv > kLogVarMax) {
      lv = kLogVarMax;
      c.clamped[i] = 1;
    }
    c.q.log_var[i] = lv;
  }
  c.sigma.resize(params.d_vae);
  for (int i = 0; i < params.d_vae; ++i) {
    c.sigma[i] = std::exp(0.5 * c.q.log_var[i]);
  }
  ensure_finite(c.q.mu, "posterior mu");
  return c;
}

DiagonalGaussian encode(const VaeParams& params, std::span<const double> e,
                        Sign sign) {
  return encode_forward(params, e, sign).q;
}

void encode_backward(const VaeParams& params, std::span<const double> e,
                     Sign sign, const EncodeCache& cache,
                     std::span<const double> d_mu,
                     std::span<const double> d_log_var, VaeParams& grads,
                     std::vector<double>* d_input) {
  std::vector<double> d_head(2 * params.d_vae);
  for (int i = 0; i < params.d_vae; ++i) {
    d_head[i] = d_mu[i];
    // Clamped coordinates sit on a flat region of the clamp.
    d_head[params.d_vae + i] = cache.clamped[i] ? 0.0 : d_log_var[i];
  }
  std::vector<double> d_act;
  affine_backward(params.head(sign), cache.trunk_act, d_head, grads.head(sign),
                  &d_act);
  std::vector<double> d_pre(d_act.size());
  for (std::size_t i = 0; i < d_act.size(); ++i) {
    d_pre[i] = cache.trunk_pre[i] > 0.0 ? d_act[i] : 0.0;
  }
  affine_backward(params.trunk(sign), e, d_pre, grads.trunk(sign), d_input);
}

DecodeCache decode_forward(const VaeParams& params, std::span<const double> z,
                           Sign sign) {
  check_dim(z, params.d_vae, "decode");
  DecodeCache c;
  affine(params.dec1(sign), z, c.pre);
  c.act.resize(c.pre.size());
  for (std::size_t i = 0; i < c.pre.size(); ++i) {
    c.act[i] = c.pre[i] > 0.0 ? c.pre[i] : 0.0;
  }
  affine(params.dec2(sign), c.act, c.out);
  return c;
}

std::vector<double> decode(const VaeParams& params, std::span<const double> z,
                           Sign sign) {
  return decode_forward(params, z, sign).out;
}

void decode_backward(const VaeParams& params, std::span<const double> z,
                     Sign sign, const DecodeCache& cache,
                     std::span<const double> d_out, VaeParams& grads,
                     std::vector<double>& d_z) {
  std::vector<double> d_act;
  affine_backward(params.dec2(sign), cache.act, d_out, grads.dec2(sign), &d_act);
  std::vector<double> d_pre(d_act.size());
  for (std::size_t i = 0; i < d_act.size(); ++i) {
    d_pre[i] = cache.pre[i] > 0.0 ? d_act[i] : 0.0;
  }
  affine_backward(params.dec1(sign), z, d_pre, grads.dec1(sign), &d_z);
}

std::vector<double> reparameterize(const DiagonalGaussian& q, Rng& rng) {
  check_posterior(q, "reparameterize");
  const auto eps = rng.normal_vec(q.mu.size());
  return reparameterize_with(q, eps);
}

std::vector<double> reparameterize_with(const DiagonalGaussian& q,
                                        std::span<const double> eps) {
  check_posterior(q, "reparameterize");
  if (eps.size() != q.mu.size()) {
    throw ShapeError("reparameterize: noise length mismatch");
  }
  std::vector<double> z(q.mu.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = q.mu[i] + std::exp(0.5 * q.log_var[i]) * eps[i];
  }
  return z;
}

double kl_to_standard_normal(const DiagonalGaussian& q) {
  check_posterior(q, "kl_to_standard_normal");
  double acc = 0.0;
  for (std::size_t i = 0; i < q.mu.size(); ++i) {
    acc += q.mu[i] * q.mu[i] + std::exp(q.log_var[i]) - 1.0 - q.log_var[i];
  }
  return 0.5 * acc;
}

double w2_diag_gaussians(const DiagonalGaussian& q1, const DiagonalGaussian& q2) {
  check_posterior(q1, "w2_diag_gaussians");
  check_posterior(q2, "w2_diag_gaussians");
  if (q1.mu.size() != q2.mu.size()) {
    throw ShapeError("w2_diag_gaussians: dimension mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < q1.mu.size(); ++i) {
    const double dm = q1.mu[i] - q2.mu[i];
    const double ds = std::exp(0.5 * q1.log_var[i]) - std::exp(0.5 * q2.log_var[i]);
    acc += dm * dm + ds * ds;
  }
  return std::sqrt(acc);
}

void w2_backward(const DiagonalGaussian& q1, const DiagonalGaussian& q2,
                 double coeff, std::span<double> d_mu1,
                 std::span<double> d_log_var1, std::span<double> d_mu2,
                 std::span<double> d_log_var2) {
  double acc = 0.0;
  const std::size_t n = q1.mu.size();
  std::vector<double> s1(n), s2(n);
  for (std::size_t i = 0; i < n; ++i) {
    s1[i] = std::exp(0.5 * q1.log_var[i]);
    s2[i] = std::exp(0.5 * q2.log_var[i]);
    const double dm = q1.mu[i] - q2.mu[i];
    const double ds = s1[i] - s2[i];
    acc += dm * dm + ds * ds;
  }
  const double inv = 1.0 / std::sqrt(acc + kW2GradSmoothing);
  for (std::size_t i = 0; i < n; ++i) {
    const double dm = (q1.mu[i] - q2.mu[i]) * inv;
    const double ds = (s1[i] - s2[i]) * inv;
    d_mu1[i] += coeff * dm;
    d_mu2[i] -= coeff * dm;
    // d sigma / d log_var = sigma / 2
    d_log_var1[i] += coeff * ds * 0.5 * s1[i];
    d_log_var2[i] -= coeff * ds * 0.5 * s2[i];
  }
}

double vae_loss_with_noise(const VaeParams& params, std::span<const double> e,
                           Sign sign, std::span<const double> eps, double beta,
                           VaeParams* grads) {
  SampleLoss s = sample_forward(params, e, sign, eps);
  const double loss = s.recon + beta * s.kl;
  if (grads != nullptr) {
    std::vector<double> d_mu, d_lv;
    sample_backward(params, e, sign, s, eps, beta, 1.0, *grads, d_mu, d_lv);
    encode_backward(params, e, sign, s.ec, d_mu, d_lv, *grads);
  }
  return loss;
}

double vae_loss(const VaeParams& params, std::span<const double> e, Sign sign,
                Rng& rng, double beta, VaeParams* grads) {
  const auto eps = rng.normal_vec(params.d_vae);
  return vae_loss_with_noise(params, e, sign, eps, beta, grads);
}

double total_loss_with_noise(const VaeParams& params,
                             std::span<const PreferencePair> batch,
                             std::span<const std::vector<double>> eps_plus,
                             std::span<const std::vector<double>> eps_minus,
                             double beta, double gamma, VaeParams* grads) {
  if (batch.empty()) {
    throw DomainError("total_loss: batch must be nonempty");
  }
  if (eps_plus.size() != batch.size() || eps_minus.size() != batch.size()) {
    throw ShapeError("total_loss: noise count does not match batch");
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const std::size_t nblocks = (batch.size() + kBatchBlock - 1) / kBatchBlock;

  std::vector<double> block_loss(nblocks, 0.0);
  if (grads == nullptr) {
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(nblocks); ++b) {
      const std::size_t lo = static_cast<std::size_t>(b) * kBatchBlock;
      const std::size_t hi = std::min(lo + kBatchBlock, batch.size());
      for (std::size_t i = lo; i < hi; ++i) {
        block_loss[b] += pair_loss_backward(params, batch[i], eps_plus[i],
                                            eps_minus[i], beta, gamma, inv_n,
                                            nullptr)
                             .loss;
      }
    }
  } else {
    std::vector<VaeParams> block_grads;
    block_grads.reserve(nblocks);
    for (std::size_t b = 0; b < nblocks; ++b) {
      block_grads.push_back(VaeParams::zeros_like(params));
    }
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(nblocks); ++b) {
      const std::size_t lo = static_cast<std::size_t>(b) * kBatchBlock;
      const std::size_t hi = std::min(lo + kBatchBlock, batch.size());
      for (std::size_t i = lo; i < hi; ++i) {
        block_loss[b] += pair_loss_backward(params, batch[i], eps_plus[i],
                                            eps_minus[i], beta, gamma, inv_n,
                                            &block_grads[b])
                             .loss;
      }
    }
    for (std::size_t b = 0; b < nblocks; ++b) {
      accumulate_params(*grads, block_grads[b]);
    }
  }
  double loss = 0.0;
  for (double l : block_loss) loss += l;
  return loss;
}

double total_loss(const VaeParams& params, std::span<const PreferencePair> batch,
                  Rng& rng, double beta, double gamma, VaeParams* grads) {
  std::vector<std::vector<double>> eps_p(batch.size()), eps_m(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    eps_p[i] = rng.normal_vec(params.d_vae);
    eps_m[i] = rng.normal_vec(params.d_vae);
  }
  return total_loss_with_noise(params, batch, eps_p, eps_m, beta, gamma, grads);
}

double total_loss_serial(const VaeParams& params,
                         std::span<const PreferencePair> batch,
                         std::span<const std::vector<double>> eps_plus,
                         std::span<const std::vector<double>> eps_minus,
                         double beta, double gamma, VaeParams* grads) {
  if (batch.empty()) {
    throw DomainError("total_loss: batch must be nonempty");
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    loss += pair_loss_backward(params, batch[i], eps_plus[i], eps_minus[i],
                               beta, gamma, inv_n, grads)
                .loss;
  }
  return loss;
}

void VaeTrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("vae config: epochs must be >= 1");
  if (batch < 1) throw ConfigError("vae config: batch must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("vae config: lr must be > 0");
  if (beta < 0.0) throw ConfigError("vae config: beta must be >= 0");
  if (gamma < 0.0) throw ConfigError("vae config: gamma must be >= 0");
  if (d_vae < 1 || hidden < 1) {
    throw ConfigError("vae config: d_vae and hidden must be >= 1");
  }
}

VaeTrainResult train_vae(std::span<const PreferencePair> pairs,
                         const VaeTrainConfig& cfg,
                         std::span<const PreferencePair> heldout) {
  cfg.validate();
  if (pairs.empty()) {
    throw DomainError("train_vae: need at least one pair");
  }
  const int dim = static_cast<int>(pairs.front().e_plus.size());

  Rng rng = Rng::derive(cfg.seed, 0x76616574ULL);  // "vaet" stream
  VaeTrainResult result;
  result.params = VaeParams::init(dim, cfg.d_vae, cfg.hidden, cfg.sharing, rng);

  auto tensors = result.params.tensors();
  std::vector<AdamState> opt;
  opt.reserve(tensors.size());
  for (Matrix* t : tensors) {
    opt.emplace_back(t->rows(), t->cols(), AdamConfig{.lr = cfg.lr});
  }

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<PreferencePair> batch;
  batch.reserve(cfg.batch);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Seeded Fisher-Yates shuffle.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    double epoch_sum = 0.0;
    std::size_t nbatches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) {
        batch.push_back(pairs[order[i]]);
      }
      VaeParams grads = VaeParams::zeros_like(result.params);
      double loss;
      try {
        loss = total_loss(result.params, batch, rng, cfg.beta, cfg.gamma, &grads);
      } catch (const NumericError& e) {
        throw NumericError("train_vae: " + std::string(e.what()) + " at epoch " +
                           std::to_string(epoch));
      }
      if (!std::isfinite(loss)) {
        throw NumericError("train_vae: divergent loss at epoch " +
                           std::to_string(epoch));
      }
      auto gts = grads.tensors();
      for (std::size_t t = 0; t < tensors.size(); ++t) {
        opt[t].step(*tensors[t], *gts[t]);
      }
      epoch_sum += loss;
      ++nbatches;
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(nbatches));
  }

  if (!heldout.empty()) {
    result.heldout_recon = reconstruction_error(result.params, heldout);
  }
  return result;
}

double reconstruction_error(const VaeParams& params,
                            std::span<const PreferencePair> pairs) {
  if (pairs.empty()) {
    throw DomainError("reconstruction_error: empty dataset");
  }
  double acc = 0.0;
  for (const auto& pair : pairs) {
    for (Sign sign : {Sign::plus, Sign::minus}) {
      const auto& e = sign == Sign::plus ? pair.e_plus : pair.e_minus;
      const DiagonalGaussian q = encode(params, e, sign);
      const auto rec = decode(params, q.mu, sign);
      acc += squared_distance(e, rec);
    }
  }
  return acc / static_cast<double>(2 * pairs.size());
}

void save_vae(const VaeParams& params, const std::string& path_stem) {
  VaeParams& p = const_cast<VaeParams&>(params);
  nlohmann::json header;
  header["kind"] = "vae_params";
  header["dim"] = params.dim;
  header["hidden"] = params.hidden;
  header["d_vae"] = params.d_vae;
  header["sharing"] = to_string(params.sharing);
  nlohmann::json tensor_list = nlohmann::json::array();
  std::vector<float> blob;
  for (auto& [name, m] : p.named_tensors()) {
    nlohmann::json t;
    t["name"] = name;
    t["rows"] = m->rows();
    t["cols"] = m->cols();
    tensor_list.push_back(t);
    for (std::size_t i = 0; i < m->size(); ++i) {
      blob.push_back(static_cast<float>(m->data()[i]));
    }
  }
  header["tensors"] = tensor_list;

  std::ofstream jf(path_stem + ".json");
  if (!jf) throw IoError("cannot write " + path_stem + ".json");
  jf << header.dump(2) << "\n";
  std::ofstream bf(path_stem + ".bin", std::ios::binary);
  if (!bf) throw IoError("cannot write " + path_stem + ".bin");
  bf.write(reinterpret_cast<const char*>(blob.data()),
           static_cast<std::streamsize>(blob.size() * sizeof(float)));
}

VaeParams load_vae(const std::string& path_stem) {
  std::ifstream jf(path_stem + ".json");
  if (!jf) throw IoError("cannot read " + path_stem + ".json");
  nlohmann::json header;
  try {
    jf >> header;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path_stem + ".json: " + e.what());
  }
  try {
    if (header.at("kind").get<std::string>() != "vae_params") {
      throw FormatError(path_stem + ".json: not a vae_params file");
    }
    VaeParams p;
    p.dim = header.at("dim").get<int>();
    p.hidden = header.at("hidden").get<int>();
    p.d_vae = header.at("d_vae").get<int>();
    p.sharing = sharing_from_string(header.at("sharing").get<std::string>());
    // Allocate slots, then overwrite from the blob in named order.
    Rng dummy(0);
    p = [&] {
      VaeParams q = VaeParams::init(p.dim, p.d_vae, p.hidden, p.sharing, dummy);
      return VaeParams::zeros_like(q);
    }();

    std::ifstream bf(path_stem + ".bin", std::ios::binary | std::ios::ate);
    if (!bf) throw IoError("cannot read " + path_stem + ".bin");
    const std::streamsize bytes = bf.tellg();
    bf.seekg(0);
    std::vector<float> blob(static_cast<std::size_t>(bytes) / sizeof(float));
    bf.read(reinterpret_cast<char*>(blob.data()), bytes);

    auto named = p.named_tensors();
    const auto& tensor_list = header.at("tensors");
    if (tensor_list.size() != named.size()) {
      throw FormatError(path_stem + ".json: tensor list does not match sharing mode");
    }
    std::size_t offset = 0;
    for (std::size_t t = 0; t < named.size(); ++t) {
      const auto& meta = tensor_list[t];
      if (meta.at("name").get<std::string>() != named[t].first ||
          meta.at("rows").get<std::size_t>() != named[t].second->rows() ||
          meta.at("cols").get<std::size_t>() != named[t].second->cols()) {
        throw FormatError(path_stem + ".json: tensor " + std::to_string(t) +
                          " does not match expected shape/name");
      }
      Matrix& m = *named[t].second;
      if (offset + m.size() > blob.size()) {
        throw FormatError(path_stem + ".bin: blob too small at tensor " +
                          std::to_string(t));
      }
      for (std::size_t i = 0; i < m.size(); ++i) {
        m.data()[i] = blob[offset + i];
      }
      offset += m.size();
    }
    if (offset != blob.size()) {
      throw FormatError(path_stem + ".bin: trailing bytes after tensors");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path_stem + ".json: " + e.what());
  }
}

}  // namespace lens
