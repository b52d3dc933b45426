#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lens/dataset.hpp"
#include "lens/matrix.hpp"
#include "lens/rng.hpp"

namespace lens {

enum class Sign : std::uint8_t { plus, minus };

// Parameter-sharing configurations between the positive and negative paths.
enum class Sharing : std::uint8_t {
  separate,      // separate trunks, heads and decoders
  shared_trunk,  // shared trunk/decoder, separate posterior heads (default)
  fully_shared,  // one trunk, one head, one decoder
};

std::string to_string(Sharing s);
Sharing sharing_from_string(const std::string& s);

// Diagonal-Gaussian posterior. log_var is clamped to [-10, 10] by every
// forward pass.
struct DiagonalGaussian {
  std::vector<double> mu;
  std::vector<double> log_var;

  std::vector<double> sigma() const;
};

struct Linear {
  Matrix w;  // out x in
  Matrix b;  // 1 x out
};

// Encoder trunk (dim -> hidden, ReLU), posterior heads (hidden -> 2*d_vae
// producing mu and log-variance), decoder (d_vae -> hidden, ReLU, -> dim).
// Which slots are distinct depends on `sharing`; accessors resolve it.
struct VaeParams {
  int dim = 0;
  int hidden = 64;
  int d_vae = 16;
  Sharing sharing = Sharing::shared_trunk;

  Linear trunk_p, trunk_m;
  Linear head_p, head_m;
  Linear dec1_p, dec1_m;
  Linear dec2_p, dec2_m;

  Linear& trunk(Sign s);
  const Linear& trunk(Sign s) const;
  Linear& head(Sign s);
  const Linear& head(Sign s) const;
  Linear& dec1(Sign s);
  const Linear& dec1(Sign s) const;
  Linear& dec2(Sign s);
  const Linear& dec2(Sign s) const;

  // Active tensors in fixed order, paired with stable names.
  std::vector<std::pair<std::string, Matrix*>> named_tensors();
  std::vector<Matrix*> tensors();

  static VaeParams init(int dim, int d_vae, int hidden, Sharing sharing,
                        Rng& rng);
  static VaeParams zeros_like(const VaeParams& other);
};

struct EncodeCache {
  std::vector<double> trunk_pre;
  std::vector<double> trunk_act;
  DiagonalGaussian q;
  std::vector<double> sigma;
  std::vector<std::uint8_t> clamped;
};

struct DecodeCache {
  std::vector<double> pre;
  std::vector<double> act;
  std::vector<double> out;
};

DiagonalGaussian encode(const VaeParams& params, std::span<const double> e,
                        Sign sign);
EncodeCache encode_forward(const VaeParams& params, std::span<const double> e,
                           Sign sign);
// Accumulates parameter gradients for upstream (d_mu, d_log_var); optionally
// returns the gradient with respect to the input embedding.
void encode_backward(const VaeParams& params, std::span<const double> e,
                     Sign sign, const EncodeCache& cache,
                     std::span<const double> d_mu,
                     std::span<const double> d_log_var, VaeParams& grads,
                     std::vector<double>* d_input = nullptr);

std::vector<double> decode(const VaeParams& params, std::span<const double> z,
                           Sign sign);
DecodeCache decode_forward(const VaeParams& params, std::span<const double> z,
                           Sign sign);
void decode_backward(const VaeParams& params, std::span<const double> z,
                     Sign sign, const DecodeCache& cache,
                     std::span<const double> d_out, VaeParams& grads,
                     std::vector<double>& d_z);

std::vector<double> reparameterize(const DiagonalGaussian& q, Rng& rng);
std::vector<double> reparameterize_with(const DiagonalGaussian& q,
                                        std::span<const double> eps);

// KL(q || N(0, I)) in closed form: 0.5 * sum(mu^2 + sigma^2 - 1 - log_var).
double kl_to_standard_normal(const DiagonalGaussian& q);

// 2-Wasserstein distance between diagonal Gaussians:
// sqrt(|mu1 - mu2|^2 + |sigma1 - sigma2|^2). The value is exact; only the
// gradient uses a 1e-12 smoothing inside the square root to stay finite at
// zero separation.
double w2_diag_gaussians(const DiagonalGaussian& q1, const DiagonalGaussian& q2);
void w2_backward(const DiagonalGaussian& q1, const DiagonalGaussian& q2,
                 double coeff, std::span<double> d_mu1,
                 std::span<double> d_log_var1, std::span<double> d_mu2,
                 std::span<double> d_log_var2);

// Single-sample loss: |e - decode(z)|^2 + beta * KL, z drawn by
// reparameterization. The _with_noise variant takes the latent noise
// explicitly and is the deterministic core used by gradient checks.
double vae_loss(const VaeParams& params, std::span<const double> e, Sign sign,
                Rng& rng, double beta, VaeParams* grads = nullptr);
double vae_loss_with_noise(const VaeParams& params, std::span<const double> e,
                           Sign sign, std::span<const double> eps, double beta,
                           VaeParams* grads = nullptr);

// Batch objective: mean over pairs of [vae_loss(e+) + vae_loss(e-)] minus
// gamma times the mean W2 separation of same-pair posteriors. Block-parallel
// with a fixed reduction order, so results are identical for any thread count.
double total_loss(const VaeParams& params, std::span<const PreferencePair> batch,
                  Rng& rng, double beta, double gamma,
                  VaeParams* grads = nullptr);
double total_loss_with_noise(const VaeParams& params,
                             std::span<const PreferencePair> batch,
                             std::span<const std::vector<double>> eps_plus,
                             std::span<const std::vector<double>> eps_minus,
                             double beta, double gamma,
                             VaeParams* grads = nullptr);
// Naive linear-accumulation reference, kept for testing the parallel kernel.
double total_loss_serial(const VaeParams& params,
                         std::span<const PreferencePair> batch,
                         std::span<const std::vector<double>> eps_plus,
                         std::span<const std::vector<double>> eps_minus,
                         double beta, double gamma,
                         VaeParams* grads = nullptr);

struct VaeTrainConfig {
  int epochs = 100;
  int batch = 128;
  double lr = 1e-4;
  double beta = 1.0;
  double gamma = 0.1;
  std::uint64_t seed = 0;
  int d_vae = 16;
  int hidden = 64;
  Sharing sharing = Sharing::shared_trunk;

  void validate() const;
};

struct VaeTrainResult {
  VaeParams params;
  std::vector<double> epoch_loss;
  std::optional<double> heldout_recon;
};

VaeTrainResult train_vae(std::span<const PreferencePair> pairs,
                         const VaeTrainConfig& cfg,
                         std::span<const PreferencePair> heldout = {});

// Mean over all embeddings (both signs) of |e - decode(posterior mean)|^2.
// Deterministic: no sampling.
double reconstruction_error(const VaeParams& params,
                            std::span<const PreferencePair> pairs);

void save_vae(const VaeParams& params, const std::string& path_stem);
VaeParams load_vae(const std::string& path_stem);

}  // namespace lens
