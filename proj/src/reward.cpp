#include "lens/reward.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "lens/adam.hpp"
#include "lens/errors.hpp"

namespace lens {

namespace {

constexpr std::size_t kBatchBlock = 16;

// ln(1 + exp(x)) without overflow.
double softplus(double x) {
  if (x > 0.0) {
    return x + std::log1p(std::exp(-x));
  }
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct HeadForward {
  std::vector<double> pre;  // hidden
  std::vector<double> act;  // hidden
  double score = 0.0;
};

HeadForward head_forward(const RewardHead& head, std::span<const double> e) {
  if (static_cast<int>(e.size()) != head.dim) {
    throw ShapeError("reward head: embedding dim " + std::to_string(e.size()) +
                     " does not match " + std::to_string(head.dim));
  }
  HeadForward f;
  const std::size_t h = head.l1.w.rows();
  f.pre.assign(h, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    double acc = head.l1.b(0, i);
    const double* row = head.l1.w.data() + i * head.dim;
    for (int j = 0; j < head.dim; ++j) {
      acc += row[j] * e[j];
    }
    f.pre[i] = acc;
  }
  f.act.resize(h);
  for (std::size_t i = 0; i < h; ++i) {
    f.act[i] = f.pre[i] > 0.0 ? f.pre[i] : 0.0;
  }
  double s = head.l2.b(0, 0);
  for (std::size_t i = 0; i < h; ++i) {
    s += head.l2.w(0, i) * f.act[i];
  }
  f.score = s;
  return f;
}

// d score / d params with upstream coefficient c.
void head_backward(const RewardHead& head, std::span<const double> e,
                   const HeadForward& f, double c, RewardHead& grads) {
  const std::size_t h = head.l1.w.rows();
  grads.l2.b(0, 0) += c;
  for (std::size_t i = 0; i < h; ++i) {
    grads.l2.w(0, i) += c * f.act[i];
  }
  for (std::size_t i = 0; i < h; ++i) {
    if (f.pre[i] <= 0.0) continue;
    const double g = c * head.l2.w(0, i);
    grads.l1.b(0, i) += g;
    double* grow = grads.l1.w.data() + i * head.dim;
    for (int j = 0; j < head.dim; ++j) {
      grow[j] += g * e[j];
    }
  }
}

RewardHead zeros_like(const RewardHead& other) {
  RewardHead h;
  h.dim = other.dim;
  h.hidden = other.hidden;
  h.l1.w = Matrix(other.l1.w.rows(), other.l1.w.cols());
  h.l1.b = Matrix(1, other.l1.b.cols());
  h.l2.w = Matrix(other.l2.w.rows(), other.l2.w.cols());
  h.l2.b = Matrix(1, 1);
  return h;
}

void accumulate(RewardHead& dst, RewardHead& src) {
  auto d = dst.tensors();
  auto s = src.tensors();
  for (std::size_t i = 0; i < d.size(); ++i) {
    axpy(*d[i], *s[i], 1.0);
  }
}

double pair_bt_backward(const RewardHead& head, const PreferencePair& pair,
                        double coeff, RewardHead* grads) {
  const HeadForward fp = head_forward(head, pair.e_plus);
  const HeadForward fm = head_forward(head, pair.e_minus);
  const double margin = fp.score - fm.score;
  const double loss = softplus(-margin);
  if (!std::isfinite(loss)) {
    throw NumericError("bt_loss: non-finite loss");
  }
  if (grads != nullptr) {
    // d softplus(-margin) / d margin = sigmoid(margin) - 1
    const double d_margin = coeff * (sigmoid(margin) - 1.0);
    head_backward(head, pair.e_plus, fp, d_margin, *grads);
    head_backward(head, pair.e_minus, fm, -d_margin, *grads);
  }
  return loss;
}

}  // namespace

RewardHead RewardHead::init(int dim, int hidden, Rng& rng) {
  if (dim < 1 || hidden < 1) {
    throw ConfigError("reward head: dim and hidden must be >= 1");
  }
  RewardHead h;
  h.dim = dim;
  h.hidden = hidden;
  h.l1.w = Matrix(hidden, dim);
  h.l1.b = Matrix(1, hidden);
  h.l2.w = Matrix(1, hidden);
  h.l2.b = Matrix(1, 1);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t i = 0; i < h.l1.w.size(); ++i) {
    h.l1.w.data()[i] = rng.normal() * s1;
  }
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (std::size_t i = 0; i < h.l2.w.size(); ++i) {
    h.l2.w.data()[i] = rng.normal() * s2;
  }
  return h;
}

std::vector<std::pair<std::string, Matrix*>> RewardHead::named_tensors() {
  return {{"l1.w", &l1.w}, {"l1.b", &l1.b}, {"l2.w", &l2.w}, {"l2.b", &l2.b}};
}

std::vector<Matrix*> RewardHead::tensors() {
  return {&l1.w, &l1.b, &l2.w, &l2.b};
}

double reward_score(const RewardHead& head, std::span<const double> e) {
  return head_forward(head, e).score;
}

double bt_loss(const RewardHead& head, std::span<const double> e_plus,
               std::span<const double> e_minus, RewardHead* grads) {
  PreferencePair pair;
  pair.e_plus.assign(e_plus.begin(), e_plus.end());
  pair.e_minus.assign(e_minus.begin(), e_minus.end());
  return pair_bt_backward(head, pair, 1.0, grads);
}

double batch_bt_loss(const RewardHead& head,
                     std::span<const PreferencePair> pairs, RewardHead* grads) {
  if (pairs.empty()) {
    throw DomainError("batch_bt_loss: empty batch");
  }
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  const std::size_t nblocks = (pairs.size() + kBatchBlock - 1) / kBatchBlock;
  std::vector<double> block_loss(nblocks, 0.0);
  if (grads == nullptr) {
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(nblocks); ++b) {
      const std::size_t lo = static_cast<std::size_t>(b) * kBatchBlock;
      const std::size_t hi = std::min(lo + kBatchBlock, pairs.size());
      for (std::size_t i = lo; i < hi; ++i) {
        block_loss[b] += pair_bt_backward(head, pairs[i], inv_n, nullptr);
      }
    }
  } else {
    std::vector<RewardHead> block_grads;
    block_grads.reserve(nblocks);
    for (std::size_t b = 0; b < nblocks; ++b) {
      block_grads.push_back(zeros_like(head));
    }
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(nblocks); ++b) {
      const std::size_t lo = static_cast<std::size_t>(b) * kBatchBlock;
      const std::size_t hi = std::min(lo + kBatchBlock, pairs.size());
      for (std::size_t i = lo; i < hi; ++i) {
        block_loss[b] += pair_bt_backward(head, pairs[i], inv_n, &block_grads[b]);
      }
    }
    for (std::size_t b = 0; b < nblocks; ++b) {
      accumulate(*grads, block_grads[b]);
    }
  }
  double loss = 0.0;
  for (double l : block_loss) loss += l;
  return loss * inv_n;
}

double batch_bt_loss_serial(const RewardHead& head,
                            std::span<const PreferencePair> pairs,
                            RewardHead* grads) {
  if (pairs.empty()) {
    throw DomainError("batch_bt_loss: empty batch");
  }
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  double loss = 0.0;
  for (const auto& p : pairs) {
    loss += pair_bt_backward(head, p, inv_n, grads);
  }
  return loss * inv_n;
}

void RewardTrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("reward config: lr must be > 0");
  if (max_epochs < 1) throw ConfigError("reward config: max_epochs must be >= 1");
  if (patience < 1 || patience > max_epochs) {
    throw ConfigError("reward config: patience must be in [1, max_epochs]");
  }
  if (batch < 1) throw ConfigError("reward config: batch must be >= 1");
  if (!(validation_fraction > 0.0) || !(validation_fraction < 1.0)) {
    throw ConfigError("reward config: validation_fraction must be in (0, 1)");
  }
  if (hidden < 1) throw ConfigError("reward config: hidden must be >= 1");
}

RewardTrainResult train_reward(std::span<const PreferencePair> pairs,
                               const RewardTrainConfig& cfg) {
  cfg.validate();
  if (pairs.size() < 2) {
    throw DomainError("train_reward: need at least 2 pairs");
  }
  const int dim = static_cast<int>(pairs.front().e_plus.size());

  Rng rng = Rng::derive(cfg.seed, 0x726d74ULL);  // "rmt" stream
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  std::size_t val_count = static_cast<std::size_t>(
      std::llround(cfg.validation_fraction * static_cast<double>(pairs.size())));
  val_count = std::clamp<std::size_t>(val_count, 1, pairs.size() - 1);

  std::vector<PreferencePair> val, train;
  val.reserve(val_count);
  train.reserve(pairs.size() - val_count);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < val_count ? val : train).push_back(pairs[order[i]]);
  }

  RewardTrainResult result;
  result.head = RewardHead::init(dim, cfg.hidden, rng);
  auto tensors = result.head.tensors();
  std::vector<AdamState> opt;
  for (Matrix* t : tensors) {
    opt.emplace_back(t->rows(), t->cols(), AdamConfig{.lr = cfg.lr});
  }

  RewardHead best = result.head;
  double best_val = batch_bt_loss_serial(result.head, val);
  result.best_epoch = 0;
  int since_best = 0;

  std::vector<std::size_t> train_order(train.size());
  std::iota(train_order.begin(), train_order.end(), std::size_t{0});
  std::vector<PreferencePair> batch;
  batch.reserve(cfg.batch);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (std::size_t i = train_order.size(); i > 1; --i) {
      std::swap(train_order[i - 1], train_order[rng.below(i)]);
    }
    double epoch_sum = 0.0;
    std::size_t nbatches = 0;
    for (std::size_t start = 0; start < train_order.size();
         start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop = std::min(
          train_order.size(), start + static_cast<std::size_t>(cfg.batch));
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) {
        batch.push_back(train[train_order[i]]);
      }
      RewardHead grads = zeros_like(result.head);
      double loss;
      try {
        loss = batch_bt_loss(result.head, batch, &grads);
      } catch (const NumericError& e) {
        throw NumericError("train_reward: " + std::string(e.what()) +
                           " at epoch " + std::to_string(epoch));
      }
      auto gts = grads.tensors();
      for (std::size_t t = 0; t < tensors.size(); ++t) {
        opt[t].step(*tensors[t], *gts[t]);
      }
      epoch_sum += loss;
      ++nbatches;
    }
    result.train_loss.push_back(epoch_sum / static_cast<double>(nbatches));

    const double vloss = batch_bt_loss_serial(result.head, val);
    result.val_loss.push_back(vloss);
    result.epochs_run = epoch + 1;
    if (vloss < best_val) {
      best_val = vloss;
      best = result.head;
      result.best_epoch = epoch + 1;
      since_best = 0;
    } else {
      ++since_best;
      if (since_best >= cfg.patience) {
        break;
      }
    }
  }
  result.head = std::move(best);
  return result;
}

double pairwise_accuracy(const RewardHead& head,
                         std::span<const PreferencePair> pairs) {
  if (pairs.empty()) {
    throw DomainError("pairwise_accuracy: empty set");
  }
  std::size_t correct = 0;
  for (const auto& p : pairs) {
    if (reward_score(head, p.e_plus) > reward_score(head, p.e_minus)) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

double estimation_error(const RewardHead& head,
                        std::span<const PreferencePair> test_pairs,
                        const RewardHead& reference) {
  if (test_pairs.empty()) {
    throw DomainError("estimation_error: empty test set");
  }
  if (head.dim != reference.dim) {
    throw ShapeError("estimation_error: heads disagree on dim");
  }
  return batch_bt_loss_serial(head, test_pairs) -
         batch_bt_loss_serial(reference, test_pairs);
}

void save_reward(const RewardHead& head, const std::string& path_stem) {
  RewardHead& h = const_cast<RewardHead&>(head);
  nlohmann::json header;
  header["kind"] = "reward_head";
  header["dim"] = head.dim;
  header["hidden"] = head.hidden;
  nlohmann::json tensor_list = nlohmann::json::array();
  std::vector<float> blob;
  for (auto& [name, m] : h.named_tensors()) {
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

RewardHead load_reward(const std::string& path_stem) {
  std::ifstream jf(path_stem + ".json");
  if (!jf) throw IoError("cannot read " + path_stem + ".json");
  nlohmann::json header;
  try {
    jf >> header;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path_stem + ".json: " + e.what());
  }
  try {
    if (header.at("kind").get<std::string>() != "reward_head") {
      throw FormatError(path_stem + ".json: not a reward_head file");
    }
    RewardHead h;
    h.dim = header.at("dim").get<int>();
    h.hidden = header.at("hidden").get<int>();
    h.l1.w = Matrix(h.hidden, h.dim);
    h.l1.b = Matrix(1, h.hidden);
    h.l2.w = Matrix(1, h.hidden);
    h.l2.b = Matrix(1, 1);

    std::ifstream bf(path_stem + ".bin", std::ios::binary | std::ios::ate);
    if (!bf) throw IoError("cannot read " + path_stem + ".bin");
    const std::streamsize bytes = bf.tellg();
    bf.seekg(0);
    std::vector<float> blob(static_cast<std::size_t>(bytes) / sizeof(float));
    bf.read(reinterpret_cast<char*>(blob.data()), bytes);

    std::size_t offset = 0;
    for (auto& [name, m] : h.named_tensors()) {
      if (offset + m->size() > blob.size()) {
        throw FormatError(path_stem + ".bin: blob too small for tensor " + name);
      }
      for (std::size_t i = 0; i < m->size(); ++i) {
        m->data()[i] = blob[offset + i];
      }
      offset += m->size();
    }
    if (offset != blob.size()) {
      throw FormatError(path_stem + ".bin: trailing bytes after tensors");
    }
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path_stem + ".json: " + e.what());
  }
}

}  // namespace lens
