#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vmc/geometry.hpp"
#include "vmc/rng.hpp"

namespace vmc {

/// Token indices for one fixed-length sequence.
using SequenceIndex = std::vector<int>;

/// Desk-scale autoregressive sequence model over M symbols with tied
/// input/output embeddings. The context encoder is a frozen affine map
/// followed by tanh, applied to the mean of the prefix embeddings; the empty
/// prefix is encoded by a fixed start vector.
class TinyEmbedLM {
 public:
  TinyEmbedLM(EmbeddingTable table, Eigen::MatrixXd encoder_weight,
              Vec encoder_bias, Vec start_vector, int seq_len);

  /// Encoder and start vector drawn from a seeded standard normal and frozen.
  static TinyEmbedLM seeded(EmbeddingTable table, int seq_len,
                            std::uint64_t seed, double encoder_gain = 1.0);

  const EmbeddingTable& table() const { return table_; }
  int vocab_size() const { return table_.size(); }
  int embed_dim() const { return table_.dim(); }
  int seq_len() const { return seq_len_; }
  const Eigen::MatrixXd& encoder_weight() const { return encoder_weight_; }
  const Vec& encoder_bias() const { return encoder_bias_; }
  const Vec& start_vector() const { return start_vector_; }

  /// Context encoding of the first n_prefix tokens of seq.
  Vec encode_prefix(const SequenceIndex& seq, int n_prefix) const;

  /// log p(token | prefix) for every token, as a length-M vector.
  Vec conditional_log_probs(const SequenceIndex& seq, int n_prefix) const;

 private:
  EmbeddingTable table_;
  Eigen::MatrixXd encoder_weight_;  // d x d
  Vec encoder_bias_;
  Vec start_vector_;
  int seq_len_;
};

/// Linear attribute classifier over mean-pooled embeddings, sharing the
/// model's base embeddings.
class LinearAttributeClassifier {
 public:
  /// weights: n_classes x d, bias: n_classes.
  LinearAttributeClassifier(Eigen::MatrixXd weights, Vec bias);

  static LinearAttributeClassifier seeded(int n_classes, int dim,
                                          std::uint64_t seed,
                                          double gain = 1.0);

  int n_classes() const { return static_cast<int>(weights_.rows()); }
  int dim() const { return static_cast<int>(weights_.cols()); }
  const Eigen::MatrixXd& weights() const { return weights_; }
  const Vec& bias() const { return bias_; }

 private:
  Eigen::MatrixXd weights_;
  Vec bias_;
};

double lm_log_prob(const TinyEmbedLM& model, const SequenceIndex& seq);

/// Analytic gradient of lm_log_prob with respect to the embeddings assigned
/// to each position (N x d, returned flat as N*d). Input and output
/// embeddings are tied per occurrence: row n differentiates both the
/// position-n logit and the encoder inputs of later positions.
Vec lm_grad_embeddings(const TinyEmbedLM& model, const SequenceIndex& seq);

/// log p(t | V) for a flat N*d embedding sequence V.
double classifier_log_prob(const LinearAttributeClassifier& clf,
                           const Eigen::Ref<const Vec>& embeddings,
                           int target);

Vec classifier_grad(const LinearAttributeClassifier& clf,
                    const Eigen::Ref<const Vec>& embeddings, int target);

SequenceIndex ancestral_sample(const TinyEmbedLM& model, Rng& rng);

/// Exhaustive normalized table over [M]^N, ordered by the mixed-radix linear
/// index (position 0 most significant). With a classifier, entries are
/// proportional to p(seq) * p(target | seq)^gamma.
struct ExactDistribution {
  int vocab_size = 0;
  int seq_len = 0;
  Eigen::VectorXd probs;  // length M^N

  long linear_index(const SequenceIndex& seq) const;
  SequenceIndex sequence_at(long index) const;
};

ExactDistribution exact_distribution(
    const TinyEmbedLM& model,
    const LinearAttributeClassifier* clf = nullptr, int target = 0,
    double gamma = 0.0);

/// Model snapshot serialization. Weights are written as decimal strings with
/// 17 significant digits so a reload is bit-stable.
struct ModelSnapshot {
  TinyEmbedLM model;
  std::optional<LinearAttributeClassifier> classifier;
  double gamma = 0.0;
  int target = 0;
  std::uint64_t seed = 0;
};

std::string snapshot_to_json(const ModelSnapshot& snap);
ModelSnapshot snapshot_from_json(const std::string& json_text);
void save_snapshot(const ModelSnapshot& snap, const std::string& path);
ModelSnapshot load_snapshot(const std::string& path);

}  // namespace vmc
