#include "vmc/models.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace vmc {

namespace {

double log_sum_exp(const Vec& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace

TinyEmbedLM::TinyEmbedLM(EmbeddingTable table, Eigen::MatrixXd encoder_weight,
                         Vec encoder_bias, Vec start_vector, int seq_len)
    : table_(std::move(table)),
      encoder_weight_(std::move(encoder_weight)),
      encoder_bias_(std::move(encoder_bias)),
      start_vector_(std::move(start_vector)),
      seq_len_(seq_len) {
  const int d = table_.dim();
  if (encoder_weight_.rows() != d || encoder_weight_.cols() != d)
    throw std::invalid_argument("TinyEmbedLM: encoder weight must be d x d");
  if (encoder_bias_.size() != d || start_vector_.size() != d)
    throw std::invalid_argument("TinyEmbedLM: bias/start vector must be d");
  if (seq_len_ < 1) throw std::invalid_argument("TinyEmbedLM: seq_len >= 1");
}

TinyEmbedLM TinyEmbedLM::seeded(EmbeddingTable table, int seq_len,
                                std::uint64_t seed, double encoder_gain) {
  Rng rng(seed);
  const int d = table.dim();
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = encoder_gain * rng.normal();
  Vec b = encoder_gain * rng.normal_vector(d);
  Vec start = encoder_gain * rng.normal_vector(d);
  return TinyEmbedLM(std::move(table), std::move(a), std::move(b),
                     std::move(start), seq_len);
}

Vec TinyEmbedLM::encode_prefix(const SequenceIndex& seq, int n_prefix) const {
  if (n_prefix == 0) return start_vector_;
  const int d = table_.dim();
  Vec mean = Vec::Zero(d);
  for (int i = 0; i < n_prefix; ++i) mean += table_.center(seq[i]);
  mean /= static_cast<double>(n_prefix);
  return (encoder_weight_ * mean + encoder_bias_).array().tanh();
}

Vec TinyEmbedLM::conditional_log_probs(const SequenceIndex& seq,
                                       int n_prefix) const {
  const Vec enc = encode_prefix(seq, n_prefix);
  Vec logits = table_.centers() * enc;
  return logits.array() - log_sum_exp(logits);
}

double lm_log_prob(const TinyEmbedLM& model, const SequenceIndex& seq) {
  if (static_cast<int>(seq.size()) != model.seq_len())
    throw std::invalid_argument("lm_log_prob: sequence length mismatch");
  double total = 0.0;
  for (int n = 0; n < model.seq_len(); ++n)
    total += model.conditional_log_probs(seq, n)[seq[n]];
  return total;
}

Vec lm_grad_embeddings(const TinyEmbedLM& model, const SequenceIndex& seq) {
  const int n_len = model.seq_len();
  const int d = model.embed_dim();
  if (static_cast<int>(seq.size()) != n_len)
    throw std::invalid_argument("lm_grad_embeddings: length mismatch");
  const auto& centers = model.table().centers();

  Vec grad = Vec::Zero(n_len * d);
  for (int n = 0; n < n_len; ++n) {
    const Vec enc = model.encode_prefix(seq, n);
    const Vec log_p = model.table().centers() * enc;
    Vec p = (log_p.array() - log_sum_exp(log_p)).exp();

    // Head term at position n: d/dv [v.enc - logsumexp] with the token's
    // own logit tied to its occurrence.
    grad.segment(n * d, d) += (1.0 - p[seq[n]]) * enc;

    // Encoder term: position n's conditional depends on the mean of the
    // first n embeddings through tanh(A mean + b).
    if (n > 0) {
      const Vec q =
          centers.row(seq[n]).transpose() - centers.transpose() * p;
      const Vec back = model.encoder_weight().transpose() *
                       ((1.0 - enc.array().square()) * q.array()).matrix();
      for (int i = 0; i < n; ++i)
        grad.segment(i * d, d) += back / static_cast<double>(n);
    }
  }
  return grad;
}

LinearAttributeClassifier::LinearAttributeClassifier(Eigen::MatrixXd weights,
                                                     Vec bias)
    : weights_(std::move(weights)), bias_(std::move(bias)) {
  if (weights_.rows() < 2)
    throw std::invalid_argument("classifier: need at least 2 classes");
  if (bias_.size() != weights_.rows())
    throw std::invalid_argument("classifier: bias size mismatch");
}

LinearAttributeClassifier LinearAttributeClassifier::seeded(int n_classes,
                                                            int dim,
                                                            std::uint64_t seed,
                                                            double gain) {
  Rng rng(seed);
  Eigen::MatrixXd w(n_classes, dim);
  for (int c = 0; c < n_classes; ++c)
    for (int j = 0; j < dim; ++j) w(c, j) = gain * rng.normal();
  Vec b = gain * rng.normal_vector(n_classes);
  return LinearAttributeClassifier(std::move(w), std::move(b));
}

namespace {

Vec classifier_class_log_probs(const LinearAttributeClassifier& clf,
                               const Eigen::Ref<const Vec>& embeddings) {
  const int d = clf.dim();
  if (embeddings.size() % d != 0)
    throw std::invalid_argument("classifier: embedding size not N*d");
  const int n_len = static_cast<int>(embeddings.size()) / d;
  Vec mean = Vec::Zero(d);
  for (int n = 0; n < n_len; ++n) mean += embeddings.segment(n * d, d);
  mean /= static_cast<double>(n_len);
  Vec scores = clf.weights() * mean + clf.bias();
  return scores.array() - log_sum_exp(scores);
}

}  // namespace

double classifier_log_prob(const LinearAttributeClassifier& clf,
                           const Eigen::Ref<const Vec>& embeddings,
                           int target) {
  if (target < 0 || target >= clf.n_classes())
    throw std::invalid_argument("classifier: unknown class label");
  return classifier_class_log_probs(clf, embeddings)[target];
}

Vec classifier_grad(const LinearAttributeClassifier& clf,
                    const Eigen::Ref<const Vec>& embeddings, int target) {
  if (target < 0 || target >= clf.n_classes())
    throw std::invalid_argument("classifier: unknown class label");
  const int d = clf.dim();
  const int n_len = static_cast<int>(embeddings.size()) / d;
  const Vec p = classifier_class_log_probs(clf, embeddings).array().exp();
  const Vec g =
      (clf.weights().row(target).transpose() - clf.weights().transpose() * p) /
      static_cast<double>(n_len);
  Vec grad(embeddings.size());
  for (int n = 0; n < n_len; ++n) grad.segment(n * d, d) = g;
  return grad;
}

SequenceIndex ancestral_sample(const TinyEmbedLM& model, Rng& rng) {
  SequenceIndex seq(model.seq_len(), 0);
  for (int n = 0; n < model.seq_len(); ++n) {
    const Vec p = model.conditional_log_probs(seq, n).array().exp();
    const double u = rng.uniform();
    double acc = 0.0;
    int pick = model.vocab_size() - 1;
    for (int m = 0; m < model.vocab_size(); ++m) {
      acc += p[m];
      if (u < acc) {
        pick = m;
        break;
      }
    }
    seq[n] = pick;
  }
  return seq;
}

long ExactDistribution::linear_index(const SequenceIndex& seq) const {
  long idx = 0;
  for (int n = 0; n < seq_len; ++n) idx = idx * vocab_size + seq[n];
  return idx;
}

SequenceIndex ExactDistribution::sequence_at(long index) const {
  SequenceIndex seq(seq_len, 0);
  for (int n = seq_len - 1; n >= 0; --n) {
    seq[n] = static_cast<int>(index % vocab_size);
    index /= vocab_size;
  }
  return seq;
}

ExactDistribution exact_distribution(const TinyEmbedLM& model,
                                     const LinearAttributeClassifier* clf,
                                     int target, double gamma) {
  const int m = model.vocab_size();
  const int n_len = model.seq_len();
  double count = std::pow(static_cast<double>(m), n_len);
  if (count > 1e6)
    throw std::invalid_argument("exact_distribution: state space too large");
  const long total = static_cast<long>(std::llround(count));

  ExactDistribution out;
  out.vocab_size = m;
  out.seq_len = n_len;
  Vec log_w(total);
  for (long i = 0; i < total; ++i) {
    const SequenceIndex seq = out.sequence_at(i);
    double lw = lm_log_prob(model, seq);
    if (clf != nullptr && gamma != 0.0)
      lw += gamma *
            classifier_log_prob(*clf, model.table().centers_for(seq), target);
    log_w[i] = lw;
  }
  out.probs = (log_w.array() - log_sum_exp(log_w)).exp();
  return out;
}

namespace {

using nlohmann::json;

std::string double_to_string(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      row.push_back(double_to_string(m(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Vec& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    arr.push_back(double_to_string(v[i]));
  return arr;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.size();
  const auto cols = rows == 0 ? 0 : j.at(0).size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          std::strtod(j.at(r).at(c).get<std::string>().c_str(), nullptr);
  return m;
}

Vec vector_from_json(const json& j) {
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    v[static_cast<Eigen::Index>(i)] =
        std::strtod(j.at(i).get<std::string>().c_str(), nullptr);
  return v;
}

}  // namespace

std::string snapshot_to_json(const ModelSnapshot& snap) {
  json j;
  j["format"] = "tiny-embed-lm-v1";
  j["seed"] = snap.seed;
  j["vocab_size"] = snap.model.vocab_size();
  j["embed_dim"] = snap.model.embed_dim();
  j["seq_len"] = snap.model.seq_len();
  j["centers"] = matrix_to_json(snap.model.table().centers());
  j["encoder_weight"] = matrix_to_json(snap.model.encoder_weight());
  j["encoder_bias"] = vector_to_json(snap.model.encoder_bias());
  j["start_vector"] = vector_to_json(snap.model.start_vector());
  if (snap.classifier.has_value()) {
    json c;
    c["weights"] = matrix_to_json(snap.classifier->weights());
    c["bias"] = vector_to_json(snap.classifier->bias());
    c["gamma"] = double_to_string(snap.gamma);
    c["target"] = snap.target;
    j["classifier"] = std::move(c);
  } else {
    j["classifier"] = nullptr;
  }
  return j.dump(2);
}

ModelSnapshot snapshot_from_json(const std::string& json_text) {
  const json j = json::parse(json_text);
  EmbeddingTable table(matrix_from_json(j.at("centers")));
  TinyEmbedLM model(std::move(table), matrix_from_json(j.at("encoder_weight")),
                    vector_from_json(j.at("encoder_bias")),
                    vector_from_json(j.at("start_vector")),
                    j.at("seq_len").get<int>());
  ModelSnapshot snap{std::move(model), std::nullopt, 0.0, 0,
                     j.value("seed", std::uint64_t{0})};
  if (j.contains("classifier") && !j.at("classifier").is_null()) {
    const auto& c = j.at("classifier");
    snap.classifier.emplace(matrix_from_json(c.at("weights")),
                            vector_from_json(c.at("bias")));
    snap.gamma = std::strtod(c.at("gamma").get<std::string>().c_str(), nullptr);
    snap.target = c.at("target").get<int>();
  }
  return snap;
}

void save_snapshot(const ModelSnapshot& snap, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open snapshot file: " + path);
  out << snapshot_to_json(snap) << "\n";
}

ModelSnapshot load_snapshot(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open snapshot file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return snapshot_from_json(ss.str());
}

}  // namespace vmc
