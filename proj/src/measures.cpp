#include "vmc/measures.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace vmc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(const std::vector<double>& v) {
  double mx = -kInf;
  for (double x : v) mx = std::max(mx, x);
  if (std::isinf(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace

EmbeddingAugmentedDistribution::EmbeddingAugmentedDistribution(
    Eigen::VectorXd p, EmbeddingTable t)
    : probs(std::move(p)), table(std::move(t)) {
  if (probs.size() != table.size())
    throw std::invalid_argument("distribution: probs/table size mismatch");
  if (probs.minCoeff() < 0.0)
    throw std::invalid_argument("distribution: negative probability");
  if (std::abs(probs.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("distribution: probabilities must sum to 1");
}

EmbeddingAugmentedDistribution anneal(
    const EmbeddingAugmentedDistribution& dist, double temperature) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("anneal: temperature must be positive");
  if (temperature == 1.0) return dist;
  if (dist.probs.minCoeff() <= 0.0)
    throw std::invalid_argument("anneal: zero probability with T != 1");
  Eigen::VectorXd logs = dist.probs.array().log() / temperature;
  const double mx = logs.maxCoeff();
  Eigen::VectorXd w = (logs.array() - mx).exp();
  return EmbeddingAugmentedDistribution(w / w.sum(), dist.table);
}

VoronoiMeasureSpec::VoronoiMeasureSpec(EmbeddingTable table, Box box,
                                       int seq_len)
    : table_(std::move(table)), box_(std::move(box)), seq_len_(seq_len) {
  if (box_.dim() != table_.dim())
    throw std::invalid_argument("spec: box dimension must match embeddings");
  table_.validate_inside(box_);
  const double count =
      std::pow(static_cast<double>(table_.size()), seq_len_);
  if (count > 1e6)
    throw std::invalid_argument("spec: cell table too large to enumerate");
  const long total = static_cast<long>(std::llround(count));
  log_prob_.assign(total, 0.0);
  log_mass_.assign(total, 0.0);
  gauss_center_.resize(total, state_dim());
  score_grad_.resize(total, state_dim());
}

long VoronoiMeasureSpec::cell_index(const CellIndex& cell) const {
  long idx = 0;
  for (int n = 0; n < seq_len_; ++n) idx = idx * table_.size() + cell[n];
  return idx;
}

CellIndex VoronoiMeasureSpec::cell_at(long index) const {
  CellIndex cell(seq_len_, 0);
  for (int n = seq_len_ - 1; n >= 0; --n) {
    cell[n] = static_cast<int>(index % table_.size());
    index /= table_.size();
  }
  return cell;
}

Vec VoronoiMeasureSpec::gaussian_center(const CellIndex& cell) const {
  return gauss_center_.row(cell_index(cell)).transpose();
}

Vec VoronoiMeasureSpec::score_grad(const CellIndex& cell) const {
  return score_grad_.row(cell_index(cell)).transpose();
}

void VoronoiMeasureSpec::set_mass_cache(
    const std::vector<MassEstimate>& masses) {
  if (static_cast<long>(masses.size()) != n_cells())
    throw std::invalid_argument("mass cache: one estimate per cell required");
  for (long i = 0; i < n_cells(); ++i) {
    if (!(masses[i].mass > 0.0))
      throw std::invalid_argument("mass cache: nonpositive mass estimate");
    log_mass_[i] = std::log(masses[i].mass);
  }
  equal_mass_ = false;
}

Eigen::VectorXd VoronoiMeasureSpec::target_table() const {
  Eigen::VectorXd p(n_cells());
  for (long i = 0; i < n_cells(); ++i) p[i] = std::exp(log_prob_[i]);
  return p;
}

VoronoiMeasureSpec VoronoiMeasureSpec::categorical(
    const EmbeddingAugmentedDistribution& dist, Box box, double temperature,
    BaseMeasureMode mode, bool equal_mass_assumed) {
  const auto annealed = anneal(dist, temperature);
  VoronoiMeasureSpec spec(dist.table, std::move(box), 1);
  spec.kind_ = TargetKind::Categorical;
  spec.mode_ = mode;
  spec.equal_mass_ = equal_mass_assumed;
  spec.temperature_ = temperature;
  for (int m = 0; m < dist.table.size(); ++m) {
    spec.log_prob_[m] = std::log(annealed.probs[m]);
    // A bare categorical has no differentiable embedding dependence: center
    // the Gaussian base at the cell center and give the projected baseline a
    // zero score gradient.
    spec.gauss_center_.row(m) = dist.table.centers().row(m);
    spec.score_grad_.row(m).setZero();
  }
  return spec;
}

namespace {

void fill_from_log_weights(VoronoiMeasureSpec& spec,
                           std::vector<double>& log_w, double temperature,
                           std::vector<double>& out) {
  if (temperature != 1.0)
    for (double& lw : log_w) lw /= temperature;
  const double lz = log_sum_exp(log_w);
  out.resize(log_w.size());
  for (std::size_t i = 0; i < log_w.size(); ++i) out[i] = log_w[i] - lz;
}

}  // namespace

VoronoiMeasureSpec VoronoiMeasureSpec::sequence_model(const TinyEmbedLM& model,
                                                      Box box,
                                                      double temperature,
                                                      bool equal_mass_assumed) {
  VoronoiMeasureSpec spec(model.table(), std::move(box), model.seq_len());
  spec.kind_ = TargetKind::SequenceModel;
  spec.equal_mass_ = equal_mass_assumed;
  spec.temperature_ = temperature;
  std::vector<double> log_w(spec.n_cells());
  for (long i = 0; i < spec.n_cells(); ++i) {
    const SequenceIndex seq = spec.cell_at(i);
    log_w[i] = lm_log_prob(model, seq);
    const Vec g = lm_grad_embeddings(model, seq);
    spec.gauss_center_.row(i) = g.transpose();
    spec.score_grad_.row(i) = g.transpose();
  }
  fill_from_log_weights(spec, log_w, temperature, spec.log_prob_);
  return spec;
}

VoronoiMeasureSpec VoronoiMeasureSpec::controlled(
    const TinyEmbedLM& model, const LinearAttributeClassifier& clf, int target,
    double gamma, Box box, double temperature, bool equal_mass_assumed) {
  if (gamma < 0.0)
    throw std::invalid_argument("controlled: gamma must be >= 0");
  VoronoiMeasureSpec spec(model.table(), std::move(box), model.seq_len());
  spec.kind_ = TargetKind::Controlled;
  spec.equal_mass_ = equal_mass_assumed;
  spec.temperature_ = temperature;
  std::vector<double> log_w(spec.n_cells());
  for (long i = 0; i < spec.n_cells(); ++i) {
    const SequenceIndex seq = spec.cell_at(i);
    const Vec centers = model.table().centers_for(seq);
    log_w[i] = lm_log_prob(model, seq) +
               gamma * classifier_log_prob(clf, centers, target);
    const Vec g = lm_grad_embeddings(model, seq) +
                  gamma * classifier_grad(clf, centers, target);
    spec.gauss_center_.row(i) = g.transpose();
    spec.score_grad_.row(i) = g.transpose();
  }
  fill_from_log_weights(spec, log_w, temperature, spec.log_prob_);
  return spec;
}

double potential_in_cell(const VoronoiMeasureSpec& spec,
                         const Eigen::Ref<const Vec>& x,
                         const CellIndex& cell) {
  if (!spec.box().contains_state(x)) return kInf;
  double u = -spec.log_prob(cell);
  if (!spec.equal_mass_assumed()) u += spec.log_mass(cell);
  if (spec.mode() == BaseMeasureMode::GaussianAtGradient)
    u += 0.5 * (spec.gaussian_center(cell) - x).squaredNorm();
  return u;
}

PotentialValue potential(const VoronoiMeasureSpec& spec,
                         const Eigen::Ref<const Vec>& x) {
  if (!spec.box().contains_state(x)) return {kInf, {}};
  if (min_bisector_margin(x, spec.table()) == 0.0)
    throw BoundaryError("potential: point lies exactly on a cell boundary");
  CellIndex cell = structured_project(x, spec.table());
  const double u = potential_in_cell(spec, x, cell);
  return {u, std::move(cell)};
}

Vec grad_potential(const VoronoiMeasureSpec& spec,
                   const Eigen::Ref<const Vec>& x) {
  if (!spec.box().contains_state(x))
    throw std::invalid_argument("grad_potential: point outside the box");
  if (min_bisector_margin(x, spec.table()) == 0.0)
    throw BoundaryError("grad_potential: point on a cell boundary");
  if (spec.mode() == BaseMeasureMode::UniformLebesgue)
    return Vec::Zero(x.size());
  const CellIndex cell = structured_project(x, spec.table());
  return x - spec.gaussian_center(cell);
}

double delta_potential(const VoronoiMeasureSpec& spec,
                       const Eigen::Ref<const Vec>& y, const CellIndex& from,
                       const CellIndex& to) {
  int diff_pos = -1;
  for (int n = 0; n < spec.seq_len(); ++n) {
    if (from[n] != to[n]) {
      if (diff_pos >= 0)
        throw std::invalid_argument(
            "delta_potential: cells differ at more than one position");
      diff_pos = n;
    }
  }
  if (diff_pos < 0)
    throw std::invalid_argument("delta_potential: cells are identical");
  const int d = spec.table().dim();
  const auto yn = y.segment(diff_pos * d, d);
  const double gap =
      std::abs((yn - spec.table().center(from[diff_pos])).squaredNorm() -
               (yn - spec.table().center(to[diff_pos])).squaredNorm());
  if (gap > 1e-9)
    throw std::invalid_argument(
        "delta_potential: point does not lie on the shared facet");
  return potential_in_cell(spec, y, to) - potential_in_cell(spec, y, from);
}

double delta_potential(const VoronoiMeasureSpec& spec,
                       const Eigen::Ref<const Vec>& y,
                       const CrossingEvent& event) {
  if (event.kind == CrossingKind::BoxFace) return kInf;
  return delta_potential(spec, y, event.from_cell, event.to_cell);
}

MassEstimate cell_mass_mc(const VoronoiMeasureSpec& spec,
                          const CellIndex& cell, long n_samples, Rng& rng) {
  if (n_samples < 1000)
    throw std::invalid_argument("cell_mass_mc: need at least 1e3 samples");
  const int dim = spec.state_dim();
  const int d = spec.table().dim();
  long hits = 0;
  if (spec.mode() == BaseMeasureMode::UniformLebesgue) {
    Vec lo(dim), hi(dim);
    for (int i = 0; i < dim; ++i) {
      lo[i] = spec.box().lower[i % d];
      hi[i] = spec.box().upper[i % d];
    }
    for (long s = 0; s < n_samples; ++s) {
      const Vec x = rng.uniform_vector(lo, hi);
      if (structured_project(x, spec.table()) == cell) ++hits;
    }
    const double scale = std::pow(spec.box().volume(), spec.seq_len());
    const double p = static_cast<double>(hits) / n_samples;
    return {scale * p, scale * std::sqrt(p * (1.0 - p) / n_samples),
            n_samples, 0};
  }
  const Vec g = spec.gaussian_center(cell);
  for (long s = 0; s < n_samples; ++s) {
    const Vec x = g + rng.normal_vector(dim);
    if (!spec.box().contains_state(x)) continue;
    if (structured_project(x, spec.table()) == cell) ++hits;
  }
  const double p = static_cast<double>(hits) / n_samples;
  return {p, std::sqrt(p * (1.0 - p) / n_samples), n_samples, 0};
}

std::vector<MassEstimate> compute_mass_cache(const VoronoiMeasureSpec& spec,
                                             long n_samples,
                                             std::uint64_t seed) {
  std::vector<MassEstimate> out;
  out.reserve(spec.n_cells());
  for (long i = 0; i < spec.n_cells(); ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    MassEstimate est = cell_mass_mc(spec, spec.cell_at(i), n_samples, rng);
    est.seed = mix_seed(seed, static_cast<std::uint64_t>(i));
    out.push_back(est);
  }
  return out;
}

std::string mass_cache_to_json(const VoronoiMeasureSpec& spec,
                               const std::vector<MassEstimate>& masses) {
  nlohmann::json arr = nlohmann::json::array();
  for (long i = 0; i < static_cast<long>(masses.size()); ++i) {
    nlohmann::json entry;
    entry["cell"] = spec.cell_at(i);
    entry["mass"] = masses[i].mass;
    entry["stderr"] = masses[i].stderr_;
    entry["n"] = masses[i].n;
    entry["seed"] = masses[i].seed;
    arr.push_back(std::move(entry));
  }
  return arr.dump(2);
}

std::vector<MassEstimate> mass_cache_from_json(const VoronoiMeasureSpec& spec,
                                               const std::string& json_text) {
  const auto arr = nlohmann::json::parse(json_text);
  std::vector<MassEstimate> out(spec.n_cells());
  if (static_cast<long>(arr.size()) != spec.n_cells())
    throw std::invalid_argument("mass cache: entry count mismatch");
  for (const auto& entry : arr) {
    const CellIndex cell = entry.at("cell").get<CellIndex>();
    MassEstimate est;
    est.mass = entry.at("mass").get<double>();
    est.stderr_ = entry.at("stderr").get<double>();
    est.n = entry.at("n").get<long>();
    est.seed = entry.at("seed").get<std::uint64_t>();
    out[spec.cell_index(cell)] = est;
  }
  return out;
}

}  // namespace vmc
