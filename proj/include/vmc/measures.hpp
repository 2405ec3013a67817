#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "vmc/geometry.hpp"
#include "vmc/models.hpp"
#include "vmc/rng.hpp"

namespace vmc {

/// Thrown when an operation is evaluated exactly on a cell boundary, where
/// the density branch is ambiguous. Callers perturb and retry.
struct BoundaryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Discrete target probabilities paired with the embeddings that carry them.
struct EmbeddingAugmentedDistribution {
  Eigen::VectorXd probs;
  EmbeddingTable table;

  EmbeddingAugmentedDistribution(Eigen::VectorXd p, EmbeddingTable t);
};

/// probs^(1/T), renormalized. Errors when a zero probability meets T != 1.
EmbeddingAugmentedDistribution anneal(
    const EmbeddingAugmentedDistribution& dist, double temperature);

enum class BaseMeasureMode { GaussianAtGradient, UniformLebesgue };
enum class TargetKind { Categorical, SequenceModel, Controlled };

struct PotentialValue {
  double value = 0.0;
  CellIndex cell;

  bool is_infinite() const { return std::isinf(value); }
};

struct MassEstimate {
  double mass = 0.0;
  double stderr_ = 0.0;
  long n = 0;
  std::uint64_t seed = 0;
};

/// A discrete distribution over structured cells encoded as a density on
/// R^(N*d): each cell carries exp(-U) with
///   U(x) = -log p(cell) + log mu(cell) + 1/2 ||x - g_cell||^2   (Gaussian)
///   U(x) = -log p(cell) + log lambda(cell & box)                (uniform)
/// and U = +inf outside the box. Cell tables are precomputed densely, so all
/// evaluation is pure and safe to share across chains.
class VoronoiMeasureSpec {
 public:
  static VoronoiMeasureSpec categorical(
      const EmbeddingAugmentedDistribution& dist, Box box, double temperature,
      BaseMeasureMode mode = BaseMeasureMode::GaussianAtGradient,
      bool equal_mass_assumed = true);

  static VoronoiMeasureSpec sequence_model(const TinyEmbedLM& model, Box box,
                                           double temperature = 1.0,
                                           bool equal_mass_assumed = true);

  static VoronoiMeasureSpec controlled(const TinyEmbedLM& model,
                                       const LinearAttributeClassifier& clf,
                                       int target, double gamma, Box box,
                                       double temperature = 1.0,
                                       bool equal_mass_assumed = true);

  TargetKind target_kind() const { return kind_; }
  BaseMeasureMode mode() const { return mode_; }
  bool equal_mass_assumed() const { return equal_mass_; }
  double temperature() const { return temperature_; }
  const EmbeddingTable& table() const { return table_; }
  const Box& box() const { return box_; }
  int seq_len() const { return seq_len_; }
  int state_dim() const { return seq_len_ * table_.dim(); }
  long n_cells() const { return static_cast<long>(log_prob_.size()); }

  long cell_index(const CellIndex& cell) const;
  CellIndex cell_at(long index) const;

  /// Annealed, normalized log target probability of a cell.
  double log_prob(const CellIndex& cell) const {
    return log_prob_[cell_index(cell)];
  }
  /// Center of the cell's Gaussian base measure (the gradient field g).
  Vec gaussian_center(const CellIndex& cell) const;
  /// Gradient of the discrete model's log probability at the cell centers;
  /// zero for bare categorical targets. Used by the projected baseline.
  Vec score_grad(const CellIndex& cell) const;
  double log_mass(const CellIndex& cell) const {
    return log_mass_[cell_index(cell)];
  }

  /// Install Monte-Carlo cell masses; clears the equal-mass assumption.
  void set_mass_cache(const std::vector<MassEstimate>& masses);

  /// Full annealed target as a dense table (reference for diagnostics).
  Eigen::VectorXd target_table() const;

 private:
  VoronoiMeasureSpec(EmbeddingTable table, Box box, int seq_len);

  TargetKind kind_ = TargetKind::Categorical;
  BaseMeasureMode mode_ = BaseMeasureMode::GaussianAtGradient;
  bool equal_mass_ = true;
  double temperature_ = 1.0;
  EmbeddingTable table_;
  Box box_;
  int seq_len_ = 1;
  std::vector<double> log_prob_;   // annealed, normalized, length M^N
  std::vector<double> log_mass_;   // log base-measure mass per cell
  Eigen::MatrixXd gauss_center_;   // M^N x (N*d)
  Eigen::MatrixXd score_grad_;     // M^N x (N*d)
};

/// U(x) = -log p~(x); +inf outside the box. Throws BoundaryError when x sits
/// exactly on a bisector.
PotentialValue potential(const VoronoiMeasureSpec& spec,
                         const Eigen::Ref<const Vec>& x);

/// The potential of a specific cell's branch evaluated at x (no projection).
double potential_in_cell(const VoronoiMeasureSpec& spec,
                         const Eigen::Ref<const Vec>& x,
                         const CellIndex& cell);

/// grad U = x - g_cell inside a cell (Gaussian mode), zero in uniform mode.
/// Errors on boundary points and outside the box.
Vec grad_potential(const VoronoiMeasureSpec& spec,
                   const Eigen::Ref<const Vec>& x);

/// Signed potential jump U_to(y) - U_from(y) across the facet shared by two
/// cells, each side evaluated on its own branch. The cells must differ at
/// exactly one position and y must lie on their bisector (within 1e-9).
double delta_potential(const VoronoiMeasureSpec& spec,
                       const Eigen::Ref<const Vec>& y, const CellIndex& from,
                       const CellIndex& to);

/// Potential jump for a crossing event; +inf for box faces.
double delta_potential(const VoronoiMeasureSpec& spec,
                       const Eigen::Ref<const Vec>& y,
                       const CrossingEvent& event);

/// Monte-Carlo base-measure mass of one structured cell.
/// Uniform mode: Lebesgue volume of cell & box. Gaussian mode: mass of the
/// cell under the normalized Gaussian centered at the cell's g vector.
MassEstimate cell_mass_mc(const VoronoiMeasureSpec& spec,
                          const CellIndex& cell, long n_samples, Rng& rng);

/// Masses of every cell, each estimated with n_samples draws.
std::vector<MassEstimate> compute_mass_cache(const VoronoiMeasureSpec& spec,
                                             long n_samples,
                                             std::uint64_t seed);

std::string mass_cache_to_json(const VoronoiMeasureSpec& spec,
                               const std::vector<MassEstimate>& masses);
std::vector<MassEstimate> mass_cache_from_json(const VoronoiMeasureSpec& spec,
                                               const std::string& json_text);

}  // namespace vmc
