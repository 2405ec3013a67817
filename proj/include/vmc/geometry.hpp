#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

namespace vmc {

using Vec = Eigen::VectorXd;

/// A structured cell index: one center index per sequence position.
using CellIndex = std::vector<int>;

/// Axis-aligned compact box K, one copy of [lower, upper] per position.
/// Positions share the same d-dimensional box.
struct Box {
  Vec lower;
  Vec upper;

  Box(Vec lo, Vec up);

  /// Hypercube [-h, h]^d.
  static Box centered(int dim, double halfwidth);

  int dim() const { return static_cast<int>(lower.size()); }
  double volume() const { return (upper - lower).prod(); }

  /// True if the d-dimensional point lies inside (boundary counts as inside).
  bool contains(const Eigen::Ref<const Vec>& x) const;
  /// True if every position block of the flat N*d state lies inside.
  bool contains_state(const Eigen::Ref<const Vec>& x) const;
  /// Strict interior test with margin.
  bool strictly_inside_state(const Eigen::Ref<const Vec>& x,
                             double margin = 0.0) const;
};

/// The base embeddings {v_m} that induce the Voronoi tessellation.
class EmbeddingTable {
 public:
  /// centers: M x d, one row per symbol. Rows must be pairwise distinct.
  explicit EmbeddingTable(Eigen::MatrixXd centers);

  int size() const { return static_cast<int>(centers_.rows()); }
  int dim() const { return static_cast<int>(centers_.cols()); }
  const Eigen::MatrixXd& centers() const { return centers_; }
  Vec center(int m) const { return centers_.row(m).transpose(); }

  /// Flat N*d vector of centers for a structured index.
  Vec centers_for(const CellIndex& cell) const;

  /// Requires every center strictly inside the box; throws otherwise.
  void validate_inside(const Box& box) const;

  double min_pairwise_distance() const;

 private:
  Eigen::MatrixXd centers_;
};

enum class CrossingKind { CellBoundary, BoxFace };

/// First boundary hit along a ray segment, from solving the bisector (or
/// box-face) equation exactly.
struct CrossingEvent {
  double fraction = 0.0;  // portion of the span consumed, in (0, 1]
  Vec normal;             // unit normal of the crossed facet, length N*d
  CellIndex from_cell;
  CellIndex to_cell;
  CrossingKind kind = CrossingKind::CellBoundary;
  int position = -1;  // sequence position of the facet (cell boundaries)
};

/// argmin_m ||x - v_m||^2, ties broken by smallest index.
int nearest_center(const Eigen::Ref<const Vec>& x, const EmbeddingTable& table);

/// Position-wise nearest center of a flat N*d state. Equals the joint argmin
/// over [M]^N because the objective decomposes per position.
CellIndex structured_project(const Eigen::Ref<const Vec>& x,
                             const EmbeddingTable& table);

/// Euclidean distance from x (flat N*d) to the nearest cell bisector over all
/// positions. Zero means x sits exactly on a boundary.
double min_bisector_margin(const Eigen::Ref<const Vec>& x,
                           const EmbeddingTable& table);

/// Earliest exit of the segment x + t * direction, t in (0, span], from the
/// current structured cell (bisector crossing) or from the box (face
/// crossing). Returns nullopt if the segment stays in the cell and box.
///
/// If from_cell is supplied it is trusted as the cell of x (used by the
/// integrator right after a facet event, where re-projecting x is ambiguous).
std::optional<CrossingEvent> first_crossing(
    const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& direction,
    double span, const EmbeddingTable& table, const Box& box,
    const CellIndex* from_cell = nullptr);

}  // namespace vmc
