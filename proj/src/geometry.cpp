#include "vmc/geometry.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace vmc {

Box::Box(Vec lo, Vec up) : lower(std::move(lo)), upper(std::move(up)) {
  if (lower.size() != upper.size())
    throw std::invalid_argument("Box: lower/upper dimension mismatch");
  for (Eigen::Index i = 0; i < lower.size(); ++i)
    if (!(lower[i] < upper[i]))
      throw std::invalid_argument("Box: lower[i] must be < upper[i]");
}

Box Box::centered(int dim, double halfwidth) {
  return Box(Vec::Constant(dim, -halfwidth), Vec::Constant(dim, halfwidth));
}

bool Box::contains(const Eigen::Ref<const Vec>& x) const {
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (x[i] < lower[i] || x[i] > upper[i]) return false;
  return true;
}

bool Box::contains_state(const Eigen::Ref<const Vec>& x) const {
  const int d = dim();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const int j = static_cast<int>(i) % d;
    if (x[i] < lower[j] || x[i] > upper[j]) return false;
  }
  return true;
}

bool Box::strictly_inside_state(const Eigen::Ref<const Vec>& x,
                                double margin) const {
  const int d = dim();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const int j = static_cast<int>(i) % d;
    if (x[i] <= lower[j] + margin || x[i] >= upper[j] - margin) return false;
  }
  return true;
}

EmbeddingTable::EmbeddingTable(Eigen::MatrixXd centers)
    : centers_(std::move(centers)) {
  if (centers_.rows() < 2)
    throw std::invalid_argument("EmbeddingTable: need at least 2 centers");
  if (centers_.cols() < 1)
    throw std::invalid_argument("EmbeddingTable: dimension must be >= 1");
  if (min_pairwise_distance() <= 0.0)
    throw std::invalid_argument("EmbeddingTable: centers must be distinct");
}

Vec EmbeddingTable::centers_for(const CellIndex& cell) const {
  const int d = dim();
  Vec out(static_cast<Eigen::Index>(cell.size()) * d);
  for (std::size_t n = 0; n < cell.size(); ++n)
    out.segment(static_cast<Eigen::Index>(n) * d, d) = centers_.row(cell[n]);
  return out;
}

void EmbeddingTable::validate_inside(const Box& box) const {
  for (int m = 0; m < size(); ++m) {
    const auto row = centers_.row(m);
    for (int j = 0; j < dim(); ++j)
      if (row[j] <= box.lower[j] || row[j] >= box.upper[j])
        throw std::invalid_argument(
            "EmbeddingTable: center lies on or outside the box");
  }
}

double EmbeddingTable::min_pairwise_distance() const {
  double best = std::numeric_limits<double>::infinity();
  for (int a = 0; a < size(); ++a)
    for (int b = a + 1; b < size(); ++b)
      best = std::min(best, (centers_.row(a) - centers_.row(b)).norm());
  return best;
}

int nearest_center(const Eigen::Ref<const Vec>& x,
                   const EmbeddingTable& table) {
  const auto& c = table.centers();
  int best = 0;
  double best_d2 = (x.transpose() - c.row(0)).squaredNorm();
  for (int m = 1; m < table.size(); ++m) {
    const double d2 = (x.transpose() - c.row(m)).squaredNorm();
    if (d2 < best_d2) {  // strict: ties keep the smallest index
      best_d2 = d2;
      best = m;
    }
  }
  return best;
}

CellIndex structured_project(const Eigen::Ref<const Vec>& x,
                             const EmbeddingTable& table) {
  const int d = table.dim();
  if (x.size() % d != 0)
    throw std::invalid_argument("structured_project: state size not N*d");
  const int n_pos = static_cast<int>(x.size()) / d;
  CellIndex cell(n_pos);
  for (int n = 0; n < n_pos; ++n)
    cell[n] = nearest_center(x.segment(n * d, d), table);
  return cell;
}

double min_bisector_margin(const Eigen::Ref<const Vec>& x,
                           const EmbeddingTable& table) {
  const int d = table.dim();
  const int n_pos = static_cast<int>(x.size()) / d;
  const auto& c = table.centers();
  double margin = std::numeric_limits<double>::infinity();
  for (int n = 0; n < n_pos; ++n) {
    const auto xn = x.segment(n * d, d);
    const int m = nearest_center(xn, table);
    const double d2_own = (xn.transpose() - c.row(m)).squaredNorm();
    for (int o = 0; o < table.size(); ++o) {
      if (o == m) continue;
      const double d2 = (xn.transpose() - c.row(o)).squaredNorm();
      const double gap = (c.row(o) - c.row(m)).norm();
      // distance from xn to the (m, o) bisector plane
      margin = std::min(margin, (d2 - d2_own) / (2.0 * gap));
    }
  }
  return margin;
}

std::optional<CrossingEvent> first_crossing(
    const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& direction,
    double span, const EmbeddingTable& table, const Box& box,
    const CellIndex* from_cell) {
  if (direction.norm() == 0.0)
    throw std::invalid_argument("first_crossing: direction must be nonzero");
  if (!(span > 0.0))
    throw std::invalid_argument("first_crossing: span must be positive");

  const int d = table.dim();
  const int n_pos = static_cast<int>(x.size()) / d;
  const CellIndex cell = from_cell ? *from_cell : structured_project(x, table);
  const auto& c = table.centers();

  double best_t = std::numeric_limits<double>::infinity();
  int best_pos = -1, best_other = -1;
  int box_coord = -1;
  double box_sign = 0.0;

  // Cell bisectors: along y(t) = x_n + t*dir_n the signed gap
  // f(t) = ||y - v_m||^2 - ||y - v_o||^2 is linear; a crossing out of cell m
  // happens where f hits zero with positive slope.
  for (int n = 0; n < n_pos; ++n) {
    const auto xn = x.segment(n * d, d);
    const auto dn = direction.segment(n * d, d);
    const int m = cell[n];
    const double d2_own = (xn.transpose() - c.row(m)).squaredNorm();
    for (int o = 0; o < table.size(); ++o) {
      if (o == m) continue;
      const double f0 = d2_own - (xn.transpose() - c.row(o)).squaredNorm();
      const double slope = 2.0 * dn.dot((c.row(o) - c.row(m)).transpose());
      if (slope <= 0.0) continue;  // moving away from (or parallel to) o
      const double t = -f0 / slope;
      if (t > 0.0 && t < best_t) {
        best_t = t;
        best_pos = n;
        best_other = o;
      }
    }
  }

  // Box faces, per flat coordinate.
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const int j = static_cast<int>(i) % d;
    const double di = direction[i];
    if (di > 0.0) {
      const double t = (box.upper[j] - x[i]) / di;
      if (t > 0.0 && t < best_t) {
        best_t = t;
        best_pos = -1;
        box_coord = static_cast<int>(i);
        box_sign = 1.0;
      }
    } else if (di < 0.0) {
      const double t = (box.lower[j] - x[i]) / di;
      if (t > 0.0 && t < best_t) {
        best_t = t;
        best_pos = -1;
        box_coord = static_cast<int>(i);
        box_sign = -1.0;
      }
    }
  }

  if (!(best_t <= span)) return std::nullopt;

  CrossingEvent ev;
  ev.fraction = best_t / span;
  ev.from_cell = cell;
  ev.normal = Vec::Zero(x.size());
  if (best_pos >= 0) {
    ev.kind = CrossingKind::CellBoundary;
    ev.position = best_pos;
    ev.to_cell = cell;
    ev.to_cell[best_pos] = best_other;
    Vec nrm = (c.row(best_other) - c.row(cell[best_pos])).transpose();
    ev.normal.segment(best_pos * d, d) = nrm / nrm.norm();
  } else {
    ev.kind = CrossingKind::BoxFace;
    ev.position = box_coord / d;
    ev.to_cell = cell;
    ev.normal[box_coord] = box_sign;  // outward axis unit vector
  }
  return ev;
}

}  // namespace vmc
