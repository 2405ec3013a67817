#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vmc/measures.hpp"
#include "vmc/rng.hpp"

namespace vmc {

enum class Algorithm { Hmc, Langevin, ProjectedLangevin, Svs };

/// Momentum draw: N(0, I) (default, makes the no-discontinuity SVS step and
/// HMC with L=1 coincide exactly) or N(0, eps*I) as written in the SVS
/// pseudocode.
enum class MomentumScale { UnitVariance, EpsilonVariance };

enum class StepDecay { None, ExponentialToFloor };

std::string algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);

struct SamplerConfig {
  Algorithm algorithm = Algorithm::Svs;
  double step_size = 0.0;    // epsilon, must be > 0
  int leapfrog_steps = 1;    // L, HMC only
  double disc_fraction = 0.1;  // alpha in (0, 1], SVS only
  double control_weight = 0.0;  // gamma, recorded with the run
  int burn_in = 500;
  int n_samples = 200;
  MomentumScale momentum_scale = MomentumScale::UnitVariance;
  StepDecay step_decay = StepDecay::None;
  double decay_floor = 0.05;
  int decay_after = 500;
  std::uint64_t seed = 0;
  bool mucola_metropolis = false;  // Metropolis-corrected projected baseline
  bool grad_at_projected_center = false;  // kicks use grad at V_{bm*(x)}
  bool literal_refraction = false;        // r_perp / ||r_perp||^2 variant

  void validate() const;
};

/// Position of one chain with its cached cell and potential. For the
/// projected baseline the position is a tuple of cell centers and the cached
/// potential is the discrete model potential -log p(cell).
struct ChainState {
  Vec x;
  CellIndex cell;
  double potential = 0.0;
};

/// Interior start state; rejects points on (or within 1e-12 of) a bisector.
ChainState make_state(const VoronoiMeasureSpec& spec,
                      const Eigen::Ref<const Vec>& x);

/// Start state for the projected baseline: x snapped to its cell centers.
ChainState make_projected_state(const VoronoiMeasureSpec& spec,
                                const Eigen::Ref<const Vec>& x);

struct StepOutcome {
  ChainState next;
  bool accepted = true;
  double hamiltonian_error = 0.0;
  int n_reflections = 0;
  int n_refractions = 0;
};

struct RefractResult {
  Vec momentum;
  bool refracted = false;
};

/// Momentum update at a potential barrier: transmit with reduced normal
/// speed when the normal kinetic energy exceeds the jump, mirror otherwise.
/// delta_u = +inf always reflects. The literal flag reproduces the
/// r_perp/||r_perp||^2 scaling as printed in the pseudocode instead of the
/// conservation-consistent unit direction.
RefractResult refract_reflect(const Eigen::Ref<const Vec>& momentum,
                              const Eigen::Ref<const Vec>& normal,
                              double delta_u, bool literal = false);

struct FlowResult {
  Vec x;
  Vec r;
  CellIndex cell;
  int n_reflections = 0;
  int n_refractions = 0;
};

/// Thrown when one step produces an implausible number of facet events,
/// which indicates a mis-sized step size.
struct ChatterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Advances x by eps * r, splitting the step into disc_fraction pieces and
/// resolving every facet crossing exactly: refract or reflect at cell
/// bisectors (according to the potential jump), always reflect at box faces.
FlowResult find_disc(const VoronoiMeasureSpec& spec,
                     const Eigen::Ref<const Vec>& x,
                     const Eigen::Ref<const Vec>& r, double eps, double alpha,
                     const CellIndex* start_cell = nullptr,
                     bool literal_refraction = false);

StepOutcome hmc_step(const ChainState& state, const VoronoiMeasureSpec& spec,
                     const SamplerConfig& cfg, double eps, Rng& rng);
StepOutcome langevin_step(const ChainState& state,
                          const VoronoiMeasureSpec& spec,
                          const SamplerConfig& cfg, double eps, Rng& rng);
StepOutcome mucola_step(const ChainState& state, const VoronoiMeasureSpec& spec,
                        const SamplerConfig& cfg, double eps, Rng& rng);
StepOutcome svs_step(const ChainState& state, const VoronoiMeasureSpec& spec,
                     const SamplerConfig& cfg, double eps, Rng& rng);

/// One step of the configured algorithm at the given effective step size.
StepOutcome sampler_step(const ChainState& state,
                         const VoronoiMeasureSpec& spec,
                         const SamplerConfig& cfg, double eps, Rng& rng);

/// Step size at iteration t under the configured decay schedule.
double effective_step_size(const SamplerConfig& cfg, int iteration);

struct RunRecord {
  int iter = 0;
  Vec x;
  CellIndex cell;
  bool accepted = true;
  double dh = 0.0;
  int n_reflect = 0;
  int n_refract = 0;
};

/// Burn-in then n_samples recorded states. Deterministic under a fixed seed.
std::vector<RunRecord> run_chain(const VoronoiMeasureSpec& spec,
                                 const SamplerConfig& cfg,
                                 const Eigen::Ref<const Vec>& init, Rng& rng);

/// Uniform draw from the box interior, rejecting points within 1e-12 of a
/// bisector so chains never start on a boundary.
Vec draw_interior_point(const VoronoiMeasureSpec& spec, Rng& rng);

std::string records_to_jsonl(const std::vector<RunRecord>& records);
void write_jsonl(const std::vector<RunRecord>& records,
                 const std::string& path);

}  // namespace vmc
