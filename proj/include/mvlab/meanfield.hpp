#pragma once

// Law-level machinery: interacting particles, Picard iteration over law
// flows, invariant-law estimation and occupation measures.

#include "mvlab/core.hpp"
#include "mvlab/integrator.hpp"
#include "mvlab/models.hpp"
#include "mvlab/transport.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace mvlab {

/// Draws the initial segment of one particle from its own initial-domain stream.
using InitSampler = std::function<Segment(std::size_t particle, const NoiseStream& draws)>;

[[nodiscard]] InitSampler constant_init(const Segment& seg);
/// Constant history at mean + sd * Z, Z standard normal in R^dim.
[[nodiscard]] InitSampler gaussian_init(const StateVector& mean, double sd, double r0, double dt);
/// Particle i takes atom i mod size (exact for uniform measures whose size divides N).
[[nodiscard]] InitSampler cycle_init(const EmpiricalMeasure& mu);
/// Independent draws from mu by inverse CDF on one uniform per particle.
[[nodiscard]] InitSampler resample_init(const EmpiricalMeasure& mu);

/// N particle segments at time t. The particles double as the mean-field
/// surrogate for the law of X_t.
struct ParticleEnsemble {
    EmpiricalMeasure particles;
    double t = 0.0;

    [[nodiscard]] std::size_t size() const noexcept { return particles.size(); }
};

/// Measures at increasing checkpoint times.
struct LawFlow {
    std::vector<double> times;
    std::vector<EmpiricalMeasure> measures;

    [[nodiscard]] std::size_t size() const noexcept { return times.size(); }
    void push(double t, EmpiricalMeasure mu);
    /// Atom-per-row CSV: t, atom, weight, x_1..x_d (current values).
    void write_csv(std::ostream& os) const;

    friend bool operator==(const LawFlow& a, const LawFlow& b);
};

/// Atom-per-row CSV of one measure: atom, weight, then every grid value
/// (x_1..x_d for r0 = 0; theta_k blocks otherwise).
void write_measure_csv(std::ostream& os, const EmpiricalMeasure& mu);

struct EnsembleConfig {
    std::size_t N = 1000;
    double T = 1.0;
    StepScheme scheme;
    std::uint64_t seed = 0;
    /// Steps between law checkpoints; 0 picks every step when r0 > 0, every 10 otherwise.
    std::size_t checkpoint_stride = 0;
    bool record_flow = true;
    /// Particles 2k and 2k+1 share stream k with opposite signs.
    bool antithetic = false;
    /// Indices of particles whose full trajectory is recorded.
    std::vector<std::size_t> tracked;
    /// Optional stream id per particle (defaults to the particle index).
    std::vector<std::uint64_t> stream_ids;
};

struct EnsembleRun {
    ParticleEnsemble ensemble;
    LawFlow flow;
    std::vector<TrajectoryRecord> tracked;
};

/// Called at step 0 (t = 0) and after every step with the current particles.
using StepObserver = std::function<void(std::size_t step, double t, const EmpiricalMeasure& particles)>;

/// Noise stream driving particle i under cfg (stream id and antithetic sign).
[[nodiscard]] NoiseStream particle_stream(const EnsembleConfig& cfg, std::size_t i,
                                          NoiseStream::Domain domain = NoiseStream::Domain::increments);

[[nodiscard]] std::size_t default_checkpoint_stride(const ModelSpec& model);

/// All particles step from the shared step-start empirical measure.
[[nodiscard]] EnsembleRun simulate_mckean_vlasov(const ModelSpec& model, const InitSampler& init,
                                                 const EnsembleConfig& cfg, const StepObserver& observer = {});

// ------------------------------------------------------------------- Picard

enum class PicardVariant {
    /// X^{n+1} solves the non-interacting equation with law argument frozen at flow n.
    frozen_law,
    /// Drift and diffusion read both the path X^n and the law of iteration n.
    frozen_path_and_law,
};

struct PicardConfig {
    std::size_t n_iter = 6;
    std::size_t N = 1000;
    StepScheme scheme;
    std::uint64_t seed = 0;
    PicardVariant variant = PicardVariant::frozen_law;
    /// Transport exponent; <= 0 reads the model's "p" (default 2).
    double p = 0.0;
    /// Evaluate the flow distance every k-th checkpoint (the last one always counts).
    std::size_t distance_stride = 1;
};

struct PicardResult {
    /// flows[0] is the constant initial law, flows[n] the law of iteration n.
    std::vector<LawFlow> flows;
    /// distances[n] = sup over checkpoints of W_p(flows[n+1], flows[n]).
    std::vector<double> distances;
    /// ratios[n] = distances[n] / distances[n-1]; ratios[0] is NaN; 0/0 counts as 0.
    std::vector<double> ratios;
    double t0 = 0.0;
};

/// Runs n_iter Picard passes on [0, t0] (t0 rounded down to the dt grid) with
/// identical noise streams in every pass. Throws when the initial law is a
/// single atom and the diffusion vanishes (the iteration cannot move).
[[nodiscard]] PicardResult picard_solve(const ModelSpec& model, const EmpiricalMeasure& init_law, double t0,
                                        const PicardConfig& cfg);

/// Solves (K t)^p + K t = 1/(2 C2) for t, capped at horizon. Throws when K <= 0.
[[nodiscard]] double pick_t0(double K, double p, double C2 = 1.0, double horizon = 1.0);
/// Reads K from "lipschitz_K" and p from "p" (default 2).
[[nodiscard]] double pick_t0(const ModelSpec& model, double C2 = 1.0, double horizon = 1.0);

// ---------------------------------------------------------------- invariant

struct InvariantEstimate {
    EmpiricalMeasure measure;
    double T_burn = 0.0;
    std::size_t snapshots = 0;
    std::vector<std::string> warnings;
};

struct InvariantConfig {
    std::size_t N = 1000;
    /// Negative: 5 / contraction_rate from the model constants.
    double T_burn = -1.0;
    double T_sample = 10.0;
    /// Time between pooled snapshots.
    double thin_interval = 1.0;
    StepScheme scheme;
    std::uint64_t seed = 0;
    bool antithetic = false;
};

/// Pools particle segments at T_burn, T_burn + thin, ..., T_burn + T_sample.
[[nodiscard]] InvariantEstimate estimate_invariant(const ModelSpec& model, const InvariantConfig& cfg,
                                                   const InitSampler& init = {});

// --------------------------------------------------------------- occupation

struct OccupationMeasure {
    EmpiricalMeasure base;
    std::vector<double> times;
};

/// Uniform measure over the retained snapshots t_lo, t_lo + stride dt, ... < t_hi.
[[nodiscard]] OccupationMeasure occupation_measure(const TrajectoryRecord& traj, double t_lo, double t_hi,
                                                   std::size_t stride = 1);
/// Same over explicit snapshots (times increasing).
[[nodiscard]] OccupationMeasure occupation_measure(const std::vector<Segment>& snapshots,
                                                   const std::vector<double>& times, double t_lo, double t_hi,
                                                   std::size_t stride = 1);

}  // namespace mvlab
