#pragma once

// Value types shared by every module: states, path segments on a uniform
// delay grid, weighted empirical measures and counter-based noise streams.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace mvlab {

/// Point of the state space (R^d or a mode-truncated Hilbert space).
class StateVector {
public:
    StateVector() = default;
    explicit StateVector(std::size_t dim, double fill = 0.0);
    explicit StateVector(std::vector<double> coords);
    StateVector(std::initializer_list<double> coords);

    [[nodiscard]] std::size_t dim() const noexcept { return coords_.size(); }
    [[nodiscard]] double operator[](std::size_t i) const { return coords_[i]; }
    double& operator[](std::size_t i) { return coords_[i]; }
    [[nodiscard]] std::span<const double> span() const noexcept { return coords_; }
    std::span<double> span() noexcept { return coords_; }
    [[nodiscard]] const std::vector<double>& coords() const noexcept { return coords_; }

    friend bool operator==(const StateVector&, const StateVector&) = default;

private:
    std::vector<double> coords_;
};

[[nodiscard]] double euclidean_norm(std::span<const double> x);
[[nodiscard]] double euclidean_distance(std::span<const double> x, std::span<const double> y);

/// Number of grid points on [-r0, 0] for spacing dt. Throws if dt does not
/// divide r0 (relative tolerance 1e-9) or if dt <= 0.
[[nodiscard]] std::size_t grid_length(double r0, double dt);

/// A discretized path on [-r0, 0]: values at theta_k = -r0 + k*dt_grid,
/// k = 0 (oldest) .. grid_size()-1 (current). Stored as a ring so that an
/// in-place shift is O(dim).
class Segment {
public:
    Segment() = default;
    /// Constant segment equal to `fill` on the whole grid.
    Segment(const StateVector& fill, double r0, double dt_grid);
    /// Degenerate path space (r0 = 0): a single state.
    static Segment point(const StateVector& x);
    /// values[0] is the oldest grid value.
    static Segment from_values(const std::vector<StateVector>& values, double r0, double dt_grid);

    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] std::size_t grid_size() const noexcept { return len_; }
    [[nodiscard]] double r0() const noexcept { return r0_; }
    [[nodiscard]] double dt_grid() const noexcept { return dt_; }

    [[nodiscard]] std::span<const double> value(std::size_t k) const;
    [[nodiscard]] StateVector state(std::size_t k) const;
    [[nodiscard]] std::span<const double> current() const { return value(len_ - 1); }
    /// Piecewise-linear evaluation at theta in [-r0, 0].
    [[nodiscard]] StateVector at(double theta) const;

    /// Drop the oldest value and append `v` as the current one.
    void push(std::span<const double> v);

    friend bool operator==(const Segment& a, const Segment& b);

private:
    std::size_t dim_ = 0;
    std::size_t len_ = 0;
    std::size_t head_ = 0;  // storage slot of value(0)
    double r0_ = 0.0;
    double dt_ = 1.0;
    std::vector<double> data_;
};

/// Segment advanced by one grid step (queue semantics).
[[nodiscard]] Segment segment_shift(const Segment& seg, const StateVector& new_value);
/// max over the grid of the Euclidean norm.
[[nodiscard]] double sup_norm(const Segment& seg);
/// sup_norm(a - b) without materializing the difference.
[[nodiscard]] double sup_distance(const Segment& a, const Segment& b);

/// Finite weighted set of segment atoms. Weights are nonnegative and sum to
/// one (checked to 1e-12); a uniform measure stores no weight vector.
class EmpiricalMeasure {
public:
    EmpiricalMeasure() = default;
    explicit EmpiricalMeasure(std::vector<Segment> atoms);
    EmpiricalMeasure(std::vector<Segment> atoms, std::vector<double> weights);
    static EmpiricalMeasure dirac(const Segment& atom);
    static EmpiricalMeasure from_points(const std::vector<StateVector>& points);

    [[nodiscard]] std::size_t size() const noexcept { return atoms_.size(); }
    [[nodiscard]] bool empty() const noexcept { return atoms_.empty(); }
    [[nodiscard]] bool is_uniform() const noexcept { return weights_.empty(); }
    [[nodiscard]] std::size_t dim() const;
    [[nodiscard]] std::size_t grid_size() const;

    [[nodiscard]] const Segment& atom(std::size_t i) const { return atoms_[i]; }
    Segment& atom(std::size_t i) { return atoms_[i]; }
    [[nodiscard]] const std::vector<Segment>& atoms() const noexcept { return atoms_; }
    [[nodiscard]] double weight(std::size_t i) const;
    [[nodiscard]] std::vector<double> weights() const;

    /// Mean of the current (theta = 0) values.
    [[nodiscard]] StateVector mean_current() const;
    /// Covariance matrix (row-major, dim x dim) of the current values.
    [[nodiscard]] std::vector<double> covariance_current() const;

private:
    void validate() const;

    std::vector<Segment> atoms_;
    std::vector<double> weights_;
};

/// Reproducible Gaussian source. Draw k of stream (master_seed, stream_id) is
/// a pure function of (master_seed, stream_id, domain, k), so particles can be
/// advanced in any order or on any thread.
class NoiseStream {
public:
    enum class Domain : std::uint32_t { increments = 0, initial = 1, auxiliary = 2 };

    NoiseStream(std::uint64_t master_seed, std::uint64_t stream_id, double dt,
                Domain domain = Domain::increments, bool antithetic = false);

    [[nodiscard]] std::uint64_t master_seed() const noexcept { return seed_; }
    [[nodiscard]] std::uint64_t stream_id() const noexcept { return id_; }
    [[nodiscard]] double dt() const noexcept { return dt_; }
    [[nodiscard]] bool antithetic() const noexcept { return sign_ < 0.0; }

    /// Standard normal draw number k (sign-flipped for antithetic streams).
    [[nodiscard]] double normal(std::uint64_t k) const;
    /// Uniform on (0, 1), independent of the normal draws.
    [[nodiscard]] double uniform(std::uint64_t k) const;
    /// N(0, dt I_dim) increment for step `step` written into out.
    void increment(std::uint64_t step, std::span<double> out) const;

    [[nodiscard]] NoiseStream with_domain(Domain d) const;

private:
    std::uint64_t seed_;
    std::uint64_t id_;
    double dt_;
    Domain domain_;
    double sign_;
    std::uint32_t key_[2];
};

[[nodiscard]] std::vector<StateVector> gaussian_increments(const NoiseStream& stream,
                                                           std::size_t n_steps, std::size_t dim);

}  // namespace mvlab
