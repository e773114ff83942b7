#pragma once

// Single-trajectory time stepping on the segment grid.

#include "mvlab/core.hpp"
#include "mvlab/linalg.hpp"
#include "mvlab/models.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mvlab {

enum class SchemeKind { euler_maruyama, exponential_euler };

[[nodiscard]] const char* to_string(SchemeKind k);
/// Accepts "euler_maruyama" / "em" and "exponential_euler" / "exp_euler".
[[nodiscard]] SchemeKind scheme_kind_from_string(const std::string& s);

struct StepScheme {
    SchemeKind kind = SchemeKind::euler_maruyama;
    double dt = 0.01;
};

/// Throws std::invalid_argument when the scheme cannot drive the model: the
/// exponential scheme needs a linear operator, and dt must divide r0.
void check_scheme(const ModelSpec& model, const StepScheme& scheme);

/// Number of steps covering [0, T]; T must be a multiple of dt (1e-9 relative).
[[nodiscard]] std::size_t step_count(double T, double dt);

/// Reusable buffers so stepping allocates nothing.
struct StepScratch {
    std::vector<double> drift;
    std::vector<double> noise;
};

/// The constants of one scheme applied to one model, computed once.
///   euler_maruyama:    x' = x + (-lambda x + b) dt + sigma dW
///   exponential_euler: x' = e^{-lambda dt} x + (1 - e^{-lambda dt})/lambda b
///                           + sqrt((1 - e^{-2 lambda dt})/(2 lambda)) (sigma dW)/sqrt(dt)
class Stepper {
public:
    Stepper(const ModelSpec& model, const StepScheme& scheme);

    [[nodiscard]] const ModelSpec& model() const noexcept { return *model_; }
    [[nodiscard]] const StepScheme& scheme() const noexcept { return scheme_; }

    /// Next state from the linear-part state x, the drift segment `seg`, the
    /// step-start law features and diffusion matrix, and the increment dW
    /// (noise_dim entries). Usually x is seg.current().
    void advance(std::span<const double> x, const Segment& seg, const LawFeatures& features, const Matrix& sigma,
                 std::span<const double> dW, std::span<double> out, StepScratch& scratch) const;

    /// Combines already-evaluated drift b and noise sigma dW (both dim entries).
    void combine(std::span<const double> x, std::span<const double> b, std::span<const double> noise,
                 std::span<double> out) const;

private:
    const ModelSpec* model_;
    StepScheme scheme_;
    std::vector<double> decay_;
    std::vector<double> drift_gain_;
    std::vector<double> noise_gain_;
};

/// One step of `model` from `seg` with the law argument `measure`.
[[nodiscard]] StateVector step(const ModelSpec& model, const Segment& seg, const EmpiricalMeasure& measure,
                               const StateVector& noise_increment, const StepScheme& scheme);
[[nodiscard]] StateVector step(const ReferenceModel& ref, const Segment& seg, const EmpiricalMeasure& measure,
                               const StateVector& noise_increment, const StepScheme& scheme);

/// States at t_k = k dt for k = 0..n, plus the initial history for segment
/// reconstruction.
struct TrajectoryRecord {
    double dt = 0.0;
    Segment initial;
    std::vector<double> times;
    std::vector<StateVector> states;

    [[nodiscard]] std::size_t size() const noexcept { return states.size(); }
    /// The segment X_{t_k}, reaching back into the initial history as needed.
    [[nodiscard]] Segment segment_at(std::size_t k) const;
    /// Header "t,x_1,...,x_d", one row per time, values printed with %.17g.
    void write_csv(std::ostream& os) const;

    friend bool operator==(const TrajectoryRecord&, const TrajectoryRecord&) = default;
};

/// Trajectory of a model whose law argument is held at `measure` (ignored by
/// law-independent models, which may pass an empty measure).
[[nodiscard]] TrajectoryRecord simulate(const ModelSpec& model, const Segment& init, double T,
                                        const StepScheme& scheme, const NoiseStream& stream,
                                        const EmpiricalMeasure& measure = {});

[[nodiscard]] TrajectoryRecord simulate_reference(const ReferenceModel& ref, const Segment& init, double T,
                                                  const StepScheme& scheme, const NoiseStream& stream);

struct CoupledRun {
    TrajectoryRecord original;
    TrajectoryRecord reference;
    /// min(||X_{t_k} - Xbar_{t_k}||_inf, 1) for k = 0..n.
    std::vector<double> distance;
};

/// Advances `model` under the supplied law flow (one measure per step, taken
/// at the step start) and `ref` on the identical increments.
[[nodiscard]] CoupledRun simulate_coupled(const ModelSpec& model, const ReferenceModel& ref, const Segment& init,
                                          double T, const StepScheme& scheme, const NoiseStream& stream,
                                          std::span<const EmpiricalMeasure> law_flow);

/// Writes "t,value" rows.
void write_series_csv(std::ostream& os, const std::vector<double>& t, const std::vector<double>& v,
                      const std::string& value_name = "value");

/// printf("%.17g") formatting used for every emitted number.
[[nodiscard]] std::string format_number(double v);

}  // namespace mvlab
