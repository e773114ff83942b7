#include "mvlab/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace mvlab {

const char* to_string(SchemeKind k) {
    return k == SchemeKind::euler_maruyama ? "euler_maruyama" : "exponential_euler";
}

SchemeKind scheme_kind_from_string(const std::string& s) {
    if (s == "euler_maruyama" || s == "em") return SchemeKind::euler_maruyama;
    if (s == "exponential_euler" || s == "exp_euler") return SchemeKind::exponential_euler;
    throw std::invalid_argument("unknown scheme kind '" + s + "' (expected euler_maruyama or exponential_euler)");
}

void check_scheme(const ModelSpec& model, const StepScheme& scheme) {
    if (!(scheme.dt > 0.0) || !std::isfinite(scheme.dt)) throw std::invalid_argument("scheme dt must be positive");
    if (scheme.kind == SchemeKind::exponential_euler && !model.has_linear_operator()) {
        throw std::invalid_argument("exponential_euler needs a model with a linear operator; " + model.name +
                                    " has none");
    }
    (void)grid_length(model.r0, scheme.dt);
}

std::size_t step_count(double T, double dt) {
    if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("horizon T must be positive");
    const double ratio = T / dt;
    const double n = std::round(ratio);
    if (std::abs(ratio - n) > 1e-9 * std::max(1.0, ratio)) {
        throw std::invalid_argument("horizon T=" + format_number(T) + " is not a multiple of dt=" + format_number(dt));
    }
    return static_cast<std::size_t>(n);
}

// --------------------------------------------------------------------- Stepper

Stepper::Stepper(const ModelSpec& model, const StepScheme& scheme) : model_(&model), scheme_(scheme) {
    check_scheme(model, scheme);
    if (model.has_linear_operator() && model.linear_rates.size() != model.dim) {
        throw std::invalid_argument(model.name + ": linear operator size does not match dimension");
    }
    const double dt = scheme.dt;
    decay_.resize(model.dim);
    drift_gain_.resize(model.dim);
    noise_gain_.resize(model.dim);
    for (std::size_t i = 0; i < model.dim; ++i) {
        const double lambda = model.has_linear_operator() ? model.linear_rates[i] : 0.0;
        if (scheme.kind == SchemeKind::euler_maruyama || lambda == 0.0) {
            decay_[i] = 1.0 - lambda * dt;
            drift_gain_[i] = dt;
            noise_gain_[i] = 1.0;
        } else {
            decay_[i] = std::exp(-lambda * dt);
            drift_gain_[i] = -std::expm1(-lambda * dt) / lambda;
            noise_gain_[i] = std::sqrt(-std::expm1(-2.0 * lambda * dt) / (2.0 * lambda * dt));
        }
    }
}

void Stepper::combine(std::span<const double> x, std::span<const double> b, std::span<const double> noise,
                      std::span<double> out) const {
    for (std::size_t i = 0; i < decay_.size(); ++i) {
        out[i] = decay_[i] * x[i] + drift_gain_[i] * b[i] + noise_gain_[i] * noise[i];
    }
}

void Stepper::advance(std::span<const double> x, const Segment& seg, const LawFeatures& features, const Matrix& sigma,
                      std::span<const double> dW, std::span<double> out, StepScratch& scratch) const {
    const std::size_t d = model_->dim;
    scratch.drift.resize(d);
    scratch.noise.resize(d);
    model_->drift(seg, features, scratch.drift);
    sigma.apply(dW, scratch.noise);
    combine(x, scratch.drift, scratch.noise, out);
}

namespace {

void check_init(const ModelSpec& model, const Segment& init, const StepScheme& scheme) {
    if (init.dim() != model.dim) {
        throw std::invalid_argument(model.name + ": initial segment has dimension " + std::to_string(init.dim()) +
                                    ", model has " + std::to_string(model.dim));
    }
    if (init.grid_size() != grid_length(model.r0, scheme.dt) ||
        (init.grid_size() > 1 && std::abs(init.dt_grid() - scheme.dt) > 1e-12 * scheme.dt)) {
        throw std::invalid_argument(model.name + ": initial segment grid does not match r0 and dt");
    }
}

void check_stream(const NoiseStream& stream, const StepScheme& scheme) {
    if (std::abs(stream.dt() - scheme.dt) > 1e-12 * scheme.dt) {
        throw std::invalid_argument("noise stream dt differs from the scheme dt");
    }
}

TrajectoryRecord start_record(const Segment& init, double dt, std::size_t n) {
    TrajectoryRecord rec;
    rec.dt = dt;
    rec.initial = init;
    rec.times.reserve(n + 1);
    rec.states.reserve(n + 1);
    rec.times.push_back(0.0);
    rec.states.push_back(init.state(init.grid_size() - 1));
    return rec;
}

}  // namespace

StateVector step(const ModelSpec& model, const Segment& seg, const EmpiricalMeasure& measure,
                 const StateVector& noise_increment, const StepScheme& scheme) {
    if (seg.dim() != model.dim) throw std::invalid_argument(model.name + ": segment dimension mismatch");
    if (noise_increment.dim() != model.noise_dim) throw std::invalid_argument(model.name + ": noise dimension mismatch");
    const Stepper stepper(model, scheme);
    const LawFeatures f = model.law_features(measure);
    const Matrix sigma = model.diffusion(f);
    StateVector out(model.dim);
    StepScratch scratch;
    stepper.advance(seg.current(), seg, f, sigma, noise_increment.span(), out.span(), scratch);
    return out;
}

StateVector step(const ReferenceModel& ref, const Segment& seg, const EmpiricalMeasure& measure,
                 const StateVector& noise_increment, const StepScheme& scheme) {
    return step(ref.model, seg, measure, noise_increment, scheme);
}

// ------------------------------------------------------------ TrajectoryRecord

Segment TrajectoryRecord::segment_at(std::size_t k) const {
    if (k >= states.size()) throw std::out_of_range("TrajectoryRecord: index past the end");
    const std::size_t len = initial.grid_size();
    if (len == 1) return Segment::point(states[k]);
    std::vector<StateVector> vals;
    vals.reserve(len);
    for (std::size_t g = 0; g < len; ++g) {
        // Grid point g sits at step k - (len - 1) + g.
        const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(k + g) - static_cast<std::ptrdiff_t>(len - 1);
        if (j > 0) {
            vals.push_back(states[static_cast<std::size_t>(j)]);
        } else {
            vals.push_back(initial.state(static_cast<std::size_t>(static_cast<std::ptrdiff_t>(len - 1) + j)));
        }
    }
    return Segment::from_values(vals, initial.r0(), initial.dt_grid());
}

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void TrajectoryRecord::write_csv(std::ostream& os) const {
    const std::size_t d = states.empty() ? 0 : states.front().dim();
    os << "t";
    for (std::size_t i = 0; i < d; ++i) os << ",x_" << (i + 1);
    os << '\n';
    for (std::size_t k = 0; k < states.size(); ++k) {
        os << format_number(times[k]);
        for (std::size_t i = 0; i < d; ++i) os << ',' << format_number(states[k][i]);
        os << '\n';
    }
}

void write_series_csv(std::ostream& os, const std::vector<double>& t, const std::vector<double>& v,
                      const std::string& value_name) {
    if (t.size() != v.size()) throw std::invalid_argument("write_series_csv: column lengths differ");
    os << "t," << value_name << '\n';
    for (std::size_t k = 0; k < t.size(); ++k) os << format_number(t[k]) << ',' << format_number(v[k]) << '\n';
}

// ------------------------------------------------------------------ simulation

TrajectoryRecord simulate(const ModelSpec& model, const Segment& init, double T, const StepScheme& scheme,
                          const NoiseStream& stream, const EmpiricalMeasure& measure) {
    const Stepper stepper(model, scheme);
    check_init(model, init, scheme);
    check_stream(stream, scheme);
    const std::size_t n = step_count(T, scheme.dt);
    const LawFeatures f = model.law_features(measure);
    const Matrix sigma = model.diffusion(f);

    TrajectoryRecord rec = start_record(init, scheme.dt, n);
    Segment seg = init;
    StepScratch scratch;
    std::vector<double> dW(model.noise_dim);
    StateVector next(model.dim);
    for (std::size_t s = 0; s < n; ++s) {
        stream.increment(s, dW);
        stepper.advance(seg.current(), seg, f, sigma, dW, next.span(), scratch);
        seg.push(next.span());
        rec.times.push_back(static_cast<double>(s + 1) * scheme.dt);
        rec.states.push_back(next);
    }
    return rec;
}

TrajectoryRecord simulate_reference(const ReferenceModel& ref, const Segment& init, double T,
                                    const StepScheme& scheme, const NoiseStream& stream) {
    return simulate(ref.model, init, T, scheme, stream, ref.frozen_measure);
}

CoupledRun simulate_coupled(const ModelSpec& model, const ReferenceModel& ref, const Segment& init, double T,
                            const StepScheme& scheme, const NoiseStream& stream,
                            std::span<const EmpiricalMeasure> law_flow) {
    const Stepper orig_step(model, scheme);
    const Stepper ref_step(ref.model, scheme);
    check_init(model, init, scheme);
    check_init(ref.model, init, scheme);
    check_stream(stream, scheme);
    if (model.noise_dim != ref.model.noise_dim) throw std::invalid_argument("coupled models need one noise dimension");
    const std::size_t n = step_count(T, scheme.dt);
    if (law_flow.size() != n) {
        throw std::invalid_argument("simulate_coupled: law flow has " + std::to_string(law_flow.size()) +
                                    " measures, expected one per step (" + std::to_string(n) + ")");
    }
    const LawFeatures fbar = ref.model.law_features(ref.frozen_measure);
    const Matrix sigma_bar = ref.model.diffusion(fbar);

    CoupledRun run{start_record(init, scheme.dt, n), start_record(init, scheme.dt, n), {}};
    run.distance.reserve(n + 1);
    run.distance.push_back(0.0);
    Segment x = init;
    Segment xbar = init;
    StepScratch scratch;
    std::vector<double> dW(model.noise_dim);
    StateVector next(model.dim);
    StateVector next_bar(model.dim);
    for (std::size_t s = 0; s < n; ++s) {
        stream.increment(s, dW);
        const LawFeatures f = model.law_features(law_flow[s]);
        orig_step.advance(x.current(), x, f, model.diffusion(f), dW, next.span(), scratch);
        ref_step.advance(xbar.current(), xbar, fbar, sigma_bar, dW, next_bar.span(), scratch);
        x.push(next.span());
        xbar.push(next_bar.span());
        const double t = static_cast<double>(s + 1) * scheme.dt;
        run.original.times.push_back(t);
        run.original.states.push_back(next);
        run.reference.times.push_back(t);
        run.reference.states.push_back(next_bar);
        run.distance.push_back(std::min(1.0, sup_distance(x, xbar)));
    }
    return run;
}

}  // namespace mvlab
