#include "mvlab/meanfield.hpp"

#include "mvlab/parallel.hpp"
#include "mvlab/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace mvlab {

// --------------------------------------------------------------- samplers

InitSampler constant_init(const Segment& seg) {
    return [seg](std::size_t, const NoiseStream&) { return seg; };
}

InitSampler gaussian_init(const StateVector& mean, double sd, double r0, double dt) {
    if (!(sd >= 0.0)) throw std::invalid_argument("gaussian_init: sd must be >= 0");
    (void)grid_length(r0, dt);
    return [mean, sd, r0, dt](std::size_t, const NoiseStream& draws) {
        StateVector x = mean;
        for (std::size_t i = 0; i < x.dim(); ++i) x[i] += sd * draws.normal(i);
        return Segment(x, r0, dt);
    };
}

InitSampler cycle_init(const EmpiricalMeasure& mu) {
    if (mu.empty()) throw std::invalid_argument("cycle_init: empty measure");
    return [mu](std::size_t i, const NoiseStream&) { return mu.atom(i % mu.size()); };
}

InitSampler resample_init(const EmpiricalMeasure& mu) {
    if (mu.empty()) throw std::invalid_argument("resample_init: empty measure");
    std::vector<double> cdf = mu.weights();
    for (std::size_t i = 1; i < cdf.size(); ++i) cdf[i] += cdf[i - 1];
    return [mu, cdf](std::size_t, const NoiseStream& draws) {
        const double u = draws.uniform(0) * cdf.back();
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), mu.size() - 1);
        return mu.atom(k);
    };
}

// ---------------------------------------------------------------- LawFlow

void LawFlow::push(double t, EmpiricalMeasure mu) {
    if (!times.empty() && !(t > times.back())) throw std::invalid_argument("LawFlow: times must increase");
    times.push_back(t);
    measures.push_back(std::move(mu));
}

bool operator==(const LawFlow& a, const LawFlow& b) {
    if (a.times != b.times || a.measures.size() != b.measures.size()) return false;
    for (std::size_t k = 0; k < a.measures.size(); ++k) {
        const auto& x = a.measures[k];
        const auto& y = b.measures[k];
        if (x.size() != y.size() || x.weights() != y.weights()) return false;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!(x.atom(i) == y.atom(i))) return false;
        }
    }
    return true;
}

void LawFlow::write_csv(std::ostream& os) const {
    const std::size_t d = measures.empty() ? 0 : measures.front().dim();
    os << "t,atom,weight";
    for (std::size_t i = 0; i < d; ++i) os << ",x_" << (i + 1);
    os << '\n';
    for (std::size_t k = 0; k < measures.size(); ++k) {
        const auto& mu = measures[k];
        for (std::size_t a = 0; a < mu.size(); ++a) {
            os << format_number(times[k]) << ',' << a << ',' << format_number(mu.weight(a));
            for (double v : mu.atom(a).current()) os << ',' << format_number(v);
            os << '\n';
        }
    }
}

void write_measure_csv(std::ostream& os, const EmpiricalMeasure& mu) {
    const std::size_t d = mu.dim();
    const std::size_t len = mu.grid_size();
    os << "atom,weight";
    if (len <= 1) {
        for (std::size_t i = 0; i < d; ++i) os << ",x_" << (i + 1);
    } else {
        for (std::size_t k = 0; k < len; ++k) {
            for (std::size_t i = 0; i < d; ++i) os << ",x_" << (i + 1) << "@" << k;
        }
    }
    os << '\n';
    for (std::size_t a = 0; a < mu.size(); ++a) {
        os << a << ',' << format_number(mu.weight(a));
        for (std::size_t k = 0; k < len; ++k) {
            for (double v : mu.atom(a).value(k)) os << ',' << format_number(v);
        }
        os << '\n';
    }
}

// ---------------------------------------------------------------- ensemble

NoiseStream particle_stream(const EnsembleConfig& cfg, std::size_t i, NoiseStream::Domain domain) {
    std::uint64_t id = cfg.stream_ids.empty() ? i : cfg.stream_ids.at(i);
    bool flip = false;
    if (cfg.antithetic) {
        flip = (id & 1u) != 0;
        id >>= 1;
    }
    return NoiseStream(cfg.seed, id, cfg.scheme.dt, domain, flip);
}

std::size_t default_checkpoint_stride(const ModelSpec& model) { return model.r0 > 0.0 ? 1 : 10; }

namespace {

std::vector<Segment> draw_initial(const ModelSpec& model, const InitSampler& init, const EnsembleConfig& cfg) {
    if (!init) throw std::invalid_argument("initial sampler is empty");
    const std::size_t len = grid_length(model.r0, cfg.scheme.dt);
    std::vector<Segment> out;
    out.reserve(cfg.N);
    for (std::size_t i = 0; i < cfg.N; ++i) {
        Segment s = init(i, particle_stream(cfg, i, NoiseStream::Domain::initial));
        if (s.dim() != model.dim || s.grid_size() != len) {
            throw std::invalid_argument(model.name + ": sampled initial segment does not match the model grid");
        }
        out.push_back(std::move(s));
    }
    return out;
}

struct ThreadBuffers {
    StepScratch scratch;
    std::vector<double> dW;
    std::vector<double> next;
};

ThreadBuffers& buffers(std::size_t noise_dim, std::size_t dim) {
    thread_local ThreadBuffers b;
    b.dW.resize(noise_dim);
    b.next.resize(dim);
    return b;
}

}  // namespace

EnsembleRun simulate_mckean_vlasov(const ModelSpec& model, const InitSampler& init, const EnsembleConfig& cfg,
                                   const StepObserver& observer) {
    if (cfg.N < 2) throw std::invalid_argument("simulate_mckean_vlasov: need at least two particles");
    if (!cfg.stream_ids.empty() && cfg.stream_ids.size() != cfg.N) {
        throw std::invalid_argument("simulate_mckean_vlasov: stream_ids must have N entries");
    }
    const Stepper stepper(model, cfg.scheme);
    const std::size_t n = step_count(cfg.T, cfg.scheme.dt);
    const std::size_t stride = cfg.checkpoint_stride == 0 ? default_checkpoint_stride(model) : cfg.checkpoint_stride;
    for (std::size_t i : cfg.tracked) {
        if (i >= cfg.N) throw std::invalid_argument("simulate_mckean_vlasov: tracked index out of range");
    }

    EnsembleRun run;
    run.ensemble.particles = EmpiricalMeasure(draw_initial(model, init, cfg));
    EmpiricalMeasure& mu = run.ensemble.particles;
    std::vector<NoiseStream> streams;
    streams.reserve(cfg.N);
    for (std::size_t i = 0; i < cfg.N; ++i) streams.push_back(particle_stream(cfg, i));

    for (std::size_t i : cfg.tracked) {
        TrajectoryRecord rec;
        rec.dt = cfg.scheme.dt;
        rec.initial = mu.atom(i);
        rec.times.push_back(0.0);
        rec.states.push_back(mu.atom(i).state(mu.atom(i).grid_size() - 1));
        run.tracked.push_back(std::move(rec));
    }
    if (cfg.record_flow) run.flow.push(0.0, mu);
    if (observer) observer(0, 0.0, mu);

    for (std::size_t s = 0; s < n; ++s) {
        const LawFeatures f = model.law_features(mu);
        const Matrix sigma = model.diffusion(f);
        parallel_for(0, cfg.N, [&](std::size_t i) {
            ThreadBuffers& b = buffers(model.noise_dim, model.dim);
            Segment& seg = mu.atom(i);
            streams[i].increment(s, b.dW);
            stepper.advance(seg.current(), seg, f, sigma, b.dW, b.next, b.scratch);
            seg.push(b.next);
        });
        const double t = static_cast<double>(s + 1) * cfg.scheme.dt;
        for (std::size_t k = 0; k < cfg.tracked.size(); ++k) {
            run.tracked[k].times.push_back(t);
            run.tracked[k].states.push_back(mu.atom(cfg.tracked[k]).state(mu.grid_size() - 1));
        }
        if (cfg.record_flow && (s + 1) % stride == 0) run.flow.push(t, mu);
        if (observer) observer(s + 1, t, mu);
    }
    run.ensemble.t = static_cast<double>(n) * cfg.scheme.dt;
    return run;
}

// ------------------------------------------------------------------ Picard

double pick_t0(double K, double p, double C2, double horizon) {
    if (!(K > 0.0) || !std::isfinite(K)) throw std::invalid_argument("pick_t0: Lipschitz bound K must be positive");
    if (!(p > 0.0)) throw std::invalid_argument("pick_t0: p must be positive");
    if (!(C2 > 0.0)) throw std::invalid_argument("pick_t0: C2 must be positive");
    if (!(horizon > 0.0)) throw std::invalid_argument("pick_t0: horizon must be positive");
    const double target = 1.0 / (2.0 * C2);
    // u = K t solves u^p + u = target; u <= target brackets the root.
    const double u = bisect_root([&](double v) { return std::pow(v, p) + v - target; }, 0.0, target);
    return std::min(horizon, u / K);
}

double pick_t0(const ModelSpec& model, double C2, double horizon) {
    const auto K = model.find_param("lipschitz_K");
    if (!K) throw std::invalid_argument(model.name + ": no Lipschitz bound 'lipschitz_K' for pick_t0");
    return pick_t0(*K, model.find_param("p").value_or(2.0), C2, horizon);
}

PicardResult picard_solve(const ModelSpec& model, const EmpiricalMeasure& init_law, double t0,
                          const PicardConfig& cfg) {
    if (cfg.n_iter < 2) throw std::invalid_argument("picard_solve: n_iter must be >= 2");
    if (cfg.N < 1) throw std::invalid_argument("picard_solve: N must be >= 1");
    if (init_law.empty()) throw std::invalid_argument("picard_solve: empty initial law");
    const Stepper stepper(model, cfg.scheme);
    const double dt = cfg.scheme.dt;
    if (!(t0 > 0.0)) throw std::invalid_argument("picard_solve: t0 must be positive");
    const std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(t0 / dt + 1e-9)));
    const double p = cfg.p > 0.0 ? cfg.p : model.find_param("p").value_or(2.0);

    bool single_point = true;
    for (std::size_t i = 1; i < init_law.size() && single_point; ++i) {
        single_point = init_law.atom(i) == init_law.atom(0);
    }
    if (single_point && model.diffusion(model.law_features(init_law)).is_zero()) {
        throw std::invalid_argument("picard_solve: single-atom initial law with zero diffusion is degenerate");
    }

    EnsembleConfig ens;
    ens.N = cfg.N;
    ens.scheme = cfg.scheme;
    ens.seed = cfg.seed;
    const InitSampler sampler = (init_law.is_uniform() && cfg.N % init_law.size() == 0) ? cycle_init(init_law)
                                                                                         : resample_init(init_law);
    const std::vector<Segment> x0 = draw_initial(model, sampler, ens);
    std::vector<NoiseStream> streams;
    for (std::size_t i = 0; i < cfg.N; ++i) streams.push_back(particle_stream(ens, i));

    PicardResult res;
    res.t0 = static_cast<double>(n) * dt;
    {
        LawFlow flow0;
        EmpiricalMeasure mu(x0);
        flow0.push(0.0, mu);
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t i = 0; i < cfg.N; ++i) {
                Segment& seg = mu.atom(i);
                const StateVector x = seg.state(seg.grid_size() - 1);
                seg.push(x.span());
            }
            flow0.push(static_cast<double>(k + 1) * dt, mu);
        }
        res.flows.push_back(std::move(flow0));
    }

    for (std::size_t it = 1; it <= cfg.n_iter; ++it) {
        const LawFlow& prev = res.flows[it - 1];
        LawFlow flow;
        EmpiricalMeasure mu(x0);
        flow.push(0.0, mu);
        for (std::size_t k = 0; k < n; ++k) {
            const EmpiricalMeasure& frozen = prev.measures[k];
            const LawFeatures f = model.law_features(frozen);
            const Matrix sigma = model.diffusion(f);
            parallel_for(0, cfg.N, [&](std::size_t i) {
                ThreadBuffers& b = buffers(model.noise_dim, model.dim);
                Segment& seg = mu.atom(i);
                streams[i].increment(k, b.dW);
                const Segment& drift_seg =
                    cfg.variant == PicardVariant::frozen_law ? seg : frozen.atom(i);
                stepper.advance(seg.current(), drift_seg, f, sigma, b.dW, b.next, b.scratch);
                seg.push(b.next);
            });
            flow.push(static_cast<double>(k + 1) * dt, mu);
        }
        res.flows.push_back(std::move(flow));

        const LawFlow& a = res.flows[it];
        const LawFlow& b = res.flows[it - 1];
        double d = 0.0;
        const std::size_t stride = std::max<std::size_t>(1, cfg.distance_stride);
        for (std::size_t k = 0; k < a.size(); ++k) {
            if (k % stride != 0 && k + 1 != a.size()) continue;
            d = std::max(d, wasserstein_p(a.measures[k], b.measures[k], p));
        }
        res.distances.push_back(d);
    }

    res.ratios.assign(res.distances.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t k = 1; k < res.distances.size(); ++k) {
        const double num = res.distances[k];
        const double den = res.distances[k - 1];
        res.ratios[k] = den == 0.0 ? (num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity()) : num / den;
    }
    return res;
}

// --------------------------------------------------------------- invariant

InvariantEstimate estimate_invariant(const ModelSpec& model, const InvariantConfig& cfg, const InitSampler& init) {
    InvariantEstimate est;
    const double dt = cfg.scheme.dt;
    const auto rate = model.find_param("contraction_rate");
    if (!rate || !(*rate > 0.0)) {
        est.warnings.push_back(model.name + ": no positive contraction rate; the invariant law may not be unique");
    }
    double burn = cfg.T_burn;
    if (burn < 0.0) {
        if (rate && *rate > 0.0) {
            burn = 5.0 / *rate;
        } else {
            burn = 10.0;
            est.warnings.push_back("burn-in defaulted to 10 time units");
        }
    }
    if (!(cfg.T_sample >= 0.0)) throw std::invalid_argument("estimate_invariant: T_sample must be >= 0");
    const auto burn_steps = static_cast<std::size_t>(std::ceil(burn / dt - 1e-9));
    const auto thin_steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.thin_interval / dt)));
    const auto sample_steps = static_cast<std::size_t>(std::floor(cfg.T_sample / dt + 1e-9));
    const std::size_t total = std::max<std::size_t>(1, burn_steps + sample_steps);
    est.T_burn = static_cast<double>(burn_steps) * dt;

    EnsembleConfig ens;
    ens.N = cfg.N;
    ens.T = static_cast<double>(total) * dt;
    ens.scheme = cfg.scheme;
    ens.seed = cfg.seed;
    ens.record_flow = false;
    ens.antithetic = cfg.antithetic;
    const InitSampler start =
        init ? init : constant_init(Segment(StateVector(model.dim), model.r0, dt));

    std::vector<Segment> pooled;
    (void)simulate_mckean_vlasov(model, start, ens, [&](std::size_t s, double, const EmpiricalMeasure& mu) {
        if (s < burn_steps || (s - burn_steps) % thin_steps != 0) return;
        pooled.insert(pooled.end(), mu.atoms().begin(), mu.atoms().end());
        ++est.snapshots;
    });
    est.measure = EmpiricalMeasure(std::move(pooled));
    return est;
}

// -------------------------------------------------------------- occupation

OccupationMeasure occupation_measure(const std::vector<Segment>& snapshots, const std::vector<double>& times,
                                     double t_lo, double t_hi, std::size_t stride) {
    if (snapshots.size() != times.size()) throw std::invalid_argument("occupation_measure: times and snapshots differ");
    if (!(t_lo < t_hi)) throw std::invalid_argument("occupation_measure: empty window");
    if (stride == 0) throw std::invalid_argument("occupation_measure: stride must be >= 1");
    const double slack = times.size() > 1 ? 1e-9 * (times[1] - times[0]) : 1e-12;
    std::size_t k = 0;
    while (k < times.size() && times[k] < t_lo - slack) ++k;
    OccupationMeasure occ;
    std::vector<Segment> atoms;
    for (; k < times.size() && times[k] < t_hi - slack; k += stride) {
        atoms.push_back(snapshots[k]);
        occ.times.push_back(times[k]);
    }
    if (atoms.empty()) throw std::invalid_argument("occupation_measure: no snapshots in the window");
    occ.base = EmpiricalMeasure(std::move(atoms));
    return occ;
}

OccupationMeasure occupation_measure(const TrajectoryRecord& traj, double t_lo, double t_hi, std::size_t stride) {
    if (!(t_lo < t_hi)) throw std::invalid_argument("occupation_measure: empty window");
    if (stride == 0) throw std::invalid_argument("occupation_measure: stride must be >= 1");
    const double slack = 1e-9 * traj.dt;
    OccupationMeasure occ;
    std::vector<Segment> atoms;
    std::size_t k = 0;
    while (k < traj.size() && traj.times[k] < t_lo - slack) ++k;
    for (; k < traj.size() && traj.times[k] < t_hi - slack; k += stride) {
        atoms.push_back(traj.segment_at(k));
        occ.times.push_back(traj.times[k]);
    }
    if (atoms.empty()) throw std::invalid_argument("occupation_measure: no snapshots in the window");
    occ.base = EmpiricalMeasure(std::move(atoms));
    return occ;
}

}  // namespace mvlab
