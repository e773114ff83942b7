#pragma once

// Hand-rolled generators for the property tests. Everything is seeded so a
// failing case can be replayed from the printed seed.

#include "mvlab/core.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace mvlab::testing {

class Gen {
public:
    explicit Gen(std::uint64_t seed) : eng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
    double normal(double mean = 0.0, double sd = 1.0) { return std::normal_distribution<double>(mean, sd)(eng_); }
    std::size_t index(std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(eng_);
    }
    std::mt19937_64& engine() { return eng_; }

    StateVector point(std::size_t dim, double scale = 1.0) {
        StateVector v(dim);
        for (std::size_t i = 0; i < dim; ++i) v[i] = normal(0.0, scale);
        return v;
    }

    Segment segment(std::size_t dim, double r0, double dt, double scale = 1.0) {
        const std::size_t len = grid_length(r0, dt);
        std::vector<StateVector> vals;
        for (std::size_t k = 0; k < len; ++k) vals.push_back(point(dim, scale));
        return Segment::from_values(vals, r0, dt);
    }

    EmpiricalMeasure uniform_measure(std::size_t n, std::size_t dim, double r0 = 0.0, double dt = 1.0,
                                     double scale = 1.0) {
        std::vector<Segment> atoms;
        for (std::size_t i = 0; i < n; ++i) atoms.push_back(segment(dim, r0, dt, scale));
        return EmpiricalMeasure(std::move(atoms));
    }

    /// Weights k_i / total with small integer k_i, so that an atom-replication
    /// oracle can reproduce the measure exactly.
    EmpiricalMeasure rational_measure(std::size_t n, std::size_t dim, std::vector<int>& counts, double scale = 1.0) {
        counts.assign(n, 0);
        int total = 0;
        for (auto& c : counts) {
            c = static_cast<int>(index(1, 3));
            total += c;
        }
        std::vector<Segment> atoms;
        std::vector<double> w;
        for (std::size_t i = 0; i < n; ++i) {
            atoms.push_back(Segment::point(point(dim, scale)));
            w.push_back(static_cast<double>(counts[i]) / total);
        }
        double s = 0.0;
        for (double x : w) s += x;
        w.back() += 1.0 - s;
        return EmpiricalMeasure(std::move(atoms), std::move(w));
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace mvlab::testing
