// grid.hpp — uniform time grid with a recording stride

#pragma once

#include "qcm/errors.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace qcm {

struct TimeGrid {
    double t_max = 1.0;
    double dt = 1e-3;
    long stride = 1;  // record every stride-th step

    TimeGrid() = default;
    TimeGrid(double t_max_, double dt_, long stride_ = 1)
        : t_max(t_max_), dt(dt_), stride(stride_) {
        if (!(t_max > 0.0)) throw ConfigError("grid: t_max must be > 0");
        if (!(dt > 0.0)) throw ConfigError("grid: dt must be > 0");
        if (stride < 1) throw ConfigError("grid: stride must be >= 1");
        const double steps = t_max / dt;
        if (std::abs(steps - std::round(steps)) > 1e-6 * std::max(1.0, steps)) {
            throw ConfigError("grid: t_max/dt = " + std::to_string(steps) +
                              " is not an integer number of steps");
        }
        n_steps_ = std::lround(steps);
    }

    long n_steps() const { return n_steps_; }
    double time_of(long step) const { return static_cast<double>(step) * dt; }

    // Recorded steps: 0, stride, 2*stride, ..., plus the final step.
    std::vector<long> sample_steps() const {
        std::vector<long> s;
        for (long i = 0; i <= n_steps_; i += stride) s.push_back(i);
        if (s.back() != n_steps_) s.push_back(n_steps_);
        return s;
    }

private:
    long n_steps_ = 1000;
};

} // namespace qcm
