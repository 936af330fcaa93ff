// noise.hpp — Portable RNG (xoshiro256++ with splitmix64 seeding) and
// pre-sampled reference-measure noise paths: Wiener increments plus Poisson
// jump times at the constant reference rates.

#pragma once

#include "qcm/grid.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace qcm {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic per-trajectory seed: mixes the master seed, the trajectory
// index, and a stream salt so distinct engines never share a stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t salt = 0) {
    std::uint64_t s = master ^ (0x9e3779b97f4a7c15ULL * (index + 1)) ^ (salt << 32);
    return splitmix64(s);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // uniform in (0, 1]
    double uniform_open() { return 1.0 - uniform(); }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double exponential(double rate) { return -std::log(uniform_open()) / rate; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4] = {};
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Reference-measure (Q) noise realization for one trajectory.
struct NoisePath {
    long n_steps = 0;
    int n_diffusive = 0;
    std::vector<double> dw;                        // n_steps * n_diffusive, step-major
    std::vector<std::vector<double>> jump_times;   // per counting channel, sorted
    std::uint64_t master_seed = 0;
    std::uint64_t index = 0;

    double increment(long step, int channel) const { return dw[step * n_diffusive + channel]; }
};

inline NoisePath sample_noise_path(int n_diffusive, const std::vector<double>& rates,
                                   const TimeGrid& grid, std::uint64_t master_seed,
                                   std::uint64_t index, std::uint64_t salt = 0) {
    NoisePath path;
    path.n_steps = grid.n_steps();
    path.n_diffusive = n_diffusive;
    path.master_seed = master_seed;
    path.index = index;

    Rng rng(derive_seed(master_seed, index, salt));
    const double root_dt = std::sqrt(grid.dt);
    path.dw.resize(static_cast<size_t>(path.n_steps) * n_diffusive);
    for (long s = 0; s < path.n_steps; ++s) {
        for (int j = 0; j < n_diffusive; ++j) {
            path.dw[s * n_diffusive + j] = root_dt * rng.normal();
        }
    }
    path.jump_times.resize(rates.size());
    for (size_t k = 0; k < rates.size(); ++k) {
        double t = rng.exponential(rates[k]);
        while (t < grid.t_max) {
            path.jump_times[k].push_back(t);
            t += rng.exponential(rates[k]);
        }
    }
    return path;
}

// Aggregates a fine path onto a grid coarsened by an integer factor; used for
// strong-convergence measurements against a shared underlying realization.
inline NoisePath coarsen_noise(const NoisePath& fine, int factor) {
    NoisePath out = fine;
    out.n_steps = fine.n_steps / factor;
    out.dw.assign(static_cast<size_t>(out.n_steps) * fine.n_diffusive, 0.0);
    for (long s = 0; s < out.n_steps; ++s) {
        for (int f = 0; f < factor; ++f) {
            for (int j = 0; j < fine.n_diffusive; ++j) {
                out.dw[s * fine.n_diffusive + j] += fine.dw[(s * factor + f) * fine.n_diffusive + j];
            }
        }
    }
    return out;
}

// Physical-measure increments driving the nonlinear engine in coupled runs:
// Girsanov-shifted Wiener increments plus the shared jump times.
struct DrivenNoise {
    long n_steps = 0;
    int n_diffusive = 0;
    std::vector<double> dw;  // n_steps * n_diffusive, step-major
    std::vector<std::vector<double>> jump_times;

    double increment(long step, int channel) const { return dw[step * n_diffusive + channel]; }
};

} // namespace qcm
