#pragma once

#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "wbrake/experiments.hpp"

namespace wbrake {

struct CheckResult {
    std::string id;  // module.property
    bool passed = false;
    std::string detail;
};

struct ValidationOptions {
    bool oracle = false;        // adds the slower brute-force cross-checks
    bool solver_suites = true;  // brake and sweep based properties
    int threads = 1;
    std::ostream* log = nullptr;
};

/// Random admissible measure: rough positive profile on a random
/// sub-interval, projected onto the capped simplex.
GridMeasure random_measure(const Grid1D& grid, double rho, std::mt19937_64& rng);

/// Runs every property suite; never throws for a failing property (the
/// failure is recorded instead).
std::vector<CheckResult> run_validation(const Model& model, const ValidationOptions& opt);

std::string format_table(const std::vector<CheckResult>& results);

}  // namespace wbrake
