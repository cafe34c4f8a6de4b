#pragma once

#include <iosfwd>
#include <string>
#include <vector>

// Seeded oracle suites exercising the numerical contracts: conjugate
// posteriors vs the closed form, the closed-form predictive vs Monte
// Carlo, analytic vs finite-difference gradients, relaxed vs exhaustive
// subset selection, the additive-shift identity and reservoir inclusion
// statistics. Each check reports the measured error against its pinned
// tolerance.

namespace deepccg {

struct CheckResult {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

struct SelftestReport {
    std::string suite;
    std::vector<CheckResult> checks;

    bool all_passed() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

std::vector<CheckResult> selftest_posterior();
std::vector<CheckResult> selftest_predictive();
std::vector<CheckResult> selftest_gradient();
std::vector<CheckResult> selftest_selection();
std::vector<CheckResult> selftest_shift();
std::vector<CheckResult> selftest_reservoir();

/// suite is one of: posterior, predictive, gradient, selection, shift,
/// reservoir, all.
SelftestReport run_selftest(const std::string& suite);

/// One line per check: status, name, measured vs tolerated error.
void print_report(const SelftestReport& report, std::ostream& out);

}  // namespace deepccg
