#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace epal::acceptance {

struct CriterionResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// 21 x 13 Binh-Korn grid, relative epsilon 0.01, `runs` seeds.
CriterionResult binh_korn(int runs = 20);
/// Prediction against a dense linear solve; likelihood gradient against central differences.
CriterionResult gp_oracle();
/// Zero-width regions with epsilon 0 must reproduce the exact Pareto front.
CriterionResult classification_degeneracy();
/// Truth against direct summation, partition of unity, simplification, report shape.
CriterionResult fls_correctness();
/// Trustworthiness, label agreement and determinism on the default grid.
CriterionResult embedding_quality();
/// Surrogate campaigns: convergence, coverage, lossless save/load and identical resumption.
CriterionResult surrogate_campaign(int seeds = 20);

struct Suite {
    std::string name;
    std::function<CriterionResult()> run;
};

/// Named suites in criterion order: binh-korn, gp, classification, fls, embedding, campaign.
std::vector<Suite> suites();

/// "PASS <name>: <detail>" or "FAIL <name>: <detail>".
std::string format(const CriterionResult& result);

}  // namespace epal::acceptance
