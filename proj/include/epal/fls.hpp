#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace epal::fls {

/// Trapezoid (a, b, c, d): rises on [a, b], equals 1 on [b, c], falls on [c, d].
/// Degenerate edges (a == b or c == d) are vertical shoulders.
struct Trapezoid {
    double a = 0.0, b = 0.0, c = 0.0, d = 0.0;

    double operator()(double x) const;
    bool operator==(const Trapezoid&) const = default;
};

inline const std::vector<std::string>& default_terms() {
    static const std::vector<std::string> terms{"very small", "small", "medium", "large", "very large"};
    return terms;
}

/// A design attribute partitioned into evenly spaced triangular terms that sum to one
/// everywhere on [min, max] (a Ruspini partition). Term k peaks at min + k * (max - min) / (K - 1).
struct LinguisticVariable {
    std::string attribute;  // record key, e.g. "pvp360"
    std::string display;    // e.g. "pvp360 concentration"
    double min = 0.0;
    double max = 1.0;
    std::vector<std::string> terms = default_terms();

    std::size_t term_index(std::string_view term) const;
    /// Membership of x (clamped to the domain) in term k.
    double membership(std::size_t term, double x) const;
};

/// Throws InvalidArgument for an unknown term.
double term_membership(const LinguisticVariable& variable, std::string_view term, double x);

struct Quantifier {
    std::string name;  // few, some, many
    Trapezoid shape;   // over the proportion in [0, 1]
    std::size_t rank = 0;

    double membership(double proportion) const { return shape(proportion); }
};

/// few = (0, .05, .20, .35), some = (.20, .35, .50, .65), many = (.50, .65, 1, 1).
std::vector<Quantifier> default_quantifiers();

/// One data sample: named numeric attributes plus a crisp category label.
struct Record {
    std::map<std::string, double, std::less<>> attributes;
    std::string category;
};

/// R in "Of the Ys that are P, Q are R". A crisp qualifier matches a record's category;
/// a fuzzy one grades a numeric attribute; `none` marks a statement without qualifier.
struct Qualifier {
    enum class Kind { None, Crisp, Fuzzy };

    Kind kind = Kind::None;
    std::string name;       // category label, or predicate id such as "high_uncertainty"
    std::string phrase;     // rendered text, e.g. "pareto optimal"
    std::string attribute;  // fuzzy only
    Trapezoid shape;        // fuzzy only
    std::size_t rank = 0;

    static Qualifier none();
    static Qualifier crisp(std::string category, std::string phrase);
    static Qualifier fuzzy(std::string name, std::string phrase, std::string attribute, Trapezoid shape);

    double membership(const Record& record) const;
};

/// Pareto optimal, discarded, undecided (crisp) and high uncertainty (fuzzy, over the
/// "uncertainty" attribute normalized to [0, 1]).
std::vector<Qualifier> default_qualifiers();

struct Predicate {
    std::shared_ptr<const LinguisticVariable> variable;
    std::size_t term = 0;

    const std::string& attribute() const { return variable->attribute; }
    const std::string& term_name() const { return variable->terms[term]; }
};

struct LinguisticStatement {
    Quantifier quantifier;
    std::vector<Predicate> summarizer;  // at most one predicate per attribute
    Qualifier qualifier;
    std::optional<double> truth;

    /// Stable textual key of the summarizer, e.g. "pvp10=small;dilution=medium".
    std::string summarizer_key() const;
};

/// Min t-norm over the summarizer's term memberships; 1 for an empty summarizer.
/// Throws InvalidArgument when the record lacks a summarizer attribute.
double summarizer_membership(const LinguisticStatement& statement, const Record& record);

struct TruthOptions {
    /// When set, only records of this category form the population (N counts that category).
    std::optional<std::string> population;
};

/// T = mu_Q( sum_n min(mu_R, mu_P) / D ), D = sum_n mu_P with both summarizer and qualifier,
/// otherwise D = N. An empty population or D = 0 yields 0.
double truth(const LinguisticStatement& statement, const std::vector<Record>& dataset, const TruthOptions& options = {});

/// Every summarizer of size 0..max_summarizer_size (one term per attribute, attributes in
/// variable order), crossed with each qualifier and then each quantifier.
std::vector<LinguisticStatement> enumerate_statements(const std::vector<std::shared_ptr<const LinguisticVariable>>& variables,
                                                      const std::vector<Quantifier>& quantifiers,
                                                      const std::vector<Qualifier>& qualifiers,
                                                      std::size_t max_summarizer_size);

/// Fills in truth for every statement. Proportions are shared across quantifiers.
void evaluate_all(std::vector<LinguisticStatement>& statements, const std::vector<Record>& dataset,
                  const TruthOptions& options = {});

/// Drops statements below `threshold`, then removes every survivor that specializes another
/// survivor (strict superset summarizer) with the same quantifier and qualifier.
/// Output: ascending summarizer size, then descending truth.
std::vector<LinguisticStatement> simplify(const std::vector<LinguisticStatement>& statements, double threshold);

std::string render_sentence(const LinguisticStatement& statement);
/// Group heading such as "Few Pareto Optimal Points".
std::string render_heading(const Quantifier& quantifier, const Qualifier& qualifier);

struct ReportLabels {
    std::string title = "Fuzzy linguistic summary";
    std::size_t iteration = 0;
    double threshold = 0.95;
};

struct Report {
    std::string markdown;
    std::string records_jsonl;
    std::string prompt;
};

inline constexpr std::string_view kEmptyReportSentinel = "no statements exceeded the threshold";

Report render_report(const std::vector<LinguisticStatement>& statements, const ReportLabels& labels);

}  // namespace epal::fls
