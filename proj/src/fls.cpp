#include "epal/fls.hpp"

#include "epal/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_map>

namespace epal::fls {

double Trapezoid::operator()(double x) const {
    if (x < a || x > d) return 0.0;
    if (x >= b && x <= c) return 1.0;
    if (x < b) return (b > a) ? (x - a) / (b - a) : 1.0;
    return (d > c) ? (d - x) / (d - c) : 1.0;
}

std::size_t LinguisticVariable::term_index(std::string_view term) const {
    const auto it = std::find(terms.begin(), terms.end(), term);
    if (it == terms.end()) {
        throw InvalidArgument("unknown term '" + std::string(term) + "' for attribute " + attribute);
    }
    return static_cast<std::size_t>(it - terms.begin());
}

double LinguisticVariable::membership(std::size_t term, double x) const {
    if (term >= terms.size()) throw InvalidArgument("term index out of range for attribute " + attribute);
    if (terms.size() == 1) return 1.0;
    const double width = max - min;
    if (!(width > 0.0)) return term == 0 ? 1.0 : 0.0;
    const double spacing = width / static_cast<double>(terms.size() - 1);
    // Position in units of term spacing; adjacent triangles then share each unit interval.
    const double pos = (std::clamp(x, min, max) - min) / spacing;
    return std::max(0.0, 1.0 - std::abs(pos - static_cast<double>(term)));
}

double term_membership(const LinguisticVariable& variable, std::string_view term, double x) {
    return variable.membership(variable.term_index(term), x);
}

std::vector<Quantifier> default_quantifiers() {
    return {
        {"few", {0.0, 0.05, 0.20, 0.35}, 0},
        {"some", {0.20, 0.35, 0.50, 0.65}, 1},
        {"many", {0.50, 0.65, 1.0, 1.0}, 2},
    };
}

Qualifier Qualifier::none() { return Qualifier{}; }

Qualifier Qualifier::crisp(std::string category, std::string phrase) {
    Qualifier q;
    q.kind = Kind::Crisp;
    q.name = std::move(category);
    q.phrase = std::move(phrase);
    return q;
}

Qualifier Qualifier::fuzzy(std::string name, std::string phrase, std::string attribute, Trapezoid shape) {
    Qualifier q;
    q.kind = Kind::Fuzzy;
    q.name = std::move(name);
    q.phrase = std::move(phrase);
    q.attribute = std::move(attribute);
    q.shape = shape;
    return q;
}

double Qualifier::membership(const Record& record) const {
    switch (kind) {
        case Kind::None: return 1.0;
        case Kind::Crisp: return record.category == name ? 1.0 : 0.0;
        case Kind::Fuzzy: {
            const auto it = record.attributes.find(attribute);
            if (it == record.attributes.end()) throw InvalidArgument("record lacks qualifier attribute " + attribute);
            return std::clamp(shape(it->second), 0.0, 1.0);
        }
    }
    return 0.0;
}

std::vector<Qualifier> default_qualifiers() {
    std::vector<Qualifier> out{
        Qualifier::crisp("pareto_optimal", "pareto optimal"),
        Qualifier::crisp("discarded", "discarded"),
        Qualifier::crisp("undecided", "undecided"),
        Qualifier::fuzzy("high_uncertainty", "high uncertainty", "uncertainty", {0.5, 0.75, 1.0, 1.0}),
    };
    for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = i;
    return out;
}

std::string LinguisticStatement::summarizer_key() const {
    std::string key;
    for (const auto& p : summarizer) {
        if (!key.empty()) key += ';';
        key += p.attribute();
        key += '=';
        key += p.term_name();
    }
    return key;
}

double summarizer_membership(const LinguisticStatement& statement, const Record& record) {
    double mu = 1.0;
    for (const auto& p : statement.summarizer) {
        const auto it = record.attributes.find(p.attribute());
        if (it == record.attributes.end()) throw InvalidArgument("record lacks summarizer attribute " + p.attribute());
        mu = std::min(mu, p.variable->membership(p.term, it->second));
    }
    return mu;
}

namespace {

bool in_population(const Record& r, const TruthOptions& options) {
    return !options.population || r.category == *options.population;
}

// Proportion fed to the quantifier, or nullopt when the denominator vanishes.
std::optional<double> proportion(double numerator, double support, std::size_t population, bool has_summarizer,
                                 bool has_qualifier) {
    const double denom = (has_summarizer && has_qualifier) ? support : static_cast<double>(population);
    if (!(denom > 0.0)) return std::nullopt;
    return std::clamp(numerator / denom, 0.0, 1.0);
}

}  // namespace

double truth(const LinguisticStatement& statement, const std::vector<Record>& dataset, const TruthOptions& options) {
    double numerator = 0.0;
    double support = 0.0;
    std::size_t population = 0;
    for (const auto& r : dataset) {
        if (!in_population(r, options)) continue;
        ++population;
        const double mu_p = summarizer_membership(statement, r);
        const double mu_r = statement.qualifier.membership(r);
        numerator += std::min(mu_r, mu_p);
        support += mu_p;
    }
    if (population == 0) return 0.0;
    const auto p = proportion(numerator, support, population, !statement.summarizer.empty(),
                              statement.qualifier.kind != Qualifier::Kind::None);
    return p ? std::clamp(statement.quantifier.membership(*p), 0.0, 1.0) : 0.0;
}

std::vector<LinguisticStatement> enumerate_statements(const std::vector<std::shared_ptr<const LinguisticVariable>>& variables,
                                                      const std::vector<Quantifier>& quantifiers,
                                                      const std::vector<Qualifier>& qualifiers,
                                                      std::size_t max_summarizer_size) {
    if (max_summarizer_size > variables.size()) {
        throw InvalidArgument("max summarizer size exceeds the number of variables");
    }
    std::vector<std::vector<Predicate>> summarizers;
    std::vector<Predicate> current;
    // Attributes are chosen in increasing variable order, so no attribute repeats.
    auto extend = [&](auto&& self, std::size_t next, std::size_t remaining) -> void {
        summarizers.push_back(current);
        if (remaining == 0) return;
        for (std::size_t v = next; v < variables.size(); ++v) {
            for (std::size_t t = 0; t < variables[v]->terms.size(); ++t) {
                current.push_back({variables[v], t});
                self(self, v + 1, remaining - 1);
                current.pop_back();
            }
        }
    };
    extend(extend, 0, max_summarizer_size);
    std::stable_sort(summarizers.begin(), summarizers.end(),
                     [](const auto& a, const auto& b) { return a.size() < b.size(); });

    std::vector<LinguisticStatement> out;
    out.reserve(summarizers.size() * quantifiers.size() * qualifiers.size());
    for (const auto& s : summarizers) {
        for (const auto& r : qualifiers) {
            for (const auto& q : quantifiers) out.push_back({q, s, r, std::nullopt});
        }
    }
    return out;
}

void evaluate_all(std::vector<LinguisticStatement>& statements, const std::vector<Record>& dataset,
                  const TruthOptions& options) {
    std::vector<const Record*> population;
    for (const auto& r : dataset) {
        if (in_population(r, options)) population.push_back(&r);
    }
    const std::size_t n = population.size();

    std::unordered_map<std::string, std::vector<double>> term_columns;
    auto column = [&](const Predicate& p) -> const std::vector<double>& {
        const std::string key = p.attribute() + '=' + p.term_name();
        auto it = term_columns.find(key);
        if (it != term_columns.end()) return it->second;
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto found = population[i]->attributes.find(p.attribute());
            if (found == population[i]->attributes.end()) {
                throw InvalidArgument("record lacks summarizer attribute " + p.attribute());
            }
            col[i] = p.variable->membership(p.term, found->second);
        }
        return term_columns.emplace(key, std::move(col)).first->second;
    };

    std::unordered_map<std::string, std::vector<double>> qualifier_columns;
    auto qualifier_column = [&](const Qualifier& q) -> const std::vector<double>& {
        auto it = qualifier_columns.find(q.name);
        if (it != qualifier_columns.end()) return it->second;
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i) col[i] = q.membership(*population[i]);
        return qualifier_columns.emplace(q.name, std::move(col)).first->second;
    };

    std::unordered_map<std::string, std::optional<double>> proportions;
    std::vector<double> mu_p(n);
    for (auto& s : statements) {
        if (n == 0) {
            s.truth = 0.0;
            continue;
        }
        const bool has_qualifier = s.qualifier.kind != Qualifier::Kind::None;
        const std::string key = s.summarizer_key() + '|' + (has_qualifier ? s.qualifier.name : std::string());
        auto it = proportions.find(key);
        if (it == proportions.end()) {
            std::fill(mu_p.begin(), mu_p.end(), 1.0);
            for (const auto& p : s.summarizer) {
                const auto& col = column(p);
                for (std::size_t i = 0; i < n; ++i) mu_p[i] = std::min(mu_p[i], col[i]);
            }
            double numerator = 0.0;
            double support = 0.0;
            if (has_qualifier) {
                const auto& r = qualifier_column(s.qualifier);
                for (std::size_t i = 0; i < n; ++i) {
                    numerator += std::min(r[i], mu_p[i]);
                    support += mu_p[i];
                }
            } else {
                for (std::size_t i = 0; i < n; ++i) support += mu_p[i];
                numerator = support;
            }
            it = proportions.emplace(key, proportion(numerator, support, n, !s.summarizer.empty(), has_qualifier)).first;
        }
        s.truth = it->second ? std::clamp(s.quantifier.membership(*it->second), 0.0, 1.0) : 0.0;
    }
}

std::vector<LinguisticStatement> simplify(const std::vector<LinguisticStatement>& statements, double threshold) {
    std::vector<const LinguisticStatement*> survivors;
    for (const auto& s : statements) {
        if (s.truth && *s.truth >= threshold) survivors.push_back(&s);
    }

    // Survivor summarizers per (quantifier, qualifier), keyed by sorted attribute=term sets.
    auto group_key = [](const LinguisticStatement& s) { return s.quantifier.name + '|' + s.qualifier.name; };
    auto pair_set = [](const LinguisticStatement& s) {
        std::vector<std::string> pairs;
        for (const auto& p : s.summarizer) pairs.push_back(p.attribute() + '=' + p.term_name());
        std::sort(pairs.begin(), pairs.end());
        return pairs;
    };
    auto join = [](const std::vector<std::string>& parts) {
        std::string out;
        for (const auto& p : parts) {
            out += p;
            out += ';';
        }
        return out;
    };
    std::map<std::string, std::set<std::string>> present;
    for (const auto* s : survivors) present[group_key(*s)].insert(join(pair_set(*s)));

    std::vector<LinguisticStatement> kept;
    for (const auto* s : survivors) {
        const auto pairs = pair_set(*s);
        const auto& group = present[group_key(*s)];
        bool redundant = false;
        // Every strict subset of the summarizer is a DAG ancestor.
        const std::size_t k = pairs.size();
        for (std::size_t mask = 0; mask + 1 < (std::size_t{1} << k) && !redundant; ++mask) {
            std::vector<std::string> subset;
            for (std::size_t b = 0; b < k; ++b) {
                if (mask & (std::size_t{1} << b)) subset.push_back(pairs[b]);
            }
            redundant = group.count(join(subset)) > 0;
        }
        if (!redundant) kept.push_back(*s);
    }
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.summarizer.size() != b.summarizer.size()) return a.summarizer.size() < b.summarizer.size();
        return *a.truth > *b.truth;
    });
    return kept;
}

namespace {

std::string title_case(std::string_view text) {
    std::string out(text);
    bool start = true;
    for (char& c : out) {
        if (start && std::isalpha(static_cast<unsigned char>(c))) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        start = c == ' ';
    }
    return out;
}

std::string summarizer_phrase(const LinguisticStatement& s) {
    std::string out;
    for (const auto& p : s.summarizer) {
        if (!out.empty()) out += ", ";
        out += p.term_name() + ' ' + p.variable->display;
    }
    return out;
}

std::string format_truth(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", t);
    return buf;
}

}  // namespace

std::string render_sentence(const LinguisticStatement& s) {
    const std::string& q = s.quantifier.name;
    if (s.qualifier.kind == Qualifier::Kind::None) {
        if (s.summarizer.empty()) return title_case(q) + " design points exist.";
        return title_case(q) + " design points are from " + summarizer_phrase(s) + '.';
    }
    const std::string tail = q + " are " + s.qualifier.phrase + " points.";
    if (s.summarizer.empty()) return "Of all design points, " + tail;
    return "Of the design points from " + summarizer_phrase(s) + ", " + tail;
}

std::string render_heading(const Quantifier& quantifier, const Qualifier& qualifier) {
    const std::string subject = qualifier.kind == Qualifier::Kind::None ? "Design" : title_case(qualifier.phrase);
    return title_case(quantifier.name) + ' ' + subject + " Points";
}

Report render_report(const std::vector<LinguisticStatement>& statements, const ReportLabels& labels) {
    Report report;
    std::ostringstream md;
    md << "# " << labels.title << "\n\n";
    md << "Iteration " << labels.iteration << ", truth threshold " << format_truth(labels.threshold) << ".\n\n";

    struct Group {
        const Quantifier* quantifier;
        const Qualifier* qualifier;
        std::vector<const LinguisticStatement*> items;
    };
    std::vector<Group> groups;
    for (const auto& s : statements) {
        auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
            return g.quantifier->name == s.quantifier.name && g.qualifier->name == s.qualifier.name &&
                   g.qualifier->kind == s.qualifier.kind;
        });
        if (it == groups.end()) {
            groups.push_back({&s.quantifier, &s.qualifier, {}});
            it = std::prev(groups.end());
        }
        it->items.push_back(&s);
    }
    std::stable_sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) {
        if (a.qualifier->rank != b.qualifier->rank) return a.qualifier->rank < b.qualifier->rank;
        return a.quantifier->rank < b.quantifier->rank;
    });

    std::ostringstream jsonl;
    std::ostringstream prompt;
    prompt << "The following fuzzy linguistic statements describe the current state of a multi-objective\n"
           << "materials optimization campaign (iteration " << labels.iteration << ").\n"
           << "Each statement has a truth value in [0, 1]; only statements with truth >= "
           << format_truth(labels.threshold) << " are listed.\n"
           << "Rewrite them as a short grouped summary with overall insights. Do not invent facts.\n\n";

    if (groups.empty()) {
        md << "- " << kEmptyReportSentinel << "\n";
        prompt << "(" << kEmptyReportSentinel << ")\n";
    }
    for (const auto& g : groups) {
        md << "- **" << render_heading(*g.quantifier, *g.qualifier) << ":**\n";
        prompt << render_heading(*g.quantifier, *g.qualifier) << ":\n";
        for (const auto* s : g.items) {
            const std::string sentence = render_sentence(*s);
            md << "  - " << sentence << " (truth " << format_truth(s->truth.value_or(0.0)) << ")\n";
            prompt << "- " << sentence << " [truth " << format_truth(s->truth.value_or(0.0)) << "]\n";

            nlohmann::ordered_json j;
            j["quantifier"] = s->quantifier.name;
            j["qualifier"] = s->qualifier.kind == Qualifier::Kind::None ? std::string() : s->qualifier.name;
            nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
            for (const auto& p : s->summarizer) pairs.push_back({{"attribute", p.attribute()}, {"term", p.term_name()}});
            j["summarizer"] = pairs;
            j["truth"] = s->truth.value_or(0.0);
            j["sentence"] = sentence;
            jsonl << j.dump() << '\n';
        }
    }
    report.markdown = md.str();
    report.records_jsonl = jsonl.str();
    report.prompt = prompt.str();
    return report;
}

}  // namespace epal::fls
