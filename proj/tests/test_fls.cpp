#include "epal/error.hpp"
#include "epal/fls.hpp"

#include <doctest.h>

#include <random>
#include <set>

using namespace epal;
using fls::Qualifier;

namespace {

std::shared_ptr<const fls::LinguisticVariable> variable(std::string name, double lo, double hi) {
    auto v = std::make_shared<fls::LinguisticVariable>();
    v->attribute = name;
    v->display = name + " level";
    v->min = lo;
    v->max = hi;
    return v;
}

fls::Quantifier quantifier(const std::string& name) {
    for (const auto& q : fls::default_quantifiers())
        if (q.name == name) return q;
    throw std::logic_error("no quantifier " + name);
}

fls::Record record(double a, double b, std::string category, double uncertainty = 0.0) {
    fls::Record r;
    r.attributes = {{"a", a}, {"b", b}, {"uncertainty", uncertainty}};
    r.category = std::move(category);
    return r;
}

}  // namespace

TEST_CASE("trapezoid shapes and vertical shoulders") {
    const fls::Trapezoid t{0.2, 0.35, 0.5, 0.65};
    CHECK(t(0.1) == 0.0);
    CHECK(t(0.275) == doctest::Approx(0.5));
    CHECK(t(0.4) == 1.0);
    CHECK(t(0.575) == doctest::Approx(0.5));
    CHECK(t(0.7) == 0.0);
    const fls::Trapezoid shoulder{0.5, 0.65, 1.0, 1.0};
    CHECK(shoulder(1.0) == 1.0);
    const fls::Trapezoid left{0.0, 0.0, 0.1, 0.2};
    CHECK(left(0.0) == 1.0);
}

TEST_CASE("terms form a Ruspini partition with peaks at quarter points") {
    const auto v = variable("s", 1000.0, 8000.0);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(1000.0, 8000.0);
    for (int i = 0; i < 10000; ++i) {
        const double x = u(rng);
        double sum = 0.0;
        for (std::size_t k = 0; k < 5; ++k) sum += v->membership(k, x);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
    for (std::size_t k = 0; k < 5; ++k) CHECK(v->membership(k, 1000.0 + 1750.0 * static_cast<double>(k)) == 1.0);
    CHECK(fls::term_membership(*v, "medium", 4500.0) == 1.0);
    CHECK(fls::term_membership(*v, "medium", 20000.0) == 0.0);  // clamped to very large
    CHECK_THROWS_AS(fls::term_membership(*v, "enormous", 4500.0), InvalidArgument);
}

TEST_CASE("quantifiers cover proportions above zero") {
    for (double p = 0.001; p <= 1.0; p += 0.001) {
        double best = 0.0;
        for (const auto& q : fls::default_quantifiers()) best = std::max(best, q.membership(p));
        CHECK(best > 0.0);
    }
}

TEST_CASE("truth degree by hand") {
    const auto a = variable("a", 0.0, 1.0);
    std::vector<fls::Record> data{record(0.0, 0.0, "pareto_optimal"), record(0.0, 1.0, "discarded"),
                                  record(0.125, 0.5, "pareto_optimal"), record(1.0, 0.5, "discarded")};
    fls::LinguisticStatement s;
    s.quantifier = quantifier("some");
    s.summarizer = {{a, 0}};  // very small a
    s.qualifier = Qualifier::crisp("pareto_optimal", "pareto optimal");
    // mu_P = 1, 1, 0.5, 0; mu_R = 1, 0, 1, 0; sum min = 1.5; D = 2.5; p = 0.6 -> some(0.6) = 1/3.
    CHECK(fls::truth(s, data) == doctest::Approx((0.65 - 0.6) / 0.15));

    s.qualifier = Qualifier::none();  // D = N, mu_R = 1: p = 2.5 / 4
    CHECK(fls::truth(s, data) == doctest::Approx((0.65 - 0.625) / 0.15));

    s.summarizer.clear();
    s.qualifier = Qualifier::crisp("pareto_optimal", "pareto optimal");  // D = N, mu_P = 1: p = 0.5
    CHECK(fls::truth(s, data) == doctest::Approx(1.0));

    s.summarizer = {{a, 2}};  // medium a: no support anywhere
    CHECK(fls::truth(s, data) == 0.0);
    CHECK(fls::truth(s, {}) == 0.0);
}

TEST_CASE("population option restricts the records") {
    const auto a = variable("a", 0.0, 1.0);
    std::vector<fls::Record> data{record(0.0, 0.0, "pareto_optimal"), record(1.0, 0.0, "discarded"),
                                  record(1.0, 0.0, "discarded")};
    fls::LinguisticStatement s;
    s.quantifier = quantifier("many");
    s.summarizer = {{a, 4}};
    s.qualifier = Qualifier::none();
    CHECK(fls::truth(s, data) == doctest::Approx(1.0));
    CHECK(fls::truth(s, data, {.population = "pareto_optimal"}) == 0.0);
    CHECK(fls::truth(s, data, {.population = "missing"}) == 0.0);
}

TEST_CASE("enumeration counts and uniqueness") {
    const std::vector vars{variable("a", 0, 1), variable("b", 0, 1), variable("c", 0, 1)};
    const auto qualifiers = fls::default_qualifiers();
    const auto all = fls::enumerate_statements(vars, fls::default_quantifiers(), qualifiers, 2);
    CHECK(all.size() == (1 + 3 * 5 + 3 * 25) * 3 * qualifiers.size());
    std::set<std::string> keys;
    for (const auto& s : all) {
        keys.insert(s.quantifier.name + "|" + s.qualifier.name + "|" + s.summarizer_key());
        std::set<std::string> attrs;
        for (const auto& p : s.summarizer) attrs.insert(p.attribute());
        CHECK(attrs.size() == s.summarizer.size());
    }
    CHECK(keys.size() == all.size());
    CHECK(all.front().summarizer.empty());
    CHECK_THROWS_AS(fls::enumerate_statements(vars, fls::default_quantifiers(), qualifiers, 4), InvalidArgument);
}

TEST_CASE("batch evaluation agrees with single-statement truth") {
    const std::vector vars{variable("a", 0, 1), variable("b", 0, 1)};
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<fls::Record> data;
    const char* cats[] = {"pareto_optimal", "discarded", "undecided"};
    for (int i = 0; i < 60; ++i) data.push_back(record(u(rng), u(rng), cats[i % 3], u(rng)));
    auto qualifiers = fls::default_qualifiers();
    qualifiers.push_back(Qualifier::none());
    auto all = fls::enumerate_statements(vars, fls::default_quantifiers(), qualifiers, 2);
    fls::evaluate_all(all, data);
    for (const auto& s : all) CHECK(*s.truth == doctest::Approx(fls::truth(s, data)).epsilon(1e-12));
}

TEST_CASE("simplify keeps general statements and drops their specializations") {
    const auto a = variable("a", 0, 1);
    const auto b = variable("b", 0, 1);
    auto make = [&](std::vector<fls::Predicate> summ, double truth, std::string q = "few") {
        fls::LinguisticStatement s;
        s.quantifier = quantifier(q);
        s.summarizer = std::move(summ);
        s.qualifier = Qualifier::crisp("pareto_optimal", "pareto optimal");
        s.truth = truth;
        return s;
    };
    const std::vector<fls::LinguisticStatement> input{
        make({{a, 0}}, 0.97),
        make({{a, 0}, {b, 1}}, 1.0),   // specializes the first: dropped
        make({{a, 1}, {b, 1}}, 0.99),  // no surviving ancestor: kept
        make({{a, 1}}, 0.5),           // below threshold
        make({{a, 0}, {b, 2}}, 1.0, "some"),  // different quantifier: kept
    };
    const auto out = fls::simplify(input, 0.95);
    REQUIRE(out.size() == 3);
    CHECK(out[0].summarizer_key() == "a=very small");
    CHECK(out[1].summarizer_key() == "a=very small;b=medium");
    CHECK(out[2].summarizer_key() == "a=small;b=small");
    CHECK(fls::simplify(out, 0.95).size() == out.size());
}

TEST_CASE("sentences and headings follow the report template") {
    const auto a = variable("pvp360", 0, 1);
    fls::LinguisticStatement s;
    s.quantifier = quantifier("some");
    s.summarizer = {{a, 4}};
    s.qualifier = Qualifier::crisp("pareto_optimal", "pareto optimal");
    CHECK(fls::render_sentence(s) == "Of the design points from very large pvp360 level, some are pareto optimal points.");
    s.summarizer.clear();
    CHECK(fls::render_sentence(s) == "Of all design points, some are pareto optimal points.");
    CHECK(fls::render_heading(s.quantifier, s.qualifier) == "Some Pareto Optimal Points");
}

TEST_CASE("report groups by qualifier then quantifier and handles the empty case") {
    const auto a = variable("a", 0, 1);
    std::vector<fls::LinguisticStatement> st(2);
    st[0].quantifier = quantifier("many");
    st[0].qualifier = Qualifier::crisp("discarded", "discarded");
    st[0].qualifier.rank = 1;
    st[0].truth = 1.0;
    st[1].quantifier = quantifier("few");
    st[1].qualifier = Qualifier::crisp("pareto_optimal", "pareto optimal");
    st[1].summarizer = {{a, 0}};
    st[1].truth = 0.96;
    const auto r = fls::render_report(st, {});
    const auto few = r.markdown.find("- **Few Pareto Optimal Points:**");
    const auto many = r.markdown.find("- **Many Discarded Points:**");
    REQUIRE(few != std::string::npos);
    REQUIRE(many != std::string::npos);
    CHECK(few < many);
    CHECK(r.markdown.find("(truth 0.960000)") != std::string::npos);
    CHECK(std::count(r.records_jsonl.begin(), r.records_jsonl.end(), '\n') == 2);
    CHECK(r.prompt.find("Few Pareto Optimal Points:") != std::string::npos);

    const auto empty = fls::render_report({}, {});
    CHECK(empty.markdown.find(fls::kEmptyReportSentinel) != std::string::npos);
    CHECK(empty.records_jsonl.empty());
}
