#include "epal/bench.hpp"
#include "epal/campaign.hpp"
#include "epal/error.hpp"
#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <set>

using namespace epal;
using namespace epal::campaign;
using epal::testing::FixedClock;
using epal::testing::small_config;

namespace {

Measurement surrogate_measurement(const CampaignState& s, std::size_t id, std::uint64_t seed = 1) {
    const auto out = bench::surrogate_spincoat(s.points[id], seed);
    return {id, out.hardness, out.inverse_elasticity, "", ""};
}

CampaignState seeded(const FixedClock& clock) {
    auto s = create(small_config(), 5, clock);
    for (std::size_t id : std::vector<std::size_t>(s.suggestions)) ingest(s, surrogate_measurement(s, id), clock);
    return s;
}

}  // namespace

TEST_CASE("create lays out the grid and seeds the first batch") {
    const FixedClock clock;
    const auto s = create(small_config(), 5, clock);
    CHECK(s.points.size() == 110);
    CHECK(s.suggestions.size() == 8);
    CHECK(std::set<std::size_t>(s.suggestions.begin(), s.suggestions.end()).size() == 8);
    REQUIRE(s.log.size() == 1);
    CHECK(s.log[0].kind == "create");
    CHECK(s.pal.counts().undecided == 110);
    CHECK(s.embedding.has_value());
    CHECK(s.embedding->coordinates.rows() == 110);
    CHECK(s == create(small_config(), 5, FixedClock{}));
}

TEST_CASE("ingest round trip, replacement and rejected input") {
    const FixedClock clock;
    auto s = create(small_config(), 5, clock);
    ingest(s, {4, 0.7, 0.2, "", "first"}, clock);
    REQUIRE(s.find_measurement(4) != nullptr);
    CHECK(s.find_measurement(4)->hardness == 0.7);
    CHECK(s.find_measurement(4)->note == "first");
    CHECK_FALSE(s.find_measurement(4)->timestamp.empty());
    CHECK(s.pal.classes[4].sampled);

    const auto log_size = s.log.size();
    ingest(s, {4, 0.8, 0.25, "", "rerun"}, clock);
    CHECK(s.measurements.size() == 1);
    CHECK(s.find_measurement(4)->hardness == 0.8);
    CHECK(s.log.size() == log_size + 1);
    CHECK(s.log.back().kind == "remeasure");

    const auto before = save(s);
    CHECK_THROWS_AS(ingest(s, {99999, 0.5, 0.2, "", ""}, clock), NotFoundError);
    CHECK_THROWS_AS(ingest(s, {5, std::nan(""), 0.2, "", ""}, clock), InvalidArgument);
    CHECK_THROWS_AS(ingest(s, {5, 0.5, -0.2, "", ""}, clock), InvalidArgument);
    CHECK(save(s) == before);
}

TEST_CASE("csv import validates the whole file before storing anything") {
    const FixedClock clock;
    auto s = create(small_config(), 5, clock);
    const std::string header(kCsvHeader);
    CHECK(import_csv(s, header + "\n1,0.5,0.2,ok\n2,0.6,0.25,\n", clock) == 2);
    CHECK(s.measurements.size() == 2);

    const auto before = save(s);
    CHECK_THROWS_AS(import_csv(s, header + "\n3,0.5,0.2,\n99999,0.5,0.2,\n", clock), NotFoundError);
    CHECK_THROWS_AS(import_csv(s, header + "\n3,0.5,0.2,\n4,abc,0.2,\n", clock), ParseError);
    CHECK_THROWS_AS(import_csv(s, "id,h\n3,0.5\n", clock), ParseError);
    CHECK_THROWS_AS(import_csv(s, header + "\n3,0.5,0,\n", clock), InvalidArgument);
    CHECK(save(s) == before);
}

TEST_CASE("operator overrides replace a suggestion and are logged") {
    const FixedClock clock;
    auto s = create(small_config(), 5, clock);
    const auto first = s.suggestions.front();
    std::size_t chosen = 0;
    while (std::find(s.suggestions.begin(), s.suggestions.end(), chosen) != s.suggestions.end()) ++chosen;
    override_suggestion(s, chosen, std::nullopt, clock);
    CHECK(s.suggestions.front() == chosen);
    CHECK(std::find(s.suggestions.begin(), s.suggestions.end(), first) == s.suggestions.end());
    CHECK(s.log.back().kind == "override");
    CHECK(s.log.back().points.front() == chosen);

    CHECK_THROWS_AS(override_suggestion(s, 99999, std::nullopt, clock), NotFoundError);
    CHECK_THROWS_AS(override_suggestion(s, chosen, std::nullopt, clock), InvalidArgument);
    ingest(s, {chosen, 0.5, 0.2, "", ""}, clock);
    CHECK_THROWS_AS(override_suggestion(s, chosen, std::nullopt, clock), InvalidArgument);
}

TEST_CASE("step advances one iteration and is deterministic without new data") {
    const FixedClock clock;
    auto s = seeded(clock);
    auto empty = create(small_config(), 5, clock);
    CHECK_THROWS_AS(step(empty, clock), InvalidArgument);

    const auto a = step(s, clock);
    CHECK(a.iteration == 1);
    CHECK(s.pal.iteration == 1);
    CHECK(s.log.back().kind == "step");
    CHECK_FALSE(s.report_digest.empty());
    CHECK(s.report_digest == hex64(fnv1a(a.report.markdown)));
    CHECK_FALSE(a.embedding_refreshed);
    const auto s1 = s;

    step(s, clock);
    CHECK(s.pal.iteration == 2);
    CHECK(s.pal.classes == s1.pal.classes);
    auto again = s1;
    step(again, clock);
    CHECK(again.predictions == s.predictions);
    CHECK(again.pal == s.pal);
}

TEST_CASE("suggestions are distinct, deterministic and start with select_next") {
    const FixedClock clock;
    auto s = seeded(clock);
    step(s, clock);
    const auto three = suggest_batch(s, 3);
    CHECK(three.ids.size() == 3);
    CHECK(std::set<std::size_t>(three.ids.begin(), three.ids.end()).size() == 3);
    CHECK(three.ids == suggest_batch(load(save(s)), 3).ids);
    auto fresh = s;
    fresh.suggestions.clear();
    const auto one = suggest_batch(fresh, 1);
    REQUIRE(one.ids.size() == 1);
    CHECK(one.ids.front() == *pal::select_next(fresh.pal).index);
}

TEST_CASE("a dominating measurement is classified pareto optimal") {
    // Tight confidence: every point is measured on a smooth trend, and the last one ingested
    // (the pvp10 vertex at the top speed) beats all others in both objectives.
    const FixedClock clock;
    auto config = small_config();
    config.pal.max_evaluations = 200;
    auto s = create(config, 5, clock);
    auto value = [](const DesignPoint& p) { return 1.0 + p.c_pvp10 + 0.1 * (p.spin_speed - 2000.0) / 6000.0; };
    std::size_t target = 0;
    for (const auto& p : s.points)
        if (value(p) > value(s.points[target])) target = p.id;
    for (const auto& p : s.points)
        if (p.id != target) ingest(s, {p.id, value(p), 0.5 * value(p), "", ""}, clock);
    step(s, clock);
    const auto& t = s.points[target];
    ingest(s, {target, value(t), 0.5 * value(t), "", "constructed"}, clock);
    step(s, clock);

    // Oracle: the target's pessimistic corner beats every other optimistic corner.
    const auto& r = s.pal.regions;
    bool beats_all = true;
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (i == target) continue;
        for (std::size_t j = 0; j < 2; ++j) beats_all = beats_all && r[target].low[j] > r[i].high[j];
    }
    CHECK(beats_all);
    CHECK(s.pal.classes[target].cls == pal::Class::ParetoOptimal);
}

TEST_CASE("region boxes only shrink apart from counted fallbacks") {
    const FixedClock clock;
    auto s = seeded(clock);
    step(s, clock);
    for (int round = 0; round < 4; ++round) {
        const auto before = s.pal;
        for (std::size_t id : std::vector<std::size_t>(s.suggestions)) ingest(s, surrogate_measurement(s, id), clock);
        step(s, clock);
        std::size_t grown = 0;
        for (std::size_t i = 0; i < s.pal.regions.size(); ++i) {
            for (std::size_t j = 0; j < 2; ++j) {
                const double w0 = before.regions[i].high[j] - before.regions[i].low[j];
                const double w1 = s.pal.regions[i].high[j] - s.pal.regions[i].low[j];
                if (w1 > w0 + 1e-12) ++grown;
            }
        }
        CHECK(grown <= s.pal.region_fallbacks - before.region_fallbacks);
    }
}

TEST_CASE("save and load round trip and reject damaged documents") {
    const FixedClock clock;
    auto s = seeded(clock);
    step(s, clock);
    std::size_t chosen = 0;
    while (s.pal.classes[chosen].sampled ||
           std::find(s.suggestions.begin(), s.suggestions.end(), chosen) != s.suggestions.end())
        ++chosen;
    override_suggestion(s, chosen, std::nullopt, clock);
    const auto doc = save(s);
    const auto back = load(doc);
    CHECK(back == s);
    CHECK(save(back) == doc);

    CHECK_THROWS_AS(load(doc.substr(0, doc.size() / 2)), ParseError);
    auto j = nlohmann::ordered_json::parse(doc);
    j["format_version"] = kFormatVersion + 1;
    CHECK_THROWS_AS(load(j.dump()), UnsupportedVersionError);
    j = nlohmann::ordered_json::parse(doc);
    j.erase("measurements");
    CHECK_THROWS_AS(load(j.dump()), ParseError);
}

TEST_CASE("the log is append-only across saves") {
    const FixedClock clock;
    auto s = seeded(clock);
    auto log_text = [](const CampaignState& st) { return nlohmann::ordered_json::parse(save(st))["log"].dump(); };
    const auto early = log_text(s);
    step(s, clock);
    ingest(s, surrogate_measurement(s, s.suggestions.front()), clock);
    const auto later = log_text(s);
    // Same entries in order: the earlier array minus its closing bracket is a prefix.
    CHECK(later.compare(0, early.size() - 1, early, 0, early.size() - 1) == 0);
}

TEST_CASE("file persistence") {
    const epal::testing::TempDir dir;
    const FixedClock clock;
    const auto s = create(small_config(), 5, clock);
    save_file(s, dir.file("c.json"));
    CHECK(load_file(dir.file("c.json")) == s);
    CHECK_THROWS_AS(load_file(dir.file("missing.json")), NotFoundError);
}

TEST_CASE("surrogate loop converges on the small grid") {
    const FixedClock clock;
    auto s = create(small_config(), 5, clock);
    run_with_surrogate(s, {3, 1.0}, 30, clock);
    CHECK((s.converged() || s.exhausted() || s.budget_left() == 0));
    CHECK(s.evaluations() <= 60);
}
