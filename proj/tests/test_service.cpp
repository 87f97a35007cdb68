#include "epal/bench.hpp"
#include "epal/service.hpp"
#include "support.hpp"

#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <future>
#include <thread>

using namespace epal;
using epal::service::CampaignService;
using epal::service::Json;
using epal::testing::read_file;

namespace {

/// Timestamps that can hold the caller inside a step until released.
struct GateClock {
    struct Gate {
        std::atomic<bool> armed{false};
        std::atomic<bool> entered{false};
        std::atomic<bool> released{false};
    };
    std::shared_ptr<Gate> gate = std::make_shared<Gate>();

    std::string operator()() const {
        if (gate->armed.exchange(false)) {
            gate->entered = true;
            while (!gate->released) std::this_thread::yield();
        }
        return "2026-01-01T00:00:00Z";
    }
};

std::string make_campaign(const epal::testing::TempDir& dir) {
    const auto path = dir.file("campaign.json");
    campaign::save_file(campaign::create(epal::testing::small_config(), 2, GateClock{}), path);
    return path;
}

std::string measurement_body(std::size_t id, double h, double e) {
    return Json{{"point_id", id}, {"hardness", h}, {"inverse_elasticity", e}}.dump();
}

void measure_suggestions(CampaignService& svc) {
    const auto s = svc.get_suggestions().body;
    for (const auto& p : s["suggestions"]) {
        const auto id = p["id"].get<std::size_t>();
        const auto out = bench::surrogate_spincoat(campaign::DesignPoint{id, p["c_pvp10"], p["c_pvp40"], p["c_pvp360"],
                                                                         p["spin_speed"], p["dilution"]},
                                                   1);
        REQUIRE(svc.post_measurements(measurement_body(id, out.hardness, out.inverse_elasticity)).status == 200);
    }
}

}  // namespace

TEST_CASE("status of a fresh campaign") {
    const epal::testing::TempDir dir;
    CampaignService svc(make_campaign(dir));
    const auto r = svc.get_status();
    CHECK(r.status == 200);
    CHECK(r.body["converged"] == false);
    CHECK(r.body["sampled"] == 0);
    CHECK(r.body["grid_size"] == 110);
    const auto& c = r.body["counts"];
    CHECK(c["pareto_optimal"].get<int>() + c["discarded"].get<int>() + c["undecided"].get<int>() == 110);
    CHECK(r.body["suggestions"].size() == 8);
}

TEST_CASE("rejected measurements leave the campaign file byte-identical") {
    const epal::testing::TempDir dir;
    const auto path = make_campaign(dir);
    CampaignService svc(path);
    const auto before = read_file(path);
    CHECK(svc.post_measurements(measurement_body(99999, 0.5, 0.2)).status == 404);
    CHECK(svc.post_measurements("{not json").status == 400);
    CHECK(svc.post_measurements(R"({"point_id": 3, "hardness": "hard", "inverse_elasticity": 0.2})").status == 400);
    CHECK(svc.post_measurements(R"({"point_id": -3, "hardness": 0.5, "inverse_elasticity": 0.2})").status == 400);
    CHECK(svc.post_measurements(measurement_body(3, -0.5, 0.2)).status == 400);
    CHECK(svc.post_measurements("[1, 2]").status == 400);
    CHECK(svc.post_step().status == 400);  // nothing measured yet
    CHECK(read_file(path) == before);
    CHECK(svc.get_status().body["sampled"] == 0);

    const auto ok = svc.post_measurements(measurement_body(3, 0.5, 0.2));
    CHECK(ok.status == 200);
    CHECK(ok.body["sampled"] == 1);
    CHECK(campaign::load_file(path).find_measurement(3) != nullptr);
}

TEST_CASE("operator override of (0, 1/9, 8/9, 8000, 0)") {
    const epal::testing::TempDir dir;
    const auto path = make_campaign(dir);
    CampaignService svc(path);
    const auto state = campaign::load_file(path);
    const auto id = service::locate(state, 0.0, 1.0 / 9.0, 8.0 / 9.0, 8000.0, 0.0);
    REQUIRE(id.has_value());
    CHECK_FALSE(service::locate(state, 0.5, 0.5, 0.0, 3000.0, 0.0).has_value());

    const auto r = svc.post_override(Json{{"point_id", *id}}.dump());
    REQUIRE(r.status == 200);
    CHECK(r.body["suggestions"][0] == *id);
    const auto saved = campaign::load_file(path);
    CHECK(saved.log.back().kind == "override");
    CHECK(saved.suggestions.front() == *id);
    CHECK(svc.get_suggestions().body["suggestions"][0]["id"] == *id);

    CHECK(svc.post_override(Json{{"point_id", 99999}}.dump()).status == 404);
    CHECK(svc.post_override(R"({"replaces": 1})").status == 400);
    REQUIRE(svc.post_measurements(measurement_body(*id, 0.6, 0.2)).status == 200);
    CHECK(svc.post_override(Json{{"point_id", *id}}.dump()).status == 400);  // already measured
}

TEST_CASE("a step while another step runs is refused with 409") {
    const epal::testing::TempDir dir;
    const GateClock clock;
    CampaignService svc(make_campaign(dir), clock);
    measure_suggestions(svc);

    clock.gate->armed = true;
    auto first = std::async(std::launch::async, [&] { return svc.post_step(); });
    while (!clock.gate->entered) std::this_thread::yield();
    CHECK(svc.step_running());
    CHECK(svc.post_step().status == 409);
    CHECK(svc.get_status().status == 200);  // reads stay available
    clock.gate->released = true;

    const auto r = first.get();
    CHECK(r.status == 200);
    CHECK(r.body["step"]["iteration"] == 1);
    CHECK(r.body["iteration"] == 1);
    CHECK_FALSE(svc.step_running());
}

TEST_CASE("read views after a step") {
    const epal::testing::TempDir dir;
    CampaignService svc(make_campaign(dir));
    measure_suggestions(svc);
    REQUIRE(svc.post_step().status == 200);

    const auto points = svc.get_points().body["points"];
    REQUIRE(points.size() == 110);
    for (const auto& p : points) {
        CHECK(p["prediction"]["hardness"]["std"].get<double>() >= 0.0);
        CHECK(p["region_width"]["hardness"].get<double>() >= 0.0);
        CHECK(p["sampled"] == !p["measurement"].is_null());
    }
    const auto report = svc.get_report().body;
    CHECK(report["iteration"] == 1);
    CHECK(report["digest"] == svc.get_status().body["report_digest"]);
    CHECK(report["markdown"].get<std::string>().find("Campaign summary") != std::string::npos);
    for (const auto& s : report["statements"]) CHECK(s["truth"].get<double>() >= 0.95);

    const auto emb = svc.get_embedding().body;
    CHECK(emb["points"].size() == 110);
    std::size_t suggested = 0;
    for (const auto& p : emb["points"]) suggested += p["suggested"].get<bool>() ? 1 : 0;
    CHECK(suggested == svc.get_status().body["suggestions"].size());
}

TEST_CASE("endpoints over a real HTTP server") {
    const epal::testing::TempDir dir;
    CampaignService svc(make_campaign(dir));
    httplib::Server server;
    svc.mount(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client client("127.0.0.1", port);
    auto status = client.Get("/status");
    REQUIRE(status);
    CHECK(status->status == 200);
    CHECK(Json::parse(status->body)["sampled"] == 0);
    CHECK(client.Get("/points")->status == 200);
    CHECK(client.Get("/points/5")->status == 200);
    CHECK(Json::parse(client.Get("/points/5")->body)["id"] == 5);
    CHECK(client.Get("/points/99999")->status == 404);
    CHECK(client.Get("/points/abc")->status == 400);
    CHECK(client.Get("/embedding")->status == 200);
    CHECK(client.Get("/report")->status == 200);
    CHECK(client.Post("/measurements", measurement_body(99999, 0.5, 0.2), "application/json")->status == 404);
    CHECK(client.Post("/measurements", "oops", "application/json")->status == 400);
    const auto batch = Json::parse(client.Get("/suggestions")->body);
    for (const auto& p : batch["suggestions"]) {
        const auto id = p["id"].get<std::size_t>();
        CHECK(client.Post("/measurements", measurement_body(id, 0.5 + 0.01 * double(id), 0.2), "application/json")
                  ->status == 200);
    }
    const auto stepped = client.Post("/step", "", "application/json");
    CHECK_MESSAGE(stepped->status == 200, stepped->body);
    CHECK(Json::parse(client.Get("/suggestions")->body)["iteration"] == 1);

    server.stop();
    worker.join();
}
