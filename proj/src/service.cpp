#include "epal/service.hpp"

#include "epal/error.hpp"

#include <httplib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace epal::service {

using campaign::CampaignState;

namespace {

Json error_body(std::string message) { return Json{{"error", std::move(message)}}; }

std::vector<double> uncertainties(const CampaignState& state) {
    const std::size_t n = state.points.size();
    std::vector<double> u(n, 1.0);
    if (state.pal.regions.size() != n) return u;
    double top = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        u[i] = pal::normalized_diagonal(state.pal.regions[i], state.pal.objective_ranges);
        top = std::max(top, u[i]);
    }
    for (double& x : u) x = top > 0.0 ? x / top : 0.0;
    return u;
}

Json design_view(const campaign::DesignPoint& p) {
    return Json{{"id", p.id},
                {"c_pvp10", p.c_pvp10},
                {"c_pvp40", p.c_pvp40},
                {"c_pvp360", p.c_pvp360},
                {"spin_speed", p.spin_speed},
                {"dilution", p.dilution}};
}

Json full_point(const CampaignState& state, std::size_t id, double uncertainty) {
    Json j = design_view(state.points[id]);
    j["class"] = pal::to_string(state.pal.classes[id].cls);
    j["sampled"] = state.pal.classes[id].sampled;
    if (const auto* m = state.find_measurement(id)) {
        j["measurement"] = {{"hardness", m->hardness},
                            {"inverse_elasticity", m->inverse_elasticity},
                            {"timestamp", m->timestamp},
                            {"note", m->note}};
    } else {
        j["measurement"] = nullptr;
    }
    if (!state.predictions.empty()) {
        const auto& row = state.predictions[id];
        j["prediction"] = {{"hardness", {{"mean", row[0].mean}, {"std", row[0].std}}},
                           {"inverse_elasticity", {{"mean", row[1].mean}, {"std", row[1].std}}}};
    } else {
        j["prediction"] = nullptr;
    }
    if (state.pal.regions.size() == state.points.size()) {
        const auto& r = state.pal.regions[id];
        j["region_width"] = {{"hardness", r.high[0] - r.low[0]}, {"inverse_elasticity", r.high[1] - r.low[1]}};
    } else {
        j["region_width"] = nullptr;
    }
    j["uncertainty"] = uncertainty;
    return j;
}

// Parses a JSON object body; nullopt (with message) when malformed.
std::optional<Json> parse_object(const std::string& body, std::string& message) {
    try {
        Json j = Json::parse(body);
        if (!j.is_object()) {
            message = "body must be a JSON object";
            return std::nullopt;
        }
        return j;
    } catch (const nlohmann::json::parse_error& e) {
        message = std::string("malformed JSON: ") + e.what();
        return std::nullopt;
    }
}

std::optional<std::size_t> get_id(const Json& j, const char* key, std::string& message) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer() || (it->is_number_integer() && !it->is_number_unsigned() && it->get<long long>() < 0)) {
        message = std::string("field '") + key + "' must be a nonnegative integer";
        return std::nullopt;
    }
    return it->get<std::size_t>();
}

}  // namespace

Json status_view(const CampaignState& state) {
    const auto c = state.pal.counts();
    return Json{{"iteration", state.pal.iteration},
                {"grid_size", state.points.size()},
                {"counts", {{"pareto_optimal", c.pareto}, {"discarded", c.discarded}, {"undecided", c.undecided}}},
                {"sampled", state.measurements.size()},
                {"budget_left", state.budget_left()},
                {"converged", !state.predictions.empty() && state.converged()},
                {"exhausted", state.exhausted()},
                {"suggestions", state.suggestions},
                {"report_digest", state.report_digest}};
}

Json point_view(const CampaignState& state, std::size_t id) {
    if (id >= state.points.size()) throw NotFoundError("unknown point id " + std::to_string(id));
    return full_point(state, id, uncertainties(state)[id]);
}

Json points_view(const CampaignState& state) {
    const auto u = uncertainties(state);
    Json arr = Json::array();
    for (std::size_t i = 0; i < state.points.size(); ++i) arr.push_back(full_point(state, i, u[i]));
    return Json{{"iteration", state.pal.iteration}, {"points", std::move(arr)}};
}

Json suggestions_view(const CampaignState& state, std::size_t batch_size) {
    const auto s = campaign::suggest_batch(state, batch_size);
    Json arr = Json::array();
    for (std::size_t id : s.ids) arr.push_back(design_view(state.points[id]));
    return Json{{"iteration", state.pal.iteration}, {"converged", s.converged}, {"exhausted", s.exhausted},
                {"suggestions", std::move(arr)}};
}

Json report_view(const CampaignState& state, const fls::Report& report) {
    Json statements = Json::array();
    std::istringstream lines(report.records_jsonl);
    for (std::string line; std::getline(lines, line);) {
        if (!line.empty()) statements.push_back(Json::parse(line));
    }
    return Json{{"iteration", state.pal.iteration},
                {"threshold", state.config.fls_threshold},
                {"digest", campaign::hex64(campaign::fnv1a(report.markdown))},
                {"markdown", report.markdown},
                {"statements", std::move(statements)}};
}

Json embedding_view(const CampaignState& state) {
    Json arr = Json::array();
    if (!state.embedding) return Json{{"points", std::move(arr)}};
    const auto u = uncertainties(state);
    const auto& xy = state.embedding->coordinates;
    for (std::size_t i = 0; i < state.points.size(); ++i) {
        const auto& p = state.points[i];
        Json j{{"id", i},
               {"x", xy(static_cast<Eigen::Index>(i), 0)},
               {"y", xy(static_cast<Eigen::Index>(i), 1)},
               {"class", pal::to_string(state.pal.classes[i].cls)},
               {"suggested", std::find(state.suggestions.begin(), state.suggestions.end(), i) != state.suggestions.end()},
               {"uncertainty", u[i]}};
        if (!state.predictions.empty()) {
            j["hardness"] = state.predictions[i][0].mean;
            j["inverse_elasticity"] = state.predictions[i][1].mean;
        } else {
            j["hardness"] = nullptr;
            j["inverse_elasticity"] = nullptr;
        }
        j["design"] = design_view(p);
        arr.push_back(std::move(j));
    }
    return Json{{"grid_digest", campaign::hex64(state.embedding->grid_digest)}, {"points", std::move(arr)}};
}

std::optional<std::size_t> locate(const CampaignState& state, double c10, double c40, double c360, double speed,
                                  double dilution) {
    for (const auto& p : state.points) {
        if (std::abs(p.c_pvp10 - c10) < 1e-6 && std::abs(p.c_pvp40 - c40) < 1e-6 && std::abs(p.c_pvp360 - c360) < 1e-6 &&
            std::abs(p.spin_speed - speed) < 1e-6 && std::abs(p.dilution - dilution) < 1e-6) {
            return p.id;
        }
    }
    return std::nullopt;
}

CampaignService::CampaignService(std::string campaign_path, campaign::Clock clock)
    : path_(std::move(campaign_path)), clock_(std::move(clock)) {
    state_ = std::make_shared<const CampaignState>(campaign::load_file(path_));
}

std::shared_ptr<const CampaignState> CampaignService::snapshot() const {
    std::shared_lock lock(state_mutex_);
    return state_;
}

Response CampaignService::commit(CampaignState next) {
    try {
        campaign::save_file(next, path_);
    } catch (const std::exception& e) {
        return {500, error_body(std::string("could not persist campaign: ") + e.what())};
    }
    auto published = std::make_shared<const CampaignState>(std::move(next));
    {
        std::unique_lock lock(state_mutex_);
        state_ = published;
    }
    return {200, status_view(*published)};
}

Response CampaignService::get_status() const { return {200, status_view(*snapshot())}; }

Response CampaignService::get_points() const { return {200, points_view(*snapshot())}; }

Response CampaignService::get_point(const std::string& id) const {
    std::size_t value = 0;
    const auto [end, ec] = std::from_chars(id.data(), id.data() + id.size(), value);
    if (ec != std::errc() || end != id.data() + id.size()) return {400, error_body("point id must be a nonnegative integer")};
    const auto s = snapshot();
    if (value >= s->points.size()) return {404, error_body("unknown point id " + id)};
    return {200, point_view(*s, value)};
}

Response CampaignService::get_suggestions() const {
    const auto s = snapshot();
    return {200, suggestions_view(*s, static_cast<std::size_t>(s->config.pal.batch_size))};
}

Response CampaignService::get_report() const {
    const auto s = snapshot();
    std::shared_ptr<const fls::Report> report;
    {
        std::lock_guard lock(report_mutex_);
        if (report_state_ != s) {
            report_ = std::make_shared<const fls::Report>(campaign::build_report(*s));
            report_state_ = s;
        }
        report = report_;
    }
    return {200, report_view(*s, *report)};
}

Response CampaignService::get_embedding() const { return {200, embedding_view(*snapshot())}; }

Response CampaignService::post_measurements(const std::string& body) {
    std::string message;
    const auto j = parse_object(body, message);
    if (!j) return {400, error_body(message)};
    const auto id = get_id(*j, "point_id", message);
    if (!id) return {400, error_body(message)};
    campaign::Measurement m;
    m.point_id = *id;
    for (const char* key : {"hardness", "inverse_elasticity"}) {
        const auto it = j->find(key);
        if (it == j->end() || !it->is_number()) {
            return {400, error_body(std::string("field '") + key + "' must be a number")};
        }
    }
    m.hardness = (*j)["hardness"].get<double>();
    m.inverse_elasticity = (*j)["inverse_elasticity"].get<double>();
    if (const auto it = j->find("note"); it != j->end()) {
        if (!it->is_string()) return {400, error_body("field 'note' must be a string")};
        m.note = it->get<std::string>();
    }

    std::lock_guard writer(writer_mutex_);
    CampaignState next = *snapshot();
    try {
        campaign::ingest(next, std::move(m), clock_);
    } catch (const NotFoundError& e) {
        return {404, error_body(e.what())};
    } catch (const InvalidArgument& e) {
        return {400, error_body(e.what())};
    }
    return commit(std::move(next));
}

Response CampaignService::post_override(const std::string& body) {
    std::string message;
    const auto j = parse_object(body, message);
    if (!j) return {400, error_body(message)};
    const auto id = get_id(*j, "point_id", message);
    if (!id) return {400, error_body(message)};
    std::optional<std::size_t> replaces;
    if (const auto it = j->find("replaces"); it != j->end() && !it->is_null()) {
        replaces = get_id(*j, "replaces", message);
        if (!replaces) return {400, error_body(message)};
    }

    std::lock_guard writer(writer_mutex_);
    CampaignState next = *snapshot();
    try {
        campaign::override_suggestion(next, *id, replaces, clock_);
    } catch (const NotFoundError& e) {
        return {404, error_body(e.what())};
    } catch (const InvalidArgument& e) {
        return {400, error_body(e.what())};
    }
    return commit(std::move(next));
}

Response CampaignService::post_step() {
    bool expected = false;
    if (!stepping_.compare_exchange_strong(expected, true)) return {409, error_body("a step is already running")};
    struct Release {
        std::atomic<bool>& flag;
        ~Release() { flag.store(false); }
    } release{stepping_};

    std::lock_guard writer(writer_mutex_);
    CampaignState next = *snapshot();
    campaign::StepArtifacts artifacts;
    try {
        artifacts = campaign::step(next, clock_);
    } catch (const InvalidArgument& e) {
        return {400, error_body(e.what())};
    } catch (const NumericError& e) {
        return {500, error_body(std::string("step failed: ") + e.what())};
    }
    auto response = commit(std::move(next));
    if (response.status == 200) {
        response.body["step"] = {{"iteration", artifacts.iteration},
                                 {"converged", artifacts.suggestion.converged},
                                 {"exhausted", artifacts.suggestion.exhausted},
                                 {"suggestions", artifacts.suggestion.ids},
                                 {"embedding_refreshed", artifacts.embedding_refreshed}};
    }
    return response;
}

void CampaignService::mount(httplib::Server& server) {
    auto reply = [](httplib::Response& res, const Response& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    auto guarded = [reply](auto handler) {
        return [reply, handler](const httplib::Request& req, httplib::Response& res) {
            try {
                reply(res, handler(req));
            } catch (const std::exception& e) {
                reply(res, {500, error_body(e.what())});
            }
        };
    };
    server.Get("/status", guarded([this](const httplib::Request&) { return get_status(); }));
    server.Get("/points", guarded([this](const httplib::Request&) { return get_points(); }));
    server.Get(R"(/points/([^/]+))",
               guarded([this](const httplib::Request& req) { return get_point(req.matches[1].str()); }));
    server.Get("/suggestions", guarded([this](const httplib::Request&) { return get_suggestions(); }));
    server.Get("/report", guarded([this](const httplib::Request&) { return get_report(); }));
    server.Get("/embedding", guarded([this](const httplib::Request&) { return get_embedding(); }));
    server.Post("/measurements", guarded([this](const httplib::Request& req) { return post_measurements(req.body); }));
    server.Post("/override", guarded([this](const httplib::Request& req) { return post_override(req.body); }));
    server.Post("/step", guarded([this](const httplib::Request&) { return post_step(); }));
}

bool serve(CampaignService& service, const std::string& host, int port) {
    httplib::Server server;
    service.mount(server);
    return server.listen(host, port);
}

}  // namespace epal::service
