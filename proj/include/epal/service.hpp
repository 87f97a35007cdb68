#pragma once

#include "epal/campaign.hpp"

#include <json.hpp>

#include <atomic>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

namespace httplib {
class Server;
}

namespace epal::service {

using Json = nlohmann::ordered_json;

/// Response documents. Field names are part of the HTTP contract (see README).
Json status_view(const campaign::CampaignState& state);
Json point_view(const campaign::CampaignState& state, std::size_t id);
Json points_view(const campaign::CampaignState& state);
Json suggestions_view(const campaign::CampaignState& state, std::size_t batch_size);
Json report_view(const campaign::CampaignState& state, const fls::Report& report);
Json embedding_view(const campaign::CampaignState& state);

/// Grid id of the point with the given coordinates (within 1e-6), if any.
std::optional<std::size_t> locate(const campaign::CampaignState& state, double c_pvp10, double c_pvp40,
                                  double c_pvp360, double spin_speed, double dilution);

struct Response {
    int status = 200;
    Json body;
};

/// One campaign file behind a single-writer lock. Reads see the last committed state; every
/// mutation is applied to a copy, written atomically, and only then published.
class CampaignService {
public:
    CampaignService(std::string campaign_path, campaign::Clock clock = campaign::utc_now);

    Response get_status() const;
    Response get_points() const;
    Response get_point(const std::string& id) const;
    Response get_suggestions() const;
    Response get_report() const;
    Response get_embedding() const;

    Response post_measurements(const std::string& body);
    Response post_override(const std::string& body);
    Response post_step();

    bool step_running() const { return stepping_.load(); }

    /// Registers every endpoint on `server`.
    void mount(httplib::Server& server);

private:
    std::shared_ptr<const campaign::CampaignState> snapshot() const;
    Response commit(campaign::CampaignState next);

    std::string path_;
    campaign::Clock clock_;
    mutable std::shared_mutex state_mutex_;
    std::shared_ptr<const campaign::CampaignState> state_;
    std::mutex writer_mutex_;
    std::atomic<bool> stepping_{false};

    mutable std::mutex report_mutex_;
    mutable std::shared_ptr<const campaign::CampaignState> report_state_;
    mutable std::shared_ptr<const fls::Report> report_;
};

/// Blocks serving on host:port until the server is stopped. Returns false if binding failed.
bool serve(CampaignService& service, const std::string& host, int port);

}  // namespace epal::service
