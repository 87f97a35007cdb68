#pragma once

#include "epal/campaign.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

namespace epal::testing {

/// 55 compositions at two speeds without dilution (110 points): fast to step, and still
/// containing the (0, 1/9, 8/9) mixture.
inline campaign::CampaignConfig small_config() {
    campaign::CampaignConfig c;
    c.grid.spin_speeds = {2000.0, 8000.0};
    c.grid.dilutions = {0.0};
    c.pal.initial_samples = 8;
    c.pal.batch_size = 3;
    c.pal.max_evaluations = 60;
    c.embed.k = 8;
    c.embed.epochs = 100;
    return c;
}

/// Deterministic timestamps.
struct FixedClock {
    std::shared_ptr<std::atomic<int>> ticks = std::make_shared<std::atomic<int>>(0);
    std::string operator()() const { return "2026-01-01T00:00:" + std::to_string(10 + (ticks->fetch_add(1) % 50)) + "Z"; }
};

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("epal_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace epal::testing
