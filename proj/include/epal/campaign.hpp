#pragma once

#include "epal/design.hpp"
#include "epal/embed.hpp"
#include "epal/fls.hpp"
#include "epal/pal.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace epal::campaign {

inline constexpr int kFormatVersion = 1;
inline constexpr std::string_view kCsvHeader = "point_id,hardness,inverse_elasticity,note";

/// Both objectives are maximized: hardness and the inverted modulus.
struct Measurement {
    std::size_t point_id = 0;
    double hardness = 0.0;
    double inverse_elasticity = 0.0;
    std::string timestamp;
    std::string note;

    bool operator==(const Measurement&) const = default;
};

/// Append-only campaign journal. Kinds: create, ingest, remeasure, override, step.
struct LogEntry {
    std::size_t sequence = 0;
    std::string kind;
    std::size_t iteration = 0;
    std::vector<std::size_t> points;
    std::string detail;
    std::string timestamp;

    bool operator==(const LogEntry&) const = default;
};

struct CampaignConfig {
    GridConfig grid;
    pal::PalConfig pal = default_pal_config();
    std::size_t fls_max_summarizer = 3;
    double fls_threshold = 0.95;
    embed::EmbedConfig embed;

    /// Surrogate-campaign defaults: epsilon 0.05, beta scale 0.25, 20 seeds, batches of 3,
    /// 120 evaluations.
    static pal::PalConfig default_pal_config();
    void validate() const;

    bool operator==(const CampaignConfig&) const = default;
};

struct EmbeddingCache {
    std::uint64_t grid_digest = 0;
    Eigen::MatrixXd coordinates;

    bool operator==(const EmbeddingCache& other) const;
};

struct CampaignState {
    int format_version = kFormatVersion;
    std::uint64_t seed = 0;
    CampaignConfig config;
    std::vector<DesignPoint> points;
    std::vector<Measurement> measurements;  // at most one per point, first-ingestion order
    pal::PalState pal;
    pal::PredictionTable predictions;       // from the latest step; empty before the first
    std::vector<std::size_t> suggestions;   // outstanding batch
    std::vector<LogEntry> log;
    std::string report_digest;              // fnv1a of the latest report markdown, hex
    std::optional<EmbeddingCache> embedding;

    bool converged() const { return pal.converged(); }
    /// Undecided points remain but every non-discarded point has been measured, so the
    /// optimizer has nothing left to suggest; only an operator override can continue.
    bool exhausted() const;
    std::size_t evaluations() const { return measurements.size(); }
    std::size_t budget_left() const;
    const Measurement* find_measurement(std::size_t point_id) const;

    bool operator==(const CampaignState&) const;
};

/// Supplies timestamps for log entries and measurements; the default is UTC ISO-8601 now.
using Clock = std::function<std::string()>;
std::string utc_now();

/// Fresh campaign: grid, embedding, and the maximin seed points as the first suggestions.
CampaignState create(const CampaignConfig& config, std::uint64_t seed, const Clock& clock = utc_now);

/// Stores a measurement (replacing any earlier one for the point) and logs it.
/// Throws NotFoundError for an unknown id and InvalidArgument for non-finite or non-positive values.
void ingest(CampaignState& state, Measurement measurement, const Clock& clock = utc_now);

/// Parses `point_id,hardness,inverse_elasticity,note` text and ingests every row; returns the row count.
/// The whole file is validated before anything is stored.
std::size_t import_csv(CampaignState& state, std::string_view text, const Clock& clock = utc_now);

/// Replaces an outstanding suggestion (the first one when `replaces` is absent) by an operator
/// chosen point. Throws NotFoundError for unknown ids and InvalidArgument for sampled points.
void override_suggestion(CampaignState& state, std::size_t point_id, std::optional<std::size_t> replaces,
                         const Clock& clock = utc_now);

struct Suggestion {
    std::vector<std::size_t> ids;
    bool converged = false;
    bool exhausted = false;
};

/// The outstanding batch (seed points before the first step, overrides included), extended with
/// greedy fantasy picks from the latest step when `batch_size` exceeds it.
Suggestion suggest_batch(const CampaignState& state, std::size_t batch_size);

struct StepArtifacts {
    std::size_t iteration = 0;
    Suggestion suggestion;
    fls::Report report;
    bool embedding_refreshed = false;
};

/// Refit, reclassify, suggest the next batch, summarize, and log. Requires at least one
/// measurement. On failure the state is left untouched.
StepArtifacts step(CampaignState& state, const Clock& clock = utc_now);

/// Fuzzy summary of the current classification over the whole grid.
fls::Report build_report(const CampaignState& state);
std::vector<fls::Record> fls_records(const CampaignState& state);
std::vector<std::shared_ptr<const fls::LinguisticVariable>> fls_variables(const GridConfig& grid);

/// Recomputes the embedding if it is missing or the grid changed. Returns true if recomputed.
bool refresh_embedding(CampaignState& state);
Eigen::MatrixXd embedding_features(const CampaignState& state);

std::string save(const CampaignState& state);
/// Throws ParseError (with byte offset) for malformed or incomplete documents and
/// UnsupportedVersionError for newer formats.
CampaignState load(std::string_view document);

/// Writes to a temporary sibling and renames it over `path`.
void save_file(const CampaignState& state, const std::string& path);
CampaignState load_file(const std::string& path);

std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t value);
std::uint64_t grid_digest(const GridConfig& grid);

/// Stand-in for the lab: measures each outstanding suggestion with the surrogate, then steps.
struct SurrogateLab {
    std::uint64_t seed = 0;
    double noise_scale = 1.0;
};

/// Measures the outstanding suggestions and steps, `max_steps` times or until the campaign
/// converges or runs out of budget. Returns the number of steps taken.
std::size_t run_with_surrogate(CampaignState& state, const SurrogateLab& lab, std::size_t max_steps,
                               const Clock& clock = utc_now);

}  // namespace epal::campaign
