#include "epal/campaign.hpp"

#include "epal/bench.hpp"
#include "epal/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace epal::campaign {

using Json = nlohmann::ordered_json;

pal::PalConfig CampaignConfig::default_pal_config() {
    pal::PalConfig c;
    c.epsilon = {0.05};
    c.beta_scale = 0.25;
    c.initial_samples = 20;
    c.batch_size = 3;
    c.max_evaluations = 120;
    return c;
}

void CampaignConfig::validate() const {
    grid.validate();
    pal.validate();
    embed.validate();
    if (!(fls_threshold >= 0.0 && fls_threshold <= 1.0)) throw InvalidArgument("fls threshold must lie in [0, 1]");
    if (fls_max_summarizer > 5) throw InvalidArgument("fls summarizer size exceeds the number of design variables");
}

bool EmbeddingCache::operator==(const EmbeddingCache& other) const {
    return grid_digest == other.grid_digest && coordinates.rows() == other.coordinates.rows() &&
           coordinates.cols() == other.coordinates.cols() && coordinates == other.coordinates;
}

bool CampaignState::operator==(const CampaignState& o) const {
    return format_version == o.format_version && seed == o.seed && config == o.config && points == o.points &&
           measurements == o.measurements && pal == o.pal && predictions == o.predictions &&
           suggestions == o.suggestions && log == o.log && report_digest == o.report_digest && embedding == o.embedding;
}

std::size_t CampaignState::budget_left() const {
    const auto budget = static_cast<std::size_t>(std::max(config.pal.max_evaluations, 0));
    return budget > measurements.size() ? budget - measurements.size() : 0;
}

bool CampaignState::exhausted() const {
    if (predictions.empty() || converged()) return false;
    for (const auto& c : pal.classes) {
        if (!c.sampled && c.cls != pal::Class::Discarded) return false;
    }
    return true;
}

const Measurement* CampaignState::find_measurement(std::size_t point_id) const {
    const auto it = std::find_if(measurements.begin(), measurements.end(),
                                 [&](const Measurement& m) { return m.point_id == point_id; });
    return it == measurements.end() ? nullptr : &*it;
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

namespace {

void append_log(CampaignState& state, std::string kind, std::vector<std::size_t> points, std::string detail,
                const Clock& clock) {
    LogEntry e;
    e.sequence = state.log.size();
    e.kind = std::move(kind);
    e.iteration = state.pal.iteration;
    e.points = std::move(points);
    e.detail = std::move(detail);
    e.timestamp = clock ? clock() : std::string();
    state.log.push_back(std::move(e));
}

void check_point(const CampaignState& state, std::size_t id) {
    if (id >= state.points.size()) throw NotFoundError("unknown point id " + std::to_string(id));
}

void check_values(double hardness, double inverse_elasticity) {
    if (!std::isfinite(hardness) || !std::isfinite(inverse_elasticity)) {
        throw InvalidArgument("measurement values must be finite");
    }
    if (hardness <= 0.0 || inverse_elasticity <= 0.0) throw InvalidArgument("measurement values must be positive");
}

}  // namespace

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

Eigen::MatrixXd embedding_features(const CampaignState& state) { return design_features(state.points, state.config.grid); }

bool refresh_embedding(CampaignState& state) {
    const std::uint64_t digest = grid_digest(state.config.grid);
    if (state.embedding && state.embedding->grid_digest == digest &&
        static_cast<std::size_t>(state.embedding->coordinates.rows()) == state.points.size()) {
        return false;
    }
    auto cfg = state.config.embed;
    cfg.k = std::min(cfg.k, state.points.size() > 1 ? state.points.size() - 1 : std::size_t{1});
    EmbeddingCache cache;
    cache.grid_digest = digest;
    if (state.points.size() > 2) {
        cache.coordinates = embed::embed_points(embedding_features(state), cfg).coordinates;
    } else {
        cache.coordinates = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(state.points.size()), 2);
    }
    state.embedding = std::move(cache);
    return true;
}

CampaignState create(const CampaignConfig& config, std::uint64_t seed, const Clock& clock) {
    config.validate();
    CampaignState state;
    state.seed = seed;
    state.config = config;
    state.config.pal.seed = seed;
    state.config.embed.seed = seed;
    state.points = build_grid(config.grid);
    state.pal.classes.assign(state.points.size(), {});
    state.suggestions = pal::maximin_seeds(design_features(state.points, config.grid),
                                           static_cast<std::size_t>(config.pal.initial_samples), seed);
    refresh_embedding(state);
    append_log(state, "create", state.suggestions,
               std::to_string(state.points.size()) + " design points, seed " + std::to_string(seed), clock);
    return state;
}

void ingest(CampaignState& state, Measurement m, const Clock& clock) {
    check_point(state, m.point_id);
    check_values(m.hardness, m.inverse_elasticity);
    if (m.timestamp.empty() && clock) m.timestamp = clock();
    const std::size_t id = m.point_id;
    auto it = std::find_if(state.measurements.begin(), state.measurements.end(),
                           [&](const Measurement& x) { return x.point_id == id; });
    std::ostringstream detail;
    detail.precision(17);
    if (it != state.measurements.end()) {
        detail << "replaced hardness " << it->hardness << ", inverse elasticity " << it->inverse_elasticity
               << " with " << m.hardness << ", " << m.inverse_elasticity;
        *it = std::move(m);
        append_log(state, "remeasure", {id}, detail.str(), clock);
    } else {
        detail << "hardness " << m.hardness << ", inverse elasticity " << m.inverse_elasticity;
        state.measurements.push_back(std::move(m));
        state.pal.sampled_ids.push_back(id);
        state.pal.classes[id].sampled = true;
        append_log(state, "ingest", {id}, detail.str(), clock);
    }
    std::erase(state.suggestions, id);
}

std::size_t import_csv(CampaignState& state, std::string_view text, const Clock& clock) {
    std::vector<Measurement> rows;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (pos < text.size()) {
        const std::size_t start = pos;
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        pos = end + 1;
        ++line_no;
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(line_no);
        if (!header_seen) {
            if (line != kCsvHeader) throw ParseError(where + ": expected header '" + std::string(kCsvHeader) + "'", start);
            header_seen = true;
            continue;
        }
        std::string_view fields[3];
        std::string_view rest = line;
        for (auto& f : fields) {
            const std::size_t comma = rest.find(',');
            if (comma == std::string_view::npos) throw ParseError(where + ": expected 4 fields", start);
            f = rest.substr(0, comma);
            rest.remove_prefix(comma + 1);
        }
        Measurement m;
        auto parse_number = [&](std::string_view s, auto& out, const char* name) {
            const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
            if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
                throw ParseError(where + ": invalid " + std::string(name), start + static_cast<std::size_t>(s.data() - line.data()));
            }
        };
        parse_number(fields[0], m.point_id, "point_id");
        parse_number(fields[1], m.hardness, "hardness");
        parse_number(fields[2], m.inverse_elasticity, "inverse_elasticity");
        m.note = std::string(rest);
        if (m.point_id >= state.points.size()) throw NotFoundError(where + ": unknown point id " + std::to_string(m.point_id));
        try {
            check_values(m.hardness, m.inverse_elasticity);
        } catch (const InvalidArgument& e) {
            throw InvalidArgument(where + ": " + e.what());
        }
        rows.push_back(std::move(m));
    }
    if (!header_seen) throw ParseError("missing header '" + std::string(kCsvHeader) + "'", 0);
    for (auto& m : rows) ingest(state, std::move(m), clock);
    return rows.size();
}

void override_suggestion(CampaignState& state, std::size_t point_id, std::optional<std::size_t> replaces,
                         const Clock& clock) {
    check_point(state, point_id);
    if (state.pal.classes[point_id].sampled) {
        throw InvalidArgument("point " + std::to_string(point_id) + " has already been measured");
    }
    if (std::find(state.suggestions.begin(), state.suggestions.end(), point_id) != state.suggestions.end()) {
        throw InvalidArgument("point " + std::to_string(point_id) + " is already suggested");
    }
    std::string detail = "operator choice";
    std::vector<std::size_t> points{point_id};
    auto target = state.suggestions.end();
    if (replaces) {
        target = std::find(state.suggestions.begin(), state.suggestions.end(), *replaces);
        if (target == state.suggestions.end()) {
            throw InvalidArgument("point " + std::to_string(*replaces) + " is not an outstanding suggestion");
        }
    } else if (!state.suggestions.empty()) {
        target = state.suggestions.begin();
    }
    if (target != state.suggestions.end()) {
        detail += ", replaces " + std::to_string(*target);
        points.push_back(*target);
        *target = point_id;
    } else {
        state.suggestions.push_back(point_id);
    }
    append_log(state, "override", std::move(points), std::move(detail), clock);
}

Suggestion suggest_batch(const CampaignState& state, std::size_t batch_size) {
    if (batch_size == 0) throw InvalidArgument("batch size must be positive");
    Suggestion out;
    for (std::size_t id : state.suggestions) {
        if (out.ids.size() == batch_size) return out;
        if (!state.pal.classes[id].sampled) out.ids.push_back(id);
    }
    if (state.predictions.empty()) return out;
    if (state.converged()) {
        out.converged = out.ids.empty();
        return out;
    }
    if (state.exhausted()) {
        out.exhausted = out.ids.empty();
        return out;
    }
    const std::size_t room = std::min(batch_size, state.budget_left());
    if (out.ids.size() >= room) return out;
    const auto fresh = pal::select_batch(state.pal, state.predictions, state.config.pal.epsilon_for(2),
                                         room + out.ids.size());
    for (std::size_t id : fresh) {
        if (out.ids.size() == room) break;
        if (std::find(out.ids.begin(), out.ids.end(), id) == out.ids.end()) out.ids.push_back(id);
    }
    return out;
}

std::vector<std::shared_ptr<const fls::LinguisticVariable>> fls_variables(const GridConfig& grid) {
    auto make = [](std::string attribute, std::string display, double lo, double hi) {
        auto v = std::make_shared<fls::LinguisticVariable>();
        v->attribute = std::move(attribute);
        v->display = std::move(display);
        v->min = lo;
        v->max = hi;
        return std::shared_ptr<const fls::LinguisticVariable>(std::move(v));
    };
    const auto [smin, smax] = std::minmax_element(grid.spin_speeds.begin(), grid.spin_speeds.end());
    const auto [dmin, dmax] = std::minmax_element(grid.dilutions.begin(), grid.dilutions.end());
    return {
        make("pvp10", "pvp10 concentration", 0.0, 1.0),
        make("pvp40", "pvp40 concentration", 0.0, 1.0),
        make("pvp360", "pvp360 concentration", 0.0, 1.0),
        make("spin_speed", "spin speed", *smin, *smax),
        make("dilution", "dilution", *dmin, *dmax),
    };
}

std::vector<fls::Record> fls_records(const CampaignState& state) {
    const std::size_t n = state.points.size();
    std::vector<double> uncertainty(n, 1.0);
    if (state.pal.regions.size() == n) {
        double top = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            uncertainty[i] = pal::normalized_diagonal(state.pal.regions[i], state.pal.objective_ranges);
            top = std::max(top, uncertainty[i]);
        }
        for (double& u : uncertainty) u = top > 0.0 ? u / top : 0.0;
    }
    std::vector<fls::Record> records(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = state.points[i];
        auto& r = records[i];
        r.attributes = {{"pvp10", p.c_pvp10},         {"pvp40", p.c_pvp40},       {"pvp360", p.c_pvp360},
                        {"spin_speed", p.spin_speed}, {"dilution", p.dilution}, {"uncertainty", uncertainty[i]}};
        r.category = std::string(pal::to_string(state.pal.classes[i].cls));
    }
    return records;
}

fls::Report build_report(const CampaignState& state) {
    auto statements = fls::enumerate_statements(fls_variables(state.config.grid), fls::default_quantifiers(),
                                                fls::default_qualifiers(), state.config.fls_max_summarizer);
    fls::evaluate_all(statements, fls_records(state));
    const auto kept = fls::simplify(statements, state.config.fls_threshold);
    fls::ReportLabels labels;
    labels.title = "Campaign summary";
    labels.iteration = state.pal.iteration;
    labels.threshold = state.config.fls_threshold;
    return fls::render_report(kept, labels);
}

StepArtifacts step(CampaignState& state, const Clock& clock) {
    if (state.measurements.empty()) throw InvalidArgument("step requires at least one measurement");
    CampaignState work = state;

    std::vector<std::vector<double>> observations;
    observations.reserve(work.pal.sampled_ids.size());
    for (std::size_t id : work.pal.sampled_ids) {
        const auto* m = work.find_measurement(id);
        if (!m) throw InvalidArgument("sampled point " + std::to_string(id) + " has no measurement");
        observations.push_back({m->hardness, m->inverse_elasticity});
    }
    auto round = pal::classification_round(design_features(work.points, work.config.grid), observations, 2,
                                           work.config.pal, work.pal);
    work.predictions = std::move(round.predictions);

    StepArtifacts out;
    out.iteration = work.pal.iteration;
    work.suggestions.clear();
    out.suggestion = suggest_batch(work, static_cast<std::size_t>(work.config.pal.batch_size));
    work.suggestions = out.suggestion.ids;
    out.embedding_refreshed = refresh_embedding(work);
    out.report = build_report(work);

    const auto c = work.pal.counts();
    std::ostringstream detail;
    detail << "pareto " << c.pareto << ", discarded " << c.discarded << ", undecided " << c.undecided
           << (out.suggestion.converged ? ", converged" : "") << (out.suggestion.exhausted ? ", exhausted" : "") << ", report " << hex64(fnv1a(out.report.markdown));
    work.report_digest = hex64(fnv1a(out.report.markdown));
    append_log(work, "step", work.suggestions, detail.str(), clock);
    state = std::move(work);
    return out;
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

Json grid_json(const GridConfig& g) {
    return Json{{"simplex_step", g.simplex_step}, {"spin_speeds", g.spin_speeds}, {"dilutions", g.dilutions}};
}

Json kernel_json(const gp::KernelParams& p) {
    return Json{{"signal_variance", p.signal_variance},
                {"lengthscales", p.lengthscales},
                {"noise_variance", p.noise_variance}};
}

Json config_json(const CampaignConfig& c) {
    const auto& p = c.pal;
    Json gp{{"restarts", p.gp.restarts},
            {"max_iterations", p.gp.max_iterations},
            {"tolerance", p.gp.tolerance},
            {"seed", p.gp.seed},
            {"min_lengthscale", p.gp.min_lengthscale},
            {"max_lengthscale", p.gp.max_lengthscale},
            {"min_noise", p.gp.min_noise},
            {"max_noise", p.gp.max_noise},
            {"min_signal", p.gp.min_signal},
            {"max_signal", p.gp.max_signal},
            {"warm_start", p.gp.warm_start ? kernel_json(*p.gp.warm_start) : Json(nullptr)}};
    Json pal{{"epsilon", p.epsilon},
             {"delta", p.delta},
             {"beta_scale", p.beta_scale},
             {"batch_size", p.batch_size},
             {"max_evaluations", p.max_evaluations},
             {"initial_samples", p.initial_samples},
             {"seed", p.seed},
             {"gp", gp}};
    const auto& e = c.embed;
    Json embed{{"k", e.k},
               {"min_dist", e.min_dist},
               {"spread", e.spread},
               {"epochs", e.epochs},
               {"negative_samples", e.negative_samples},
               {"seed", e.seed},
               {"curve", e.curve ? Json{{"a", e.curve->a}, {"b", e.curve->b}} : Json(nullptr)}};
    return Json{{"grid", grid_json(c.grid)},
                {"pal", pal},
                {"fls", {{"max_summarizer", c.fls_max_summarizer}, {"threshold", c.fls_threshold}}},
                {"embed", embed}};
}

// Schema-checked access; failures name the JSON path.
class Reader {
public:
    explicit Reader(const Json& root) : root_(root) {}

    const Json& at(const Json& obj, const char* key, const std::string& path) const {
        if (!obj.is_object()) fail(path, "expected an object");
        const auto it = obj.find(key);
        if (it == obj.end()) fail(path + "/" + key, "missing field");
        return *it;
    }

    template <typename T>
    T get(const Json& obj, const char* key, const std::string& path) const {
        return as<T>(at(obj, key, path), path + "/" + key);
    }

    template <typename T>
    T as(const Json& value, const std::string& path) const {
        try {
            if constexpr (std::is_floating_point_v<T>) {
                if (!value.is_number()) fail(path, "expected a number");
            } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
                if (!value.is_number_integer()) fail(path, "expected an integer");
                if constexpr (std::is_unsigned_v<T>) {
                    if (value.is_number_integer() && !value.is_number_unsigned() && value.get<long long>() < 0) {
                        fail(path, "expected a nonnegative integer");
                    }
                }
            }
            return value.get<T>();
        } catch (const nlohmann::json::exception& e) {
            fail(path, e.what());
        }
    }

    const Json& array(const Json& obj, const char* key, const std::string& path) const {
        const Json& v = at(obj, key, path);
        if (!v.is_array()) fail(path + "/" + key, "expected an array");
        return v;
    }

    [[noreturn]] static void fail(const std::string& path, const std::string& why) {
        throw ParseError("invalid campaign document at " + (path.empty() ? std::string("/") : path) + ": " + why, 0);
    }

private:
    const Json& root_;
};

gp::KernelParams kernel_from(const Reader& r, const Json& j, const std::string& path) {
    gp::KernelParams p;
    p.signal_variance = r.get<double>(j, "signal_variance", path);
    p.lengthscales = r.get<std::vector<double>>(j, "lengthscales", path);
    p.noise_variance = r.get<double>(j, "noise_variance", path);
    return p;
}

GridConfig grid_from(const Reader& r, const Json& j, const std::string& path) {
    GridConfig g;
    g.simplex_step = r.get<double>(j, "simplex_step", path);
    g.spin_speeds = r.get<std::vector<double>>(j, "spin_speeds", path);
    g.dilutions = r.get<std::vector<double>>(j, "dilutions", path);
    return g;
}

CampaignConfig config_from(const Reader& r, const Json& j, const std::string& path) {
    CampaignConfig c;
    c.grid = grid_from(r, r.at(j, "grid", path), path + "/grid");

    const std::string pp = path + "/pal";
    const Json& pj = r.at(j, "pal", path);
    c.pal.epsilon = r.get<std::vector<double>>(pj, "epsilon", pp);
    c.pal.delta = r.get<double>(pj, "delta", pp);
    c.pal.beta_scale = r.get<double>(pj, "beta_scale", pp);
    c.pal.batch_size = r.get<int>(pj, "batch_size", pp);
    c.pal.max_evaluations = r.get<int>(pj, "max_evaluations", pp);
    c.pal.initial_samples = r.get<int>(pj, "initial_samples", pp);
    c.pal.seed = r.get<std::uint64_t>(pj, "seed", pp);
    const std::string gpp = pp + "/gp";
    const Json& gj = r.at(pj, "gp", pp);
    auto& gp = c.pal.gp;
    gp.restarts = r.get<int>(gj, "restarts", gpp);
    gp.max_iterations = r.get<int>(gj, "max_iterations", gpp);
    gp.tolerance = r.get<double>(gj, "tolerance", gpp);
    gp.seed = r.get<std::uint64_t>(gj, "seed", gpp);
    gp.min_lengthscale = r.get<double>(gj, "min_lengthscale", gpp);
    gp.max_lengthscale = r.get<double>(gj, "max_lengthscale", gpp);
    gp.min_noise = r.get<double>(gj, "min_noise", gpp);
    gp.max_noise = r.get<double>(gj, "max_noise", gpp);
    gp.min_signal = r.get<double>(gj, "min_signal", gpp);
    gp.max_signal = r.get<double>(gj, "max_signal", gpp);
    const Json& warm = r.at(gj, "warm_start", gpp);
    if (!warm.is_null()) gp.warm_start = kernel_from(r, warm, gpp + "/warm_start");

    const Json& fj = r.at(j, "fls", path);
    c.fls_max_summarizer = r.get<std::size_t>(fj, "max_summarizer", path + "/fls");
    c.fls_threshold = r.get<double>(fj, "threshold", path + "/fls");

    const std::string ep = path + "/embed";
    const Json& ej = r.at(j, "embed", path);
    c.embed.k = r.get<std::size_t>(ej, "k", ep);
    c.embed.min_dist = r.get<double>(ej, "min_dist", ep);
    c.embed.spread = r.get<double>(ej, "spread", ep);
    c.embed.epochs = r.get<std::size_t>(ej, "epochs", ep);
    c.embed.negative_samples = r.get<std::size_t>(ej, "negative_samples", ep);
    c.embed.seed = r.get<std::uint64_t>(ej, "seed", ep);
    const Json& curve = r.at(ej, "curve", ep);
    if (!curve.is_null()) c.embed.curve = embed::CurveParams{r.get<double>(curve, "a", ep + "/curve"),
                                                              r.get<double>(curve, "b", ep + "/curve")};
    return c;
}

}  // namespace

std::uint64_t grid_digest(const GridConfig& grid) { return fnv1a(grid_json(grid).dump()); }

std::string save(const CampaignState& s) {
    Json doc;
    doc["format_version"] = s.format_version;
    doc["seed"] = s.seed;
    doc["config"] = config_json(s.config);

    Json points = Json::array();
    for (const auto& p : s.points) {
        points.push_back({{"id", p.id},
                          {"c_pvp10", p.c_pvp10},
                          {"c_pvp40", p.c_pvp40},
                          {"c_pvp360", p.c_pvp360},
                          {"spin_speed", p.spin_speed},
                          {"dilution", p.dilution},
                          {"composition_index", p.composition_index},
                          {"speed_index", p.speed_index},
                          {"dilution_index", p.dilution_index}});
    }
    doc["points"] = std::move(points);

    Json measurements = Json::array();
    for (const auto& m : s.measurements) {
        measurements.push_back({{"point_id", m.point_id},
                                {"hardness", m.hardness},
                                {"inverse_elasticity", m.inverse_elasticity},
                                {"timestamp", m.timestamp},
                                {"note", m.note}});
    }
    doc["measurements"] = std::move(measurements);

    const auto& ps = s.pal;
    Json pal;
    pal["iteration"] = ps.iteration;
    pal["sampled_ids"] = ps.sampled_ids;
    Json classes = Json::array();
    for (const auto& c : ps.classes) classes.push_back({{"class", pal::to_string(c.cls)}, {"sampled", c.sampled}});
    pal["classes"] = std::move(classes);
    Json regions = Json::array();
    for (const auto& r : ps.regions) regions.push_back({{"low", r.low}, {"high", r.high}});
    pal["regions"] = std::move(regions);
    Json ranges = Json::array();
    for (const auto& r : ps.objective_ranges) ranges.push_back({{"min", r.min}, {"max", r.max}});
    pal["objective_ranges"] = std::move(ranges);
    Json hyper = Json::array();
    for (const auto& h : ps.hyperparameters) hyper.push_back(kernel_json(h));
    pal["hyperparameters"] = std::move(hyper);
    pal["region_updates"] = ps.region_updates;
    pal["region_fallbacks"] = ps.region_fallbacks;
    doc["pal"] = std::move(pal);

    Json preds = Json::array();
    for (const auto& row : s.predictions) {
        Json r = Json::array();
        for (const auto& p : row) r.push_back({{"mean", p.mean}, {"std", p.std}});
        preds.push_back(std::move(r));
    }
    doc["predictions"] = std::move(preds);
    doc["suggestions"] = s.suggestions;

    Json log = Json::array();
    for (const auto& e : s.log) {
        log.push_back({{"sequence", e.sequence},
                       {"kind", e.kind},
                       {"iteration", e.iteration},
                       {"points", e.points},
                       {"detail", e.detail},
                       {"timestamp", e.timestamp}});
    }
    doc["log"] = std::move(log);
    doc["report_digest"] = s.report_digest;

    if (s.embedding) {
        Json coords = Json::array();
        for (Eigen::Index i = 0; i < s.embedding->coordinates.rows(); ++i) {
            coords.push_back({s.embedding->coordinates(i, 0), s.embedding->coordinates(i, 1)});
        }
        doc["embedding"] = {{"grid_digest", s.embedding->grid_digest}, {"coordinates", std::move(coords)}};
    } else {
        doc["embedding"] = nullptr;
    }
    return doc.dump(1) + "\n";
}

CampaignState load(std::string_view document) {
    Json doc;
    try {
        doc = Json::parse(document.begin(), document.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed campaign document: ") + e.what(), e.byte);
    }
    const Reader r(doc);
    if (!doc.is_object()) Reader::fail("", "expected an object");
    const int version = r.get<int>(doc, "format_version", "");
    if (version > kFormatVersion) {
        throw UnsupportedVersionError("campaign format version " + std::to_string(version) +
                                      " is newer than supported version " + std::to_string(kFormatVersion));
    }
    if (version < 1) Reader::fail("/format_version", "must be at least 1");

    CampaignState s;
    s.format_version = version;
    s.seed = r.get<std::uint64_t>(doc, "seed", "");
    s.config = config_from(r, r.at(doc, "config", ""), "/config");

    const Json& points = r.array(doc, "points", "");
    for (std::size_t i = 0; i < points.size(); ++i) {
        const std::string path = "/points/" + std::to_string(i);
        const Json& pj = points[i];
        DesignPoint p;
        p.id = r.get<std::size_t>(pj, "id", path);
        p.c_pvp10 = r.get<double>(pj, "c_pvp10", path);
        p.c_pvp40 = r.get<double>(pj, "c_pvp40", path);
        p.c_pvp360 = r.get<double>(pj, "c_pvp360", path);
        p.spin_speed = r.get<double>(pj, "spin_speed", path);
        p.dilution = r.get<double>(pj, "dilution", path);
        p.composition_index = r.get<std::size_t>(pj, "composition_index", path);
        p.speed_index = r.get<std::size_t>(pj, "speed_index", path);
        p.dilution_index = r.get<std::size_t>(pj, "dilution_index", path);
        if (p.id != i) Reader::fail(path + "/id", "ids must equal their position");
        s.points.push_back(p);
    }
    const std::size_t n = s.points.size();

    const Json& ms = r.array(doc, "measurements", "");
    for (std::size_t i = 0; i < ms.size(); ++i) {
        const std::string path = "/measurements/" + std::to_string(i);
        Measurement m;
        m.point_id = r.get<std::size_t>(ms[i], "point_id", path);
        m.hardness = r.get<double>(ms[i], "hardness", path);
        m.inverse_elasticity = r.get<double>(ms[i], "inverse_elasticity", path);
        m.timestamp = r.get<std::string>(ms[i], "timestamp", path);
        m.note = r.get<std::string>(ms[i], "note", path);
        if (m.point_id >= n) Reader::fail(path + "/point_id", "unknown point");
        if (s.find_measurement(m.point_id)) Reader::fail(path + "/point_id", "duplicate measurement");
        s.measurements.push_back(std::move(m));
    }

    const Json& pj = r.at(doc, "pal", "");
    auto& ps = s.pal;
    ps.iteration = r.get<std::size_t>(pj, "iteration", "/pal");
    ps.sampled_ids = r.get<std::vector<std::size_t>>(pj, "sampled_ids", "/pal");
    const Json& classes = r.array(pj, "classes", "/pal");
    for (std::size_t i = 0; i < classes.size(); ++i) {
        const std::string path = "/pal/classes/" + std::to_string(i);
        pal::Classification c;
        try {
            c.cls = pal::class_from_string(r.get<std::string>(classes[i], "class", path));
        } catch (const InvalidArgument& e) {
            Reader::fail(path + "/class", e.what());
        }
        c.sampled = r.get<bool>(classes[i], "sampled", path);
        ps.classes.push_back(c);
    }
    const Json& regions = r.array(pj, "regions", "/pal");
    for (std::size_t i = 0; i < regions.size(); ++i) {
        const std::string path = "/pal/regions/" + std::to_string(i);
        ps.regions.push_back({r.get<std::vector<double>>(regions[i], "low", path),
                              r.get<std::vector<double>>(regions[i], "high", path)});
    }
    const Json& ranges = r.array(pj, "objective_ranges", "/pal");
    for (std::size_t i = 0; i < ranges.size(); ++i) {
        const std::string path = "/pal/objective_ranges/" + std::to_string(i);
        ps.objective_ranges.push_back({r.get<double>(ranges[i], "min", path), r.get<double>(ranges[i], "max", path)});
    }
    const Json& hyper = r.array(pj, "hyperparameters", "/pal");
    for (std::size_t i = 0; i < hyper.size(); ++i) {
        ps.hyperparameters.push_back(kernel_from(r, hyper[i], "/pal/hyperparameters/" + std::to_string(i)));
    }
    ps.region_updates = r.get<std::size_t>(pj, "region_updates", "/pal");
    ps.region_fallbacks = r.get<std::size_t>(pj, "region_fallbacks", "/pal");

    const Json& preds = r.array(doc, "predictions", "");
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const std::string path = "/predictions/" + std::to_string(i);
        if (!preds[i].is_array()) Reader::fail(path, "expected an array");
        std::vector<gp::Prediction> row;
        for (std::size_t j = 0; j < preds[i].size(); ++j) {
            const std::string pp = path + "/" + std::to_string(j);
            row.push_back({r.get<double>(preds[i][j], "mean", pp), r.get<double>(preds[i][j], "std", pp)});
        }
        s.predictions.push_back(std::move(row));
    }
    s.suggestions = r.get<std::vector<std::size_t>>(doc, "suggestions", "");

    const Json& log = r.array(doc, "log", "");
    for (std::size_t i = 0; i < log.size(); ++i) {
        const std::string path = "/log/" + std::to_string(i);
        LogEntry e;
        e.sequence = r.get<std::size_t>(log[i], "sequence", path);
        e.kind = r.get<std::string>(log[i], "kind", path);
        e.iteration = r.get<std::size_t>(log[i], "iteration", path);
        e.points = r.get<std::vector<std::size_t>>(log[i], "points", path);
        e.detail = r.get<std::string>(log[i], "detail", path);
        e.timestamp = r.get<std::string>(log[i], "timestamp", path);
        if (e.sequence != i) Reader::fail(path + "/sequence", "log sequence must be contiguous");
        s.log.push_back(std::move(e));
    }

    s.report_digest = r.get<std::string>(doc, "report_digest", "");

    const Json& emb = r.at(doc, "embedding", "");
    if (!emb.is_null()) {
        EmbeddingCache cache;
        cache.grid_digest = r.get<std::uint64_t>(emb, "grid_digest", "/embedding");
        const Json& coords = r.array(emb, "coordinates", "/embedding");
        cache.coordinates.resize(static_cast<Eigen::Index>(coords.size()), 2);
        for (std::size_t i = 0; i < coords.size(); ++i) {
            const auto xy = r.as<std::vector<double>>(coords[i], "/embedding/coordinates/" + std::to_string(i));
            if (xy.size() != 2) Reader::fail("/embedding/coordinates/" + std::to_string(i), "expected two coordinates");
            cache.coordinates(static_cast<Eigen::Index>(i), 0) = xy[0];
            cache.coordinates(static_cast<Eigen::Index>(i), 1) = xy[1];
        }
        s.embedding = std::move(cache);
    }

    // Cross-field consistency.
    if (ps.classes.size() != n) Reader::fail("/pal/classes", "length differs from the point count");
    if (!ps.regions.empty() && ps.regions.size() != n) Reader::fail("/pal/regions", "length differs from the point count");
    if (!s.predictions.empty() && s.predictions.size() != n) Reader::fail("/predictions", "length differs from the point count");
    if (ps.sampled_ids.size() != s.measurements.size()) Reader::fail("/pal/sampled_ids", "does not match the measurements");
    for (std::size_t i = 0; i < ps.sampled_ids.size(); ++i) {
        if (ps.sampled_ids[i] != s.measurements[i].point_id) {
            Reader::fail("/pal/sampled_ids/" + std::to_string(i), "does not match the measurement order");
        }
    }
    for (std::size_t id : s.suggestions) {
        if (id >= n) Reader::fail("/suggestions", "unknown point");
    }
    try {
        s.config.validate();
    } catch (const InvalidArgument& e) {
        Reader::fail("/config", e.what());
    }
    return s;
}

void save_file(const CampaignState& state, const std::string& path) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp-" + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << save(state);
        out.flush();
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw std::runtime_error("cannot replace " + path + ": " + ec.message());
    }
}

CampaignState load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open campaign file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return load(buf.str());
}

std::size_t run_with_surrogate(CampaignState& state, const SurrogateLab& lab, std::size_t max_steps,
                               const Clock& clock) {
    std::size_t steps = 0;
    while (steps < max_steps) {
        if (state.converged() && !state.predictions.empty()) break;
        const auto pending = state.suggestions;
        std::size_t measured = 0;
        for (std::size_t id : pending) {
            if (state.budget_left() == 0) break;
            const auto y = bench::surrogate_spincoat(state.points[id], lab.seed, lab.noise_scale);
            Measurement m;
            m.point_id = id;
            m.hardness = y.hardness;
            m.inverse_elasticity = y.inverse_elasticity;
            m.note = "surrogate";
            ingest(state, std::move(m), clock);
            ++measured;
        }
        if (measured == 0 && !state.predictions.empty()) break;
        step(state, clock);
        ++steps;
    }
    return steps;
}

}  // namespace epal::campaign
