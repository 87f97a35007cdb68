#include "epal/cli.hpp"

#include "epal/acceptance.hpp"
#include "epal/bench.hpp"
#include "epal/campaign.hpp"
#include "epal/error.hpp"
#include "epal/service.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace epal::cli {

namespace {

struct Options {
    std::string campaign;
    std::uint64_t seed = 0;
    double epsilon = 0.05;
    int batch = 0;
    int max_evaluations = 120;
    bool force = false;
    std::string input;
    std::optional<std::uint64_t> surrogate_seed;
    double noise_scale = 1.0;
    std::string out;
    std::string suite = "binh-korn";
    std::string host = "127.0.0.1";
    int port = 8080;
};

std::string read_all(std::istream& in) {
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string design_line(const campaign::DesignPoint& p) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%g,%g", p.id, p.c_pvp10, p.c_pvp40, p.c_pvp360, p.spin_speed,
                  p.dilution);
    return buf;
}

int cmd_init(const Options& o, std::ostream& out) {
    if (std::filesystem::exists(o.campaign) && !o.force) {
        throw std::runtime_error(o.campaign + " already exists (use --force to overwrite)");
    }
    campaign::CampaignConfig config;
    config.pal.epsilon = {o.epsilon};
    if (o.batch > 0) config.pal.batch_size = o.batch;
    config.pal.max_evaluations = o.max_evaluations;
    const auto state = campaign::create(config, o.seed);
    campaign::save_file(state, o.campaign);
    out << service::status_view(state).dump(2) << '\n';
    return 0;
}

int cmd_status(const Options& o, std::ostream& out) {
    out << service::status_view(campaign::load_file(o.campaign)).dump(2) << '\n';
    return 0;
}

int cmd_suggest(const Options& o, std::ostream& out, std::ostream& err) {
    const auto state = campaign::load_file(o.campaign);
    const auto batch = static_cast<std::size_t>(o.batch > 0 ? o.batch : state.config.pal.batch_size);
    const auto s = campaign::suggest_batch(state, batch);
    for (std::size_t id : s.ids) out << design_line(state.points[id]) << '\n';
    if (s.converged) err << "campaign converged\n";
    if (s.exhausted) err << "every non-discarded point is measured; override to continue\n";
    return 0;
}

int cmd_ingest(const Options& o, std::ostream& out) {
    auto state = campaign::load_file(o.campaign);
    std::size_t count = 0;
    if (o.surrogate_seed) {
        const auto pending = campaign::suggest_batch(state, static_cast<std::size_t>(state.config.pal.batch_size)).ids;
        const auto ids = state.predictions.empty() ? state.suggestions : pending;
        for (std::size_t id : ids) {
            if (state.pal.classes[id].sampled) continue;
            const auto y = bench::surrogate_spincoat(state.points[id], *o.surrogate_seed, o.noise_scale);
            campaign::ingest(state, {id, y.hardness, y.inverse_elasticity, "", "surrogate"});
            ++count;
        }
    } else if (o.input.empty()) {
        throw InvalidArgument("ingest needs a CSV file ('-' for stdin) or --surrogate");
    } else if (o.input == "-") {
        count = campaign::import_csv(state, read_all(std::cin));
    } else {
        std::ifstream in(o.input, std::ios::binary);
        if (!in) throw NotFoundError("cannot open " + o.input);
        count = campaign::import_csv(state, read_all(in));
    }
    campaign::save_file(state, o.campaign);
    out << "ingested " << count << " measurement" << (count == 1 ? "" : "s") << ", " << state.evaluations()
        << " measured\n";
    return 0;
}

int cmd_step(const Options& o, std::ostream& out) {
    auto state = campaign::load_file(o.campaign);
    const auto artifacts = campaign::step(state);
    campaign::save_file(state, o.campaign);
    const auto c = state.pal.counts();
    out << "iteration " << artifacts.iteration << ": pareto " << c.pareto << ", discarded " << c.discarded
        << ", undecided " << c.undecided << '\n';
    if (artifacts.suggestion.converged) out << "converged\n";
    if (artifacts.suggestion.exhausted) out << "exhausted\n";
    for (std::size_t id : artifacts.suggestion.ids) out << design_line(state.points[id]) << '\n';
    return 0;
}

int cmd_explain(const Options& o, std::ostream& out) {
    const auto state = campaign::load_file(o.campaign);
    const auto report = campaign::build_report(state);
    if (o.out.empty()) {
        out << report.markdown;
        return 0;
    }
    const std::filesystem::path dir(o.out);
    std::filesystem::create_directories(dir);
    write_text(dir / "report.md", report.markdown);
    write_text(dir / "statements.jsonl", report.records_jsonl);
    write_text(dir / "prompt.txt", report.prompt);
    out << "wrote " << (dir / "report.md").string() << ", " << (dir / "statements.jsonl").string() << ", "
        << (dir / "prompt.txt").string() << '\n';
    return 0;
}

int cmd_embed(const Options& o, std::ostream& out) {
    auto state = campaign::load_file(o.campaign);
    if (campaign::refresh_embedding(state)) campaign::save_file(state, o.campaign);
    std::ostringstream csv;
    csv.precision(17);
    csv << "id,x,y,class\n";
    const auto& xy = state.embedding->coordinates;
    for (std::size_t i = 0; i < state.points.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        csv << i << ',' << xy(r, 0) << ',' << xy(r, 1) << ',' << pal::to_string(state.pal.classes[i].cls) << '\n';
    }
    if (o.out.empty()) {
        out << csv.str();
    } else {
        write_text(o.out, csv.str());
        out << "wrote " << o.out << '\n';
    }
    return 0;
}

int cmd_bench(const Options& o, std::ostream& out) {
    bool all_pass = true;
    bool matched = false;
    for (const auto& suite : acceptance::suites()) {
        if (o.suite != "all" && o.suite != suite.name) continue;
        matched = true;
        const auto result = suite.run();
        all_pass = all_pass && result.pass;
        out << acceptance::format(result) << std::endl;
    }
    if (!matched) throw InvalidArgument("unknown suite '" + o.suite + "'");
    return all_pass ? 0 : 1;
}

int cmd_serve(const Options& o, std::ostream& out) {
    service::CampaignService svc(o.campaign);
    out << "serving " << o.campaign << " on http://" << o.host << ':' << o.port << std::endl;
    if (!service::serve(svc, o.host, o.port)) throw std::runtime_error("cannot bind " + o.host + ":" + std::to_string(o.port));
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Pareto active learning workbench for spin-coated film campaigns", "epal"};
    app.require_subcommand(1);
    Options o;

    auto add_campaign = [&](CLI::App* sub) { sub->add_option("--campaign", o.campaign, "Campaign file")->required(); };

    auto* init = app.add_subcommand("init", "Create a campaign file on the default grid");
    add_campaign(init);
    init->add_option("--seed", o.seed, "Campaign seed");
    init->add_option("--epsilon", o.epsilon, "Relative epsilon per objective")->check(CLI::NonNegativeNumber);
    init->add_option("--batch", o.batch, "Suggestions per step (default 3)")->check(CLI::PositiveNumber);
    init->add_option("--max-evaluations", o.max_evaluations, "Measurement budget")->check(CLI::PositiveNumber);
    init->add_flag("--force", o.force, "Overwrite an existing file");

    auto* status = app.add_subcommand("status", "Print the campaign status as JSON");
    add_campaign(status);

    auto* suggest = app.add_subcommand("suggest", "Print the next points to measure, one CSV line each");
    add_campaign(suggest);
    suggest->add_option("--batch", o.batch, "Number of points (default: campaign batch size)")->check(CLI::PositiveNumber);

    auto* ingest = app.add_subcommand("ingest", "Import measurements (point_id,hardness,inverse_elasticity,note)");
    add_campaign(ingest);
    ingest->add_option("file", o.input, "CSV file, or - for stdin");
    ingest->add_option("--surrogate", o.surrogate_seed, "Measure outstanding suggestions with the surrogate");
    ingest->add_option("--noise", o.noise_scale, "Surrogate noise multiplier")->check(CLI::NonNegativeNumber);

    auto* step = app.add_subcommand("step", "Refit, reclassify and suggest the next batch");
    add_campaign(step);

    auto* explain = app.add_subcommand("explain", "Write the fuzzy linguistic summary");
    add_campaign(explain);
    explain->add_option("--out", o.out, "Directory for report.md, statements.jsonl and prompt.txt");

    auto* embed = app.add_subcommand("embed", "Write the 2-D embedding as CSV");
    add_campaign(embed);
    embed->add_option("--out", o.out, "Output file (default: stdout)");

    auto* bench = app.add_subcommand("bench", "Run acceptance checks");
    bench->add_option("--suite", o.suite, "binh-korn, gp, classification, fls, embedding, campaign or all");

    auto* serve = app.add_subcommand("serve", "Serve the campaign over HTTP");
    add_campaign(serve);
    serve->add_option("--host", o.host, "Bind address");
    serve->add_option("--port", o.port, "Port")->check(CLI::Range(1, 65535));

    if (argc > 1 && argv[1][0] != '-') {
        bool known = false;
        for (const auto* sub : app.get_subcommands({})) known = known || sub->get_name() == argv[1];
        if (!known) {
            err << "error: unknown subcommand '" << argv[1] << "'\n\n" << app.help();
            return 2;
        }
    }
    try {
        std::vector<std::string> args;
        for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*init) return cmd_init(o, out);
        if (*status) return cmd_status(o, out);
        if (*suggest) return cmd_suggest(o, out, err);
        if (*ingest) return cmd_ingest(o, out);
        if (*step) return cmd_step(o, out);
        if (*explain) return cmd_explain(o, out);
        if (*embed) return cmd_embed(o, out);
        if (*bench) return cmd_bench(o, out);
        if (*serve) return cmd_serve(o, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace epal::cli
