#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "cfomimo/harness.hpp"

namespace {

void print_error(const std::string& kind, const std::string& message, const std::string& context) {
    nlohmann::ordered_json j;
    j["error"] = {{"kind", kind}, {"message", message}, {"context", context}};
    std::cerr << j.dump() << std::endl;
}

struct RunFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    std::optional<int> workers;
    std::optional<std::string> out;
    std::optional<std::string> format;
};

void add_run_flags(CLI::App* sub, RunFlags& f) {
    sub->add_option("--config", f.config, "JSON file with experiment overrides")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "master seed");
    sub->add_option("--trials", f.trials, "Monte Carlo trials per grid point");
    sub->add_option("--workers", f.workers, "worker threads (0: CFOMIMO_WORKERS or hardware)");
    sub->add_option("--out", f.out, "output path, '-' for stdout");
    sub->add_option("--format", f.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
}

cfomimo::ExperimentSpec resolve(const std::string& id, const RunFlags& f) {
    auto s = cfomimo::load_spec(id, f.config);
    if (f.seed) s.seed = *f.seed;
    if (f.trials) s.trials = *f.trials;
    if (f.workers) s.workers = *f.workers;
    if (f.out) s.out = *f.out;
    if (f.format) s.format = *f.format;
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo experiments for CFO estimation in uplink massive MIMO"};
    app.require_subcommand(1);

    RunFlags flags;
    std::string selected;
    for (const auto& id : cfomimo::experiment_ids()) {
        auto* sub = app.add_subcommand(id, "run the " + id + " experiment");
        add_run_flags(sub, flags);
        sub->callback([&selected, id] { selected = id; });
    }

    std::string vc_experiment, vc_config;
    auto* vc = app.add_subcommand("validate-config", "check an experiment config without running it");
    vc->add_option("experiment", vc_experiment, "experiment id")->required();
    vc->add_option("--config", vc_config, "JSON config file")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("UsageError", e.what(), "");
        return 2;
    }

    try {
        if (vc->parsed()) {
            auto s = cfomimo::load_spec(vc_experiment, vc_config);
            cfomimo::validate_spec(s);
            std::cout << "{\"ok\":true,\"experiment\":\"" << s.experiment << "\"}" << std::endl;
            return 0;
        }
        const auto spec = resolve(selected, flags);
        const auto rows = cfomimo::run_experiment(spec);
        cfomimo::emit_results(rows, spec.format, spec.out);
        return 0;
    } catch (const cfomimo::Error& e) {
        print_error(e.kind(), e.what(), e.context());
    } catch (const std::exception& e) {
        print_error("InternalError", e.what(), "");
    }
    return 1;
}
