#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "runner/runs.hpp"

namespace {

using namespace slide;
using namespace slide::runner;

struct Overrides {
    std::string config_path;
    int workers = 0;
    std::int64_t seed = -1;
    std::string out_dir;
};

RunConfig resolve(const Overrides& o) {
    RunConfig c = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
    if (o.workers > 0) c.train.workers = o.workers;
    if (o.seed >= 0) c.train.seed = static_cast<std::uint64_t>(o.seed);
    if (!o.out_dir.empty()) c.out_dir = o.out_dir;
    apply_environment(c);
    validate(c);
    return c;
}

template <typename Rows>
void emit_csv(const RunConfig& c, const std::string& name, const Rows& rows) {
    std::filesystem::create_directories(c.out_dir);
    const auto path = c.out_dir / name;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_csv(out, c, rows);
    write_csv(std::cout, c, rows);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse training with hash-table neuron sampling"};
    app.require_subcommand(1);
    Overrides o;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "TOML run configuration")->check(CLI::ExistingFile);
        sub->add_option("--workers", o.workers, "Worker threads (SLIDE_THREADS takes precedence)")
            ->check(CLI::PositiveNumber);
        sub->add_option("--seed", o.seed, "Seed for weights, hashing and batch order")->check(CLI::NonNegativeNumber);
        sub->add_option("--out", o.out_dir, "Output directory");
    };
    auto* train = app.add_subcommand("train", "Train and write train.csv plus model.slde");
    auto* samplers = app.add_subcommand("bench-samplers", "Time the sampling strategies");
    auto* insertion = app.add_subcommand("bench-insertion", "Time FIFO and Reservoir table builds");
    auto* scaling = app.add_subcommand("bench-scaling", "Train at several worker counts");
    for (auto* sub : {train, samplers, insertion, scaling}) add_common(sub);
    auto* print_config = app.add_subcommand("print-config", "Print the resolved configuration as TOML");
    add_common(print_config);

    CLI11_PARSE(app, argc, argv);

    try {
        const RunConfig c = resolve(o);
        if (train->parsed()) {
            const auto r = run_train(c);
            const auto& last = r.final_row();
            std::cout << "iterations=" << r.iterations << " train_seconds=" << r.train_seconds
                      << " test_p1=" << last.test_p1 << " test_p5=" << last.test_p5 << '\n'
                      << "wrote " << r.csv_path.string();
            if (!r.checkpoint_path.empty()) std::cout << " and " << r.checkpoint_path.string();
            std::cout << '\n';
        } else if (samplers->parsed()) {
            emit_csv(c, "bench_samplers.csv", run_bench_samplers(c));
        } else if (insertion->parsed()) {
            emit_csv(c, "bench_insertion.csv", run_bench_insertion(c));
        } else if (scaling->parsed()) {
            emit_csv(c, "bench_scaling.csv", run_scaling(c));
        } else if (print_config->parsed()) {
            std::cout << to_toml(c);
        }
    } catch (const DivergenceError& e) {
        std::cerr << "slide: diverged: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "slide: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
