#include "adret/cli.hpp"

#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "adret/evalsim.hpp"
#include "adret/index.hpp"
#include "adret/io.hpp"
#include "adret/serve.hpp"
#include "json.hpp"
#include "mix.hpp"

namespace adret::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json config_json(const PipelineConfig& c)
{
    const auto& g = c.data.gen;
    json j;
    j["seed"] = c.seed;
    j["objective"] = std::string(model::to_string(c.objective));
    j["data"] = {{"requests", c.data.requests},
                 {"next_requests", c.data.next_requests},
                 {"test_fraction", c.data.test_fraction},
                 {"ads", g.ads},
                 {"items", g.items},
                 {"queries", g.queries},
                 {"users", g.users},
                 {"taking_rate", g.taking_rate}};
    j["init"] = {{"click_threshold", c.init.click_threshold},
                 {"iv_top_k", c.init.iv.top_k ? json(*c.init.iv.top_k) : json(nullptr)},
                 {"iv_min", c.init.iv.min_iv ? json(*c.init.iv.min_iv) : json(nullptr)},
                 {"min_cos", c.init.min_cos},
                 {"max_key_fanout", c.init.max_key_fanout}};
    j["train"] = {{"learning_rate", c.hyper.learning_rate},
                  {"epochs", c.hyper.epochs},
                  {"l2", c.hyper.l2},
                  {"batch_size", c.hyper.batch_size}};
    j["index"] = {{"cap_rewrite", c.serve.cap_rewrite},
                  {"cap_select", c.serve.cap_select},
                  {"alpha", c.serve.smoothing.alpha},
                  {"beta", c.serve.smoothing.beta},
                  {"taking_rate", c.serve.taking_rate ? json(*c.serve.taking_rate) : json(nullptr)}};
    j["retrieval"] = {{"topn", c.serve.retrieval.max_results},
                      {"max_signals", c.serve.retrieval.max_signals},
                      {"min_score", c.serve.retrieval.min_score ? json(*c.serve.retrieval.min_score) : json(nullptr)}};
    j["simulate"] = {{"requests", c.sim_requests}, {"slate", c.slate}};
    return j;
}

class Stage {
public:
    Stage(std::string name, const PipelineConfig& config)
        : name_(std::move(name))
        , config_(config)
        , start_(std::chrono::steady_clock::now())
    {
        if (!fs::is_directory(config.in)) {
            throw StageError("input directory " + config.in.string() + " does not exist");
        }
    }

    fs::path input(const std::string& artifact)
    {
        inputs_[artifact] = check_upstream(config_.in, artifact);
        return config_.in / artifact;
    }

    fs::path output(const std::string& artifact)
    {
        fs::create_directories(config_.out);
        outputs_.push_back(artifact);
        return config_.out / artifact;
    }

    void finish()
    {
        json line{{"stage", name_}, {"config_sha256", config_.hash()}, {"seed", config_.seed}};
        line["inputs"] = json::object();
        for (const auto& [k, v] : inputs_) line["inputs"][k] = v;
        line["outputs"] = json::object();
        for (const auto& o : outputs_) line["outputs"][o] = file_sha256_hex(config_.out / o);
        line["duration_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        const auto path = config_.out / artifact::kManifest;
        std::string previous = fs::exists(path) ? read_file(path) : std::string();
        write_file_atomic(path, [&](std::ostream& out) { out << previous << line.dump() << '\n'; });
    }

private:
    std::string name_;
    const PipelineConfig& config_;
    std::chrono::steady_clock::time_point start_;
    std::map<std::string, std::string> inputs_;
    std::vector<std::string> outputs_;
};

int cmd_gen(const PipelineConfig& c, std::ostream& out)
{
    Stage stage("gen", c);
    auto data_cfg = c.data;
    data_cfg.seed = c.seed;
    const auto data = pipeline::make_dataset(data_cfg);
    clicklog::write_catalog(stage.output(artifact::kCatalog), data.catalog);
    clicklog::write_log(stage.output(artifact::kTrain), data.train);
    clicklog::write_log(stage.output(artifact::kTest), data.test);
    clicklog::write_log(stage.output(artifact::kNext), data.next);
    clicklog::write_sessions(stage.output(artifact::kSessions), data.sessions);
    stage.finish();
    out << "train " << data.train.size() << " test " << data.test.size() << " next " << data.next.size()
        << " sessions " << data.sessions.size() << '\n';
    return 0;
}

int cmd_init_net(const PipelineConfig& c, std::ostream& out)
{
    Stage stage("init-net", c);
    const auto catalog = clicklog::read_catalog(stage.input(artifact::kCatalog));
    const auto train = clicklog::read_log(stage.input(artifact::kTrain));
    const auto sessions = clicklog::read_sessions(stage.input(artifact::kSessions));
    network::InitReport report;
    const auto merged = network::initialize_network(train, sessions, catalog, c.init, &report);
    network::write_network(stage.output(artifact::kNetwork), merged.network);
    stage.finish();
    out << "candidates " << report.candidate_edges << " by_clicks " << report.by_clicks << " by_iv " << report.by_iv
        << " by_session " << report.by_session << '\n'
        << "rewriting " << merged.network.rewriting().size() << " selecting " << merged.network.selecting().size()
        << " dropped_keys " << merged.dropped_keys.size() << '\n';
    return 0;
}

int cmd_train(const PipelineConfig& c, std::ostream& out)
{
    Stage stage("train", c);
    const auto net = network::read_network(stage.input(artifact::kNetwork));
    const auto train = clicklog::read_log(stage.input(artifact::kTrain));
    pipeline::TrainConfig tc{c.init, c.hyper, c.objective, {}};
    tc.hyper.seed = detail::mix64(c.seed, 31);
    const auto t = pipeline::train_model(net, train, tc);
    model::write_model(stage.output(artifact::kModel), t.model);
    stage.finish();
    out << "samples " << t.train_samples.samples.size() << " unreachable " << t.train_samples.dropped << '\n';
    out << "epoch 0 loss " << t.report.initial_loss << '\n';
    for (std::size_t e = 0; e < t.report.epoch_loss.size(); ++e) {
        out << "epoch " << e + 1 << " loss " << t.report.epoch_loss[e] << '\n';
    }
    return 0;
}

int cmd_build_index(const PipelineConfig& c, std::ostream& out)
{
    Stage stage("build-index", c);
    const auto net = network::read_network(stage.input(artifact::kNetwork));
    const auto model = model::read_model(stage.input(artifact::kModel));
    const auto catalog = clicklog::read_catalog(stage.input(artifact::kCatalog));
    const auto train = clicklog::read_log(stage.input(artifact::kTrain));
    const auto rw = index::build_rewriting_index(net, model, c.serve.cap_rewrite);
    const auto sel = index::build_selecting_index(net, model, c.serve.cap_select);
    const auto pricer = pricing::Pricer::from_log(catalog, train, c.serve.smoothing, c.serve.taking_rate);
    index::serialize_index(rw, stage.output(artifact::kRewriteIndex));
    index::serialize_index(sel, stage.output(artifact::kSelectIndex));
    pricing::write_pricing(stage.output(artifact::kPricing), pricer);
    stage.finish();
    out << "rewriting triggers " << rw.size() << " entries " << rw.entry_count() << '\n'
        << "selecting triggers " << sel.size() << " entries " << sel.entry_count() << '\n';
    return 0;
}

int cmd_eval(const PipelineConfig& c, std::ostream& out)
{
    Stage stage("eval", c);
    const auto net = network::read_network(stage.input(artifact::kNetwork));
    const auto model = model::read_model(stage.input(artifact::kModel));
    const auto train = pipeline::samples_for(net, clicklog::read_log(stage.input(artifact::kTrain)), c.objective);
    const auto test = pipeline::samples_for(net, clicklog::read_log(stage.input(artifact::kTest)), c.objective);
    const auto next = pipeline::samples_for(net, clicklog::read_log(stage.input(artifact::kNext)), c.objective);
    const std::vector<std::pair<std::string, evalsim::SampleScorer>> scorers{
        {"lr-" + std::string(model::to_string(model.objective())), evalsim::lr_scorer(model, net)},
        {"click-count", evalsim::click_count_scorer(net)}};
    const auto rows = evalsim::offline_eval(scorers, {train.samples, test.samples, next.samples});
    stage.finish();
    evalsim::print_auc_table(out, rows);
    for (const auto& r : rows) {
        json line{{"model", r.name}};
        const char* cols[] = {"train", "test", "next"};
        for (int i = 0; i < 3; ++i) line[cols[i]] = r.auc[i] ? json(*r.auc[i]) : json(nullptr);
        out << line.dump() << '\n';
    }
    return 0;
}

int cmd_simulate(const PipelineConfig& c, std::ostream& out)
{
    Stage stage("simulate", c);
    const auto catalog = clicklog::read_catalog(stage.input(artifact::kCatalog));
    const auto net = network::read_network(stage.input(artifact::kNetwork));
    const auto next = clicklog::read_log(stage.input(artifact::kNext));
    auto retrieval_cfg = c.serve.retrieval;
    retrieval_cfg.max_signals = std::max<std::size_t>(retrieval_cfg.max_signals, catalog.config.max_signals);
    stage.input(artifact::kModel);
    stage.input(artifact::kRewriteIndex);
    stage.input(artifact::kSelectIndex);
    stage.input(artifact::kPricing);
    const auto snapshot = load_snapshot(c.in, retrieval_cfg);
    const evalsim::ClickCountEngine baseline(net, snapshot->rewriting->cap(), snapshot->selecting->cap(),
                                             snapshot->pricer, retrieval_cfg);
    const clicklog::UserOracle oracle(catalog, detail::mix64(c.seed, 41));
    evalsim::SimConfig sim;
    sim.slate = c.slate;
    const auto after = pipeline::following(next, {}, catalog.config.session_gap);
    sim.start_tick = after.start_tick;
    sim.first_request_id = after.first_request_id;
    const auto report = evalsim::simulate_online([&](const auto& r) { return snapshot->retrieve(r); },
                                                 [&](const auto& r) { return baseline.retrieve(r); }, catalog, oracle,
                                                 c.sim_requests, detail::mix64(c.seed, 42), sim);
    stage.finish();
    evalsim::print_sim_table(out, report);
    out << json{{"engine", "model"}, {"metrics", json::parse(evalsim::to_json(report.engine.metrics))}}.dump() << '\n';
    out << json{{"engine", "baseline"}, {"metrics", json::parse(evalsim::to_json(report.baseline.metrics))}}.dump()
        << '\n';
    out << json{{"lift", {{"ctr", report.lift.ctr}, {"rpm", report.lift.rpm}, {"pr", report.lift.pr}}}}.dump() << '\n';
    return 0;
}

volatile std::sig_atomic_t g_reload = 0;
volatile std::sig_atomic_t g_stop = 0;

extern "C" void on_signal(int sig)
{
    if (sig == SIGHUP) {
        g_reload = 1;
    } else {
        g_stop = 1;
    }
}

int cmd_serve(const PipelineConfig& c, std::ostream& out, std::ostream& err)
{
    for (const char* a : {artifact::kModel, artifact::kRewriteIndex, artifact::kSelectIndex, artifact::kPricing}) {
        check_upstream(c.in, a);
    }
    retrieval::SnapshotHolder holder(load_snapshot(c.in, c.serve.retrieval));
    serve::LineServer server([&](std::string_view line) { return serve::handle_line(line, holder); }, c.host, c.port);

    struct sigaction sa {};
    sa.sa_handler = on_signal;
    sigemptyset(&sa.sa_mask);
    sigaction(SIGHUP, &sa, nullptr);
    sigaction(SIGINT, &sa, nullptr);
    sigaction(SIGTERM, &sa, nullptr);

    out << "listening on " << c.host << ':' << server.port() << std::endl;
    server.run([] { return g_stop == 0; },
               [&] {
                   if (g_reload == 0) return;
                   g_reload = 0;
                   try {
                       holder.swap(load_snapshot(c.in, c.serve.retrieval));
                       err << "reloaded snapshot" << std::endl;
                   } catch (const std::exception& e) {
                       err << "reload failed, keeping the current snapshot: " << e.what() << std::endl;
                   }
               });
    return 0;
}

int cmd_dump_index(const fs::path& file, std::ostream& out)
{
    index::dump_index(out, index::load_index(file));
    return 0;
}

}  // namespace

void PipelineConfig::validate() const
{
    if (serve.cap_rewrite < 1 || serve.cap_select < 1 || serve.retrieval.max_signals < 1 ||
        serve.retrieval.max_results < 1 || slate < 1) {
        throw ConfigError("caps, topn, max-signals and slate must all be at least 1");
    }
    if (!(init.min_cos > 0.0 && init.min_cos <= 1.0)) {
        throw ConfigError("min-cos must lie in (0,1]");
    }
    if (!(data.test_fraction >= 0.0 && data.test_fraction < 1.0)) {
        throw ConfigError("test-fraction must lie in [0,1)");
    }
    if (!(serve.smoothing.alpha >= 0.0 && serve.smoothing.beta >= 0.0)) {
        throw ConfigError("alpha and beta must be nonnegative");
    }
    if (serve.taking_rate && !(*serve.taking_rate > 0.0 && *serve.taking_rate < 1.0)) {
        throw ConfigError("platform-taking-rate must lie in (0,1)");
    }
    data.gen.validate();
}

std::string PipelineConfig::hash() const { return sha256_hex(config_json(*this).dump()); }

std::string check_upstream(const fs::path& dir, const std::string& name)
{
    const auto path = dir / name;
    std::optional<std::string> expected;
    const auto manifest = dir / artifact::kManifest;
    if (fs::exists(manifest)) {
        std::istringstream lines(read_file(manifest));
        std::string line;
        while (std::getline(lines, line)) {
            if (line.empty()) continue;
            const auto j = json::parse(line, nullptr, false);
            if (j.is_object() && j.contains("outputs") && j["outputs"].contains(name)) {
                expected = j["outputs"][name].get<std::string>();
            }
        }
    }
    if (!fs::exists(path)) {
        throw StageError("missing upstream artifact " + path.string() + " (expected sha256 " +
                         expected.value_or("unknown") + ", found none)");
    }
    const auto found = file_sha256_hex(path);
    if (expected && *expected != found) {
        throw StageError("upstream artifact " + path.string() + " does not match its manifest record: expected sha256 " +
                         *expected + ", found " + found);
    }
    return found;
}

std::shared_ptr<const retrieval::Snapshot> load_snapshot(const fs::path& dir, const retrieval::RetrievalConfig& config)
{
    const auto model_bytes = read_file(dir / artifact::kModel);
    std::istringstream model_in(model_bytes);
    auto snap = std::make_shared<retrieval::Snapshot>();
    snap->model = std::make_shared<const model::LrModel>(model::read_model(model_in));
    snap->rewriting = std::make_shared<const index::InvertedIndex>(index::load_index(dir / artifact::kRewriteIndex));
    snap->selecting = std::make_shared<const index::InvertedIndex>(index::load_index(dir / artifact::kSelectIndex));
    snap->pricer = std::make_shared<const pricing::Pricer>(pricing::read_pricing(dir / artifact::kPricing));
    snap->config = config;
    const auto id = fingerprint64(model_bytes);
    for (const auto* idx : {snap->rewriting.get(), snap->selecting.get()}) {
        if (idx->meta().model_id != id) {
            std::ostringstream msg;
            msg << std::hex << to_string(idx->kind()) << " index was built from model " << idx->meta().model_id
                << ", found model " << id;
            throw StageError(msg.str());
        }
    }
    if (snap->rewriting->kind() != index::IndexKind::Rewriting || snap->selecting->kind() != index::IndexKind::Selecting) {
        throw StageError("index files hold the wrong index kinds");
    }
    return snap;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    PipelineConfig c;
    CLI::App app{"Hierarchical-network ad retrieval pipeline"};
    app.set_config("--config", "", "INI config file; command-line flags take precedence");
    app.require_subcommand(1);
    app.fallthrough();

    std::string objective = "ctr";
    app.add_option("--in", c.in, "Input directory")->capture_default_str();
    app.add_option("--out", c.out, "Output directory")->capture_default_str();
    app.add_option("--seed", c.seed, "Master seed")->capture_default_str();
    app.add_option("--objective", objective, "Training objective")->check(CLI::IsMember({"ctr", "rpm"}))->capture_default_str();
    app.add_option("--cap-rewrite", c.serve.cap_rewrite, "Rewriting posting list cap")->capture_default_str();
    app.add_option("--cap-select", c.serve.cap_select, "Ad-selecting posting list cap")->capture_default_str();
    app.add_option("--topn", c.serve.retrieval.max_results, "Largest n a request may ask for")->capture_default_str();
    app.add_option("--max-signals", c.serve.retrieval.max_signals, "Signals per request")->capture_default_str();
    double min_score = 0.0;
    auto* min_score_opt = app.add_option("--min-score", min_score, "Drop ads scoring below this");

    auto* gen = app.add_subcommand("gen", "Generate the synthetic catalog, logs and sessions");
    gen->add_option("--requests", c.data.requests, "Training-period requests")->capture_default_str();
    gen->add_option("--next-requests", c.data.next_requests, "Next-period requests")->capture_default_str();
    gen->add_option("--test-fraction", c.data.test_fraction, "Held-out share of training requests")->capture_default_str();
    gen->add_option("--ads", c.data.gen.ads)->capture_default_str();
    gen->add_option("--items", c.data.gen.items)->capture_default_str();
    gen->add_option("--queries", c.data.gen.queries)->capture_default_str();
    gen->add_option("--users", c.data.gen.users)->capture_default_str();
    gen->add_option("--taking-rate", c.data.gen.taking_rate)->capture_default_str();

    auto* init = app.add_subcommand("init-net", "Initialize the signal/key/ad network");
    init->add_option("--click-threshold", c.init.click_threshold)->capture_default_str();
    std::size_t iv_top_k = *c.init.iv.top_k;
    double iv_min = 0.0;
    init->add_option("--iv-top-k", iv_top_k, "Edges kept per source by information value (0 disables)")->capture_default_str();
    auto* iv_min_opt = init->add_option("--iv-min", iv_min, "Information value floor");
    init->add_option("--min-cos", c.init.min_cos, "Session cosine threshold")->capture_default_str();
    init->add_option("--max-key-fanout", c.init.max_key_fanout, "Drop keys linking to more ads")->capture_default_str();

    auto* train = app.add_subcommand("train", "Train the edge-weight model");
    train->add_option("--learning-rate", c.hyper.learning_rate)->capture_default_str();
    train->add_option("--epochs", c.hyper.epochs)->capture_default_str();
    train->add_option("--l2", c.hyper.l2)->capture_default_str();
    train->add_option("--batch-size", c.hyper.batch_size)->capture_default_str();

    auto* build = app.add_subcommand("build-index", "Build the inverted indexes and the pricing table");
    double taking_rate = 0.0;
    build->add_option("--alpha", c.serve.smoothing.alpha, "CVR prior trades")->capture_default_str();
    build->add_option("--beta", c.serve.smoothing.beta, "CVR prior non-trades")->capture_default_str();
    auto* taking_rate_opt = build->add_option("--platform-taking-rate", taking_rate, "Override every ad's taking rate");

    auto* eval = app.add_subcommand("eval", "Train/test/next AUC table");

    auto* sim = app.add_subcommand("simulate", "Paired online simulation against the click-count baseline");
    sim->add_option("--requests", c.sim_requests)->capture_default_str();
    sim->add_option("--slate", c.slate, "Ads presented per request")->capture_default_str();

    auto* serve_cmd = app.add_subcommand("serve", "Answer retrieval requests over TCP");
    serve_cmd->add_option("--host", c.host)->capture_default_str();
    serve_cmd->add_option("--port", c.port)->capture_default_str();

    fs::path dump_file;
    auto* dump = app.add_subcommand("dump-index", "Print an index file, one line per entry");
    dump->add_option("file", dump_file, "Index file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        c.objective = *model::objective_from_string(objective);
        c.init.iv.top_k = iv_top_k == 0 ? std::nullopt : std::optional(iv_top_k);
        if (*iv_min_opt) c.init.iv.min_iv = iv_min;
        if (*min_score_opt) c.serve.retrieval.min_score = min_score;
        if (*taking_rate_opt) c.serve.taking_rate = taking_rate;
        c.validate();

        if (gen->parsed()) return cmd_gen(c, out);
        if (init->parsed()) return cmd_init_net(c, out);
        if (train->parsed()) return cmd_train(c, out);
        if (build->parsed()) return cmd_build_index(c, out);
        if (eval->parsed()) return cmd_eval(c, out);
        if (sim->parsed()) return cmd_simulate(c, out);
        if (serve_cmd->parsed()) return cmd_serve(c, out, err);
        if (dump->parsed()) return cmd_dump_index(dump_file, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace adret::cli
