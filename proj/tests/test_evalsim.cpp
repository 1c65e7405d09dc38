#include <random>
#include <sstream>

#include "adret/error.hpp"
#include "adret/evalsim.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace adret;
using namespace adret::evalsim;
using testing::node;

namespace {

clicklog::Catalog small_catalog()
{
    clicklog::GenConfig gen;
    gen.ads = 30;
    gen.items = 60;
    gen.queries = 12;
    gen.users = 200;
    return clicklog::generate_catalog(gen, 17);
}

// Answers with the first ad of the request's category listed in the catalog.
Engine category_engine(const clicklog::Catalog& catalog, const pricing::Pricer& pricer)
{
    return [&catalog, &pricer](const RetrievalRequest& req) {
        std::vector<RetrievalResult> out;
        const EntityId q = req.signals.front().id;
        for (const auto& ad : catalog.ads) {
            if (ad.category == catalog.queries.at(q).category) {
                out.push_back({ad.id, 0.5, {}, pricer.price(ad.id)});
                if (out.size() == req.n) break;
            }
        }
        return out;
    };
}

}  // namespace

TEST_CASE("random scores give chance AUC, perfect scores give 1")
{
    std::mt19937_64 rng(1);
    std::vector<model::TrainingSample> samples(10000);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        samples[i].label = static_cast<int>(i % 2);
        samples[i].request_id = i;
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> noise(samples.size());
    for (auto& x : noise) x = u(rng);
    const SampleScorer random = [&](const model::TrainingSample& s) { return noise[s.request_id]; };
    const SampleScorer perfect = [](const model::TrainingSample& s) { return static_cast<double>(s.label); };
    CHECK(std::abs(*split_auc(random, samples) - 0.5) <= 0.02);
    CHECK(*split_auc(perfect, samples) == 1.0);

    std::vector<model::TrainingSample> one_class(5);
    CHECK_FALSE(split_auc(perfect, one_class).has_value());

    const std::vector<std::pair<std::string, SampleScorer>> scorers{{"random", random}, {"perfect", perfect}};
    const auto rows = offline_eval(scorers, {samples, samples, one_class});
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].auc[0] == 1.0);
    CHECK_FALSE(rows[1].auc[2].has_value());
    std::ostringstream table;
    print_auc_table(table, rows);
    CHECK(table.str().find("perfect") != std::string::npos);
    CHECK(table.str().find("n/a") != std::string::npos);
}

TEST_CASE("click-count scorer sums edge clicks")
{
    const auto net = testing::make_net({{"S:query:1", "K:item:2", 3, 9}, {"K:item:2", "A:0", 4, 9}});
    model::TrainingSample s;
    s.ad = node("A:0");
    s.rewriting_edges = {testing::edge("S:query:1", "K:item:2")};
    s.selecting_edges = {testing::edge("K:item:2", "A:0")};
    CHECK(click_count_scorer(net)(s) == 7.0);
}

TEST_CASE("spearman")
{
    const std::vector<double> a{1, 2, 3, 4}, b{10, 20, 30, 40}, c{4, 3, 2, 1}, t{1, 1, 2, 3};
    CHECK(spearman(a, b) == doctest::Approx(1.0));
    CHECK(spearman(a, c) == doctest::Approx(-1.0));
    CHECK(spearman(a, t) == doctest::Approx(0.9486832980505138));
    const std::vector<double> flat{2, 2, 2, 2};
    CHECK_THROWS_AS(spearman(a, flat), DomainError);
}

TEST_CASE("lift")
{
    CHECK(lift(1.2, 1.0) == doctest::Approx(0.2));
    CHECK(lift(0.0, 0.0) == 0.0);
    CHECK(std::isinf(lift(1.0, 0.0)));
}

TEST_CASE("baseline engine")
{
    SUBCASE("single path picks the same ad as the model engine")
    {
        const auto net = testing::make_net({{"S:query:1", "K:query:1", 2, 20}, {"K:query:1", "A:4", 2, 20}});
        std::mt19937_64 rng(2);
        const auto m = testing::random_model(net, rng);
        const auto rw = index::build_rewriting_index(net, m);
        const auto sel = index::build_selecting_index(net, m);
        const RetrievalRequest req{{{SignalKind::Query, 1}}, 5};
        const auto model_out = retrieval::retrieve(req, rw, sel, m, nullptr);
        const auto base_out = baseline_retrieve(net, req, 100, 300);
        REQUIRE(model_out.size() == 1);
        REQUIRE(base_out.size() == 1);
        CHECK(base_out[0].ad_id == model_out[0].ad_id);
        CHECK(base_out[0].score == 4.0);
    }
    SUBCASE("caps and ranking by clicks")
    {
        std::mt19937_64 rng(3);
        const auto net = testing::random_network(rng, 800, 6, 10, 80);
        const ClickCountEngine engine(net, 3, 5);
        CHECK(engine.rewriting().cap() == 3);
        CHECK(engine.selecting().cap() == 5);
        for (const auto* idx : {&engine.rewriting(), &engine.selecting()}) {
            for (const auto* list : idx->sorted_lists()) {
                CHECK(list->entries.size() <= idx->cap());
                for (std::size_t i = 0; i < list->entries.size(); ++i) {
                    CHECK(list->entries[i].weight == static_cast<double>(list->entries[i].stats.clicks));
                }
            }
        }
        for (int r = 0; r < 20; ++r) {
            const RetrievalRequest req{testing::random_signals(rng, 4, 6), 50};
            retrieval::RetrievalStats stats;
            const auto out = engine.retrieve(req, &stats);
            CHECK(stats.candidates_examined <= 4 * 3 * 5);
            const auto again = engine.retrieve(req);
            REQUIRE(again.size() == out.size());
            for (std::size_t i = 0; i < out.size(); ++i) CHECK(again[i].ad_id == out[i].ad_id);
            for (std::size_t i = 1; i < out.size(); ++i) CHECK(out[i - 1].score >= out[i].score);
        }
    }
}

TEST_CASE("a silent engine presents nothing")
{
    const auto catalog = small_catalog();
    const clicklog::UserOracle oracle(catalog, 5);
    const pricing::Pricer pricer({}, {});
    const Engine silent = [](const RetrievalRequest&) { return std::vector<RetrievalResult>{}; };
    const auto report = simulate_online(silent, category_engine(catalog, pricer), catalog, oracle, 500, 6);
    CHECK(report.engine.metrics.pr == 0.0);
    CHECK(report.engine.metrics.ctr == 0.0);
    CHECK(report.engine.metrics.rpm == 0.0);
    CHECK(report.engine.metrics.request_counts == 500);
    CHECK(report.baseline.metrics.pr == 1.0);
    CHECK(report.lift.pr == -1.0);
    CHECK(check_identities(report.engine).empty());
    CHECK(check_identities(report.baseline).empty());
}

TEST_CASE("identical engines have zero lift and runs are reproducible")
{
    const auto catalog = small_catalog();
    const clicklog::UserOracle oracle(catalog, 5);
    std::vector<pricing::AdCommerceStats> stats;
    for (const auto& ad : catalog.ads) stats.push_back({1, 20, ad.item_price, ad.taking_rate});
    const pricing::Pricer pricer(stats, {});
    const auto engine = category_engine(catalog, pricer);
    SimConfig cfg;
    cfg.slate = 2;
    const auto a = simulate_online(engine, engine, catalog, oracle, 2000, 8, cfg);
    CHECK(a.lift.ctr == 0.0);
    CHECK(a.lift.rpm == 0.0);
    CHECK(a.lift.pr == 0.0);
    CHECK(a.engine.metrics.click_counts > 0);
    CHECK(a.engine.metrics.present_counts > 2000);
    CHECK(a.engine.metrics.present_counts <= 4000);
    CHECK(check_identities(a.engine).empty());

    const auto b = simulate_online(engine, engine, catalog, oracle, 2000, 8, cfg);
    REQUIRE(a.engine.trace.size() == b.engine.trace.size());
    for (std::size_t i = 0; i < a.engine.trace.size(); ++i) {
        CHECK(a.engine.trace[i].request_id == b.engine.trace[i].request_id);
        CHECK(a.engine.trace[i].ad_id == b.engine.trace[i].ad_id);
        CHECK(a.engine.trace[i].clicked == b.engine.trace[i].clicked);
    }
    CHECK(a.engine.metrics.revenue == b.engine.metrics.revenue);

    CHECK_THROWS_AS(simulate_online(engine, engine, catalog, oracle, 0, 8), DomainError);
    cfg.slate = 0;
    CHECK_THROWS_AS(simulate_online(engine, engine, catalog, oracle, 10, 8, cfg), DomainError);
}

TEST_CASE("identity checker flags broken metrics")
{
    SimRun run;
    run.metrics.click_counts = 2;
    run.metrics.present_counts = 10;
    run.metrics.request_counts = 10;
    run.metrics.presented_requests = 10;
    run.metrics.revenue = 3.0;
    run.trace = {{0, 1, 1.0, true}, {1, 1, 2.0, true}};
    for (EntityId r = 2; r < 10; ++r) run.trace.push_back({r, 1, 5.0, false});
    run.metrics.finalize();
    CHECK(run.metrics.ctr == 0.2);
    CHECK(run.metrics.rpm == doctest::Approx(300.0));
    CHECK(check_identities(run).empty());
    run.metrics.revenue = 4.0;
    CHECK_FALSE(check_identities(run).empty());
    run.metrics.revenue = 3.0;
    run.metrics.presented_requests = 11;
    run.metrics.finalize();
    CHECK_FALSE(check_identities(run).empty());
    CHECK(to_json(run.metrics).find("\"click_counts\":2") != std::string::npos);
}
