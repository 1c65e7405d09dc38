#include "adret/pipeline.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include "adret/error.hpp"
#include "mix.hpp"

namespace adret::pipeline {

bool is_test_request(EntityId request_id, std::uint64_t seed, double fraction) noexcept
{
    return detail::unit_interval(detail::mix64(seed, 0x7e57, request_id)) < fraction;
}

std::vector<clicklog::Session> strip_ad_clicks(std::span<const clicklog::Session> sessions,
                                               std::span<const clicklog::ImpressionRecord> held_out)
{
    std::set<std::tuple<EntityId, std::int64_t, EntityId>> drop;
    for (const auto& r : held_out) {
        if (r.clicked) drop.emplace(r.session_id, r.ts, r.ad_id);
    }
    std::vector<clicklog::Session> out(sessions.begin(), sessions.end());
    for (auto& s : out) {
        std::erase_if(s.actions, [&](const clicklog::Action& a) {
            return a.kind == clicklog::ActionKind::ClickAd && drop.count({s.session_id, a.ts, a.entity}) != 0;
        });
    }
    return out;
}

void split_records(std::span<const clicklog::ImpressionRecord> period, std::uint64_t seed, double fraction,
                   std::vector<clicklog::ImpressionRecord>& train, std::vector<clicklog::ImpressionRecord>& test)
{
    for (const auto& r : period) {
        (is_test_request(r.request_id, seed, fraction) ? test : train).push_back(r);
    }
}

clicklog::LogOptions following(std::span<const clicklog::ImpressionRecord> period,
                               std::span<const clicklog::Session> sessions, std::int64_t session_gap)
{
    clicklog::LogOptions opt;
    for (const auto& r : period) {
        opt.start_tick = std::max(opt.start_tick, r.ts);
        opt.first_request_id = std::max(opt.first_request_id, r.request_id + 1);
    }
    for (const auto& s : sessions) {
        opt.first_session_id = std::max(opt.first_session_id, s.session_id + 1);
        for (const auto& a : s.actions) opt.start_tick = std::max(opt.start_tick, a.ts);
    }
    opt.start_tick += 2 * session_gap;
    return opt;
}

Dataset make_dataset(const DataConfig& config)
{
    if (!(config.test_fraction >= 0.0 && config.test_fraction < 1.0)) {
        throw ConfigError("test_fraction must lie in [0,1)");
    }
    Dataset data;
    data.catalog = clicklog::generate_catalog(config.gen, detail::mix64(config.seed, 11));
    auto period = clicklog::generate_log(data.catalog, config.requests, detail::mix64(config.seed, 12));
    split_records(period.records, config.seed, config.test_fraction, data.train, data.test);
    data.sessions = strip_ad_clicks(period.sessions, data.test);
    if (config.next_requests > 0) {
        auto next = clicklog::generate_log(data.catalog, config.next_requests, detail::mix64(config.seed, 13),
                                           following(period.records, period.sessions, config.gen.session_gap));
        data.next = std::move(next.records);
    }
    return data;
}

model::ExtractResult samples_for(const network::HierNetwork& net, std::span<const clicklog::ImpressionRecord> log,
                                 model::Objective objective)
{
    auto result = model::extract_samples(net, log);
    model::weight_samples(result.samples, objective);
    return result;
}

Trained train_model(const network::HierNetwork& net, std::span<const clicklog::ImpressionRecord> log,
                    const TrainConfig& config)
{
    Trained t;
    t.net = net;
    t.train_samples = samples_for(t.net, log, config.objective);
    auto dict = model::FeatureDictionary::build(t.net);
    const auto encoded = model::encode(t.train_samples.samples, t.net, dict, config.features);
    t.model = model::train_lr(encoded, std::move(dict), config.objective, config.hyper, config.features, &t.report);
    return t;
}

Trained train_pipeline(const Dataset& data, const TrainConfig& config)
{
    auto merged = network::initialize_network(data.train, data.sessions, data.catalog, config.init);
    auto t = train_model(merged.network, data.train, config);
    t.dropped_keys = std::move(merged.dropped_keys);
    return t;
}

std::shared_ptr<const retrieval::Snapshot> build_snapshot(const network::HierNetwork& net,
                                                          std::shared_ptr<const model::LrModel> model,
                                                          std::shared_ptr<const pricing::Pricer> pricer,
                                                          const ServeConfig& config)
{
    auto snap = std::make_shared<retrieval::Snapshot>();
    snap->rewriting = std::make_shared<const index::InvertedIndex>(
        index::build_rewriting_index(net, *model, config.cap_rewrite));
    snap->selecting = std::make_shared<const index::InvertedIndex>(
        index::build_selecting_index(net, *model, config.cap_select));
    snap->model = std::move(model);
    snap->pricer = std::move(pricer);
    snap->config = config.retrieval;
    return snap;
}

}  // namespace adret::pipeline
