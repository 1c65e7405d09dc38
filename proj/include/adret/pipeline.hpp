#pragma once

// End-to-end wiring shared by the command-line stages and the experiments:
// seeded dataset with train/test/next splits, network + model training, and
// the served snapshot.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "adret/clicklog.hpp"
#include "adret/index.hpp"
#include "adret/model.hpp"
#include "adret/network.hpp"
#include "adret/pricing.hpp"
#include "adret/retrieval.hpp"

namespace adret::pipeline {

struct DataConfig {
    clicklog::GenConfig gen;
    std::uint64_t requests = 100000;    ///< training period
    double test_fraction = 0.05;        ///< requests held out of the training period
    std::uint64_t next_requests = 20000;  ///< following period
    std::uint64_t seed = 42;
};

struct Dataset {
    clicklog::Catalog catalog;
    std::vector<clicklog::ImpressionRecord> train;
    std::vector<clicklog::ImpressionRecord> test;
    std::vector<clicklog::ImpressionRecord> next;
    /// Training-period sessions without the ad clicks of held-out requests.
    std::vector<clicklog::Session> sessions;
};

/// Hash split on the request id, so every impression of a request lands in the same split.
bool is_test_request(EntityId request_id, std::uint64_t seed, double fraction) noexcept;

/// Removes the ClickAd actions produced by `held_out` clicks.
std::vector<clicklog::Session> strip_ad_clicks(std::span<const clicklog::Session> sessions,
                                               std::span<const clicklog::ImpressionRecord> held_out);

Dataset make_dataset(const DataConfig& config);

/// Training period split into (train, test).
void split_records(std::span<const clicklog::ImpressionRecord> period, std::uint64_t seed, double fraction,
                   std::vector<clicklog::ImpressionRecord>& train, std::vector<clicklog::ImpressionRecord>& test);

/// Start tick and first ids for a log that follows `period`.
clicklog::LogOptions following(std::span<const clicklog::ImpressionRecord> period,
                               std::span<const clicklog::Session> sessions, std::int64_t session_gap);

struct TrainConfig {
    network::InitConfig init;
    model::Hyper hyper;
    model::Objective objective = model::Objective::Ctr;
    model::FeatureOptions features;
};

/// Extracted and weighted samples.
model::ExtractResult samples_for(const network::HierNetwork& net, std::span<const clicklog::ImpressionRecord> log,
                                 model::Objective objective);

struct Trained {
    network::HierNetwork net;
    std::vector<NodeId> dropped_keys;
    model::ExtractResult train_samples;
    model::LrModel model;
    model::TrainReport report;
};

Trained train_model(const network::HierNetwork& net, std::span<const clicklog::ImpressionRecord> log,
                    const TrainConfig& config);

Trained train_pipeline(const Dataset& data, const TrainConfig& config);

struct ServeConfig {
    std::size_t cap_rewrite = index::kDefaultRewriteCap;
    std::size_t cap_select = index::kDefaultSelectCap;
    pricing::Smoothing smoothing;
    std::optional<double> taking_rate;
    retrieval::RetrievalConfig retrieval;
};

std::shared_ptr<const retrieval::Snapshot> build_snapshot(const network::HierNetwork& net,
                                                          std::shared_ptr<const model::LrModel> model,
                                                          std::shared_ptr<const pricing::Pricer> pricer,
                                                          const ServeConfig& config);

}  // namespace adret::pipeline
