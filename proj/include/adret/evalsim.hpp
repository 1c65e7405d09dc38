#pragma once

// Offline AUC tables and a paired closed-loop simulation of two retrieval
// engines against the synthetic user oracle.

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adret/clicklog.hpp"
#include "adret/index.hpp"
#include "adret/model.hpp"
#include "adret/network.hpp"
#include "adret/pricing.hpp"
#include "adret/retrieval.hpp"

namespace adret::evalsim {

using retrieval::RetrievalRequest;
using retrieval::RetrievalResult;

// ---- offline ----

using SampleScorer = std::function<double(const model::TrainingSample&)>;

/// Sum of the clicks on the sample's edges.
SampleScorer click_count_scorer(const network::HierNetwork& net);
SampleScorer lr_scorer(const model::LrModel& model, const network::HierNetwork& net);

/// Undefined (nullopt) when the samples hold a single class.
std::optional<double> split_auc(const SampleScorer& scorer, std::span<const model::TrainingSample> samples);

struct AucRow {
    std::string name;
    std::array<std::optional<double>, 3> auc;  ///< train, test, next
};

struct Splits {
    std::span<const model::TrainingSample> train;
    std::span<const model::TrainingSample> test;
    std::span<const model::TrainingSample> next;
};

std::vector<AucRow> offline_eval(std::span<const std::pair<std::string, SampleScorer>> scorers, const Splits& splits);

void print_auc_table(std::ostream& out, std::span<const AucRow> rows);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

// ---- baseline engine ----

/// Same traversal and caps as the model engine, but entries are ranked by
/// raw clicks and an ad scores the click sum of its distinct activated edges.
class ClickCountEngine {
public:
    ClickCountEngine(const network::HierNetwork& net, std::size_t cap_rewrite, std::size_t cap_select,
                     std::shared_ptr<const pricing::Pricer> pricer = nullptr, retrieval::RetrievalConfig config = {});

    std::vector<RetrievalResult> retrieve(const RetrievalRequest& request,
                                          retrieval::RetrievalStats* stats = nullptr) const;

    const index::InvertedIndex& rewriting() const noexcept { return rewriting_; }
    const index::InvertedIndex& selecting() const noexcept { return selecting_; }

private:
    index::InvertedIndex rewriting_;
    index::InvertedIndex selecting_;
    std::shared_ptr<const pricing::Pricer> pricer_;
    retrieval::RetrievalConfig config_;
};

std::vector<RetrievalResult> baseline_retrieve(const network::HierNetwork& net, const RetrievalRequest& request,
                                               std::size_t cap_rewrite, std::size_t cap_select,
                                               const pricing::Pricer* pricer = nullptr);

// ---- online simulation ----

struct SimMetrics {
    std::uint64_t click_counts = 0;
    std::uint64_t present_counts = 0;
    std::uint64_t request_counts = 0;
    std::uint64_t presented_requests = 0;
    double revenue = 0.0;
    double ctr = 0.0;
    double rpm = 0.0;
    double pr = 0.0;

    /// Derives ctr, rpm and pr from the counts.
    void finalize();
};

struct Presentation {
    EntityId request_id = 0;
    EntityId ad_id = 0;
    double ocpc_price = 0.0;
    bool clicked = false;
};

struct SimRun {
    SimMetrics metrics;
    std::vector<Presentation> trace;
};

struct Lift {
    double ctr = 0.0;
    double rpm = 0.0;
    double pr = 0.0;
};

/// (new - base) / base; 0 when both are 0.
double lift(double metric_new, double metric_base) noexcept;

struct SimReport {
    SimRun engine;
    SimRun baseline;
    Lift lift;
};

using Engine = std::function<std::vector<RetrievalResult>(const RetrievalRequest&)>;

struct SimConfig {
    std::size_t slate = 1;  ///< top results presented per request
    std::int64_t start_tick = 0;
    EntityId first_request_id = 0;
};

/// Both engines answer the same seeded request stream; clicks come from the
/// oracle's hashed draws, so outcomes are paired. Throws DomainError when
/// n_requests is 0.
SimReport simulate_online(const Engine& engine, const Engine& baseline, const clicklog::Catalog& catalog,
                          const clicklog::UserOracle& oracle, std::uint64_t n_requests, std::uint64_t seed,
                          const SimConfig& config = {});

/// Violated metric identities, empty when all hold.
std::vector<std::string> check_identities(const SimRun& run);

std::string to_json(const SimMetrics& metrics);
void print_sim_table(std::ostream& out, const SimReport& report);

}  // namespace adret::evalsim
