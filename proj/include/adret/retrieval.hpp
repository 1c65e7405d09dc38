#pragma once

// Online retrieval: signals -> rewriting index -> keys -> ad-selecting index ->
// ads. Every activated path of an ad is folded into one feature vector, each
// distinct edge once, and scored by the model.

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "adret/clicklog.hpp"
#include "adret/index.hpp"
#include "adret/model.hpp"
#include "adret/pricing.hpp"

namespace adret::retrieval {

using clicklog::SignalRef;
using index::InvertedIndex;
using index::PostingEntry;

struct RetrievalConfig {
    std::size_t max_results = 1000;
    std::size_t max_signals = 16;
    std::optional<double> min_score;  ///< drop ads scoring below this
};

struct RetrievalRequest {
    std::vector<SignalRef> signals;
    std::size_t n = 10;
};

struct Path {
    NodeId signal;
    NodeId key;

    friend bool operator==(const Path&, const Path&) = default;
};

struct RetrievalResult {
    EntityId ad_id = 0;
    double score = 0.0;
    std::vector<Path> paths;
    double ocpc_price = 0.0;
};

struct RetrievalStats {
    std::size_t skipped_signals = 0;  ///< request signals with no posting list
    std::size_t index_lookups = 0;
    std::size_t candidates_examined = 0;  ///< key -> ad entries visited
};

/// Throws DomainError unless 1 <= n <= max_results and
/// 1 <= |signals| <= max_signals.
void validate(const RetrievalRequest& request, const RetrievalConfig& config);

/// Posting entries reached by a request.
struct Activation {
    struct Rewrite {
        NodeId signal;
        const PostingEntry* entry;
    };
    struct KeyHit {
        NodeId key;
        std::vector<Rewrite> rewrites;
    };
    struct AdHit {
        NodeId ad;
        std::uint32_t key;  ///< index into `keys`
        const PostingEntry* entry;
    };

    std::vector<KeyHit> keys;  ///< in key order
    std::vector<AdHit> ads;    ///< grouped by ad, keys ascending within an ad
};

/// Duplicate signals are visited once.
Activation activate(std::span<const SignalRef> signals, const InvertedIndex& rewriting, const InvertedIndex& selecting,
                    RetrievalStats* stats = nullptr);

/// Scores one ad from its hits (all sharing the same ad).
using AdScorer = std::function<double(std::span<const Activation::AdHit> hits, const Activation& activation)>;

/// Scores every activated ad, sorts by score descending then ad id, applies
/// the optional floor, truncates to n and attaches prices.
std::vector<RetrievalResult> rank(const Activation& activation, std::size_t n, const AdScorer& scorer,
                                  const pricing::Pricer* pricer, std::optional<double> min_score = std::nullopt);

/// Feature vector of the distinct edges (and their endpoints) reaching one ad.
model::FeatureVector ad_features(std::span<const Activation::AdHit> hits, const Activation& activation,
                                 const model::LrModel& model);

std::vector<RetrievalResult> retrieve(const RetrievalRequest& request, const InvertedIndex& rewriting,
                                      const InvertedIndex& selecting, const model::LrModel& model,
                                      const pricing::Pricer* pricer, const RetrievalConfig& config = {},
                                      RetrievalStats* stats = nullptr);

/// Immutable bundle served to concurrent requests.
struct Snapshot {
    std::shared_ptr<const InvertedIndex> rewriting;
    std::shared_ptr<const InvertedIndex> selecting;
    std::shared_ptr<const model::LrModel> model;
    std::shared_ptr<const pricing::Pricer> pricer;
    RetrievalConfig config;

    std::vector<RetrievalResult> retrieve(const RetrievalRequest& request, RetrievalStats* stats = nullptr) const;
};

/// Readers get whole snapshots; a swap never exposes a mix of old and new.
class SnapshotHolder {
public:
    explicit SnapshotHolder(std::shared_ptr<const Snapshot> initial = nullptr) : current_(std::move(initial)) {}

    std::shared_ptr<const Snapshot> get() const
    {
        std::lock_guard lock(mutex_);
        return current_;
    }

    void swap(std::shared_ptr<const Snapshot> next)
    {
        std::lock_guard lock(mutex_);
        current_.swap(next);
    }

private:
    mutable std::mutex mutex_;
    std::shared_ptr<const Snapshot> current_;
};

// ---- raw request records ----

struct TimedClick {
    EntityId item = 0;
    std::int64_t ts = 0;
};

struct RawRequest {
    std::optional<EntityId> query;
    std::vector<TimedClick> session_clicks;
    std::vector<TimedClick> history_clicks;
    std::vector<EntityId> profile_segments;
};

/// Query first, then click items newest first (session before history on a
/// tie), then profile segments; duplicates removed, truncated to max_signals.
std::vector<SignalRef> extract_signals(const RawRequest& raw, std::size_t max_signals = 16);

/// {"query":3,"session_clicks":[{"item":5,"ts":10}],"history_clicks":[...],"profile":[2]}.
/// Every field is optional. Throws ParseError on anything else.
RawRequest parse_raw_request(std::string_view json_text);

}  // namespace adret::retrieval
