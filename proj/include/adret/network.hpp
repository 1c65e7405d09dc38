#pragma once

// Three-layer signal -> key -> ad network and the initializers that build it
// from click logs: click-count threshold, modified information value and
// session co-occurrence relevance.

#include <cstdint>
#include <iosfwd>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "adret/clicklog.hpp"
#include "adret/ids.hpp"

namespace adret::network {

struct EdgeStats {
    std::uint64_t clicks = 0;
    std::uint64_t presents = 0;

    friend bool operator==(const EdgeStats&, const EdgeStats&) = default;
};

/// Sum of clicks and presents over one edge layer.
struct LayerTotals {
    std::uint64_t clicks = 0;
    std::uint64_t presents = 0;

    friend bool operator==(const LayerTotals&, const LayerTotals&) = default;
};

using EdgeMap = std::map<Edge, EdgeStats>;
using EdgeSet = std::set<Edge>;

/// Immutable network. Nodes are exactly the edge endpoints.
class HierNetwork {
public:
    HierNetwork() = default;

    /// Throws IntegrityError if an edge is filed under the wrong layer or
    /// violates clicks <= presents.
    HierNetwork(EdgeMap rewriting, EdgeMap selecting);

    const EdgeMap& edges(EdgeLayer layer) const noexcept
    {
        return layer == EdgeLayer::Rewriting ? rewriting_ : selecting_;
    }
    const EdgeMap& rewriting() const noexcept { return rewriting_; }
    const EdgeMap& selecting() const noexcept { return selecting_; }
    const std::set<NodeId>& nodes() const noexcept { return nodes_; }
    LayerTotals totals(EdgeLayer layer) const noexcept
    {
        return layer == EdgeLayer::Rewriting ? rewriting_totals_ : selecting_totals_;
    }
    std::size_t edge_count() const noexcept { return rewriting_.size() + selecting_.size(); }

    std::optional<EdgeStats> stats(const Edge& edge) const;
    bool contains(const Edge& edge) const;

    /// Keys reachable from a signal, ascending.
    std::span<const NodeId> keys_of_signal(NodeId signal) const;
    /// Ads reachable from a key, ascending.
    std::span<const NodeId> ads_of_key(NodeId key) const;
    /// Keys with a selecting edge into the ad, ascending.
    std::span<const NodeId> keys_of_ad(NodeId ad) const;

    /// SHA-256 based fingerprint of the canonical dump.
    std::uint64_t fingerprint() const;

private:
    using Adjacency = std::unordered_map<NodeId, std::vector<NodeId>, NodeIdHash>;
    static std::span<const NodeId> lookup(const Adjacency& adj, NodeId node);

    EdgeMap rewriting_;
    EdgeMap selecting_;
    std::set<NodeId> nodes_;
    LayerTotals rewriting_totals_;
    LayerTotals selecting_totals_;
    Adjacency signal_keys_;
    Adjacency key_ads_;
    Adjacency ad_keys_;
};

/// Key nodes describing the shown ad of a record: its query, item, shop and brand.
std::vector<NodeId> ad_keys(const clicklog::ImpressionRecord& record, const clicklog::Catalog& catalog);

/// Dense candidate network: every impression adds a present (and a click if
/// clicked) to key -> ad for each ad key, and to signal -> key for every
/// record signal crossed with every ad key.
HierNetwork count_edge_stats(std::span<const clicklog::ImpressionRecord> log, const clicklog::Catalog& catalog);

/// Edges with clicks strictly greater than `threshold`.
EdgeSet init_by_click_count(const HierNetwork& net, std::uint64_t threshold);

/// Click share times the log ratio of click share to present share; 0 when the
/// edge has no clicks. Throws DomainError on zero totals or zero presents.
double modified_iv(const EdgeStats& stats, const LayerTotals& totals);

enum class IvScope { PerSource, PerLayer };

/// Either or both of a floor and a top-k. With both, the floor applies first.
struct IvSelection {
    std::optional<double> min_iv;
    std::optional<std::size_t> top_k;
    IvScope scope = IvScope::PerSource;
};

/// Edges picked by information value. Top-k ranks by IV descending, then
/// clicks descending, then edge id ascending. Throws ConfigError when no mode is set.
EdgeSet init_by_iv(const HierNetwork& net, const IvSelection& selection);

enum class OccurrenceWeighting { Binary, Frequency };

/// Per-node session occurrence vectors.
///
/// A query submission touches its query signal and query key; an item click
/// touches the real-time and long-time item signals plus the item, shop and
/// brand keys; an ad click touches the ad. Profile signals never occur.
class SessionOccurrence {
public:
    SessionOccurrence(std::span<const clicklog::Session> sessions, const clicklog::Catalog& catalog,
                      OccurrenceWeighting weighting = OccurrenceWeighting::Binary);

    struct Entry {
        std::uint32_t session;
        double weight;
    };

    /// Sessions the node occurs in, ascending by session index. Empty if never.
    std::span<const Entry> occurrences(NodeId node) const;
    std::size_t session_count() const noexcept { return session_nodes_.size(); }
    /// Distinct nodes of one session, ascending.
    std::span<const NodeId> nodes_of_session(std::size_t session) const { return session_nodes_.at(session); }

private:
    std::unordered_map<NodeId, std::vector<Entry>, NodeIdHash> by_node_;
    std::vector<std::vector<NodeId>> session_nodes_;
};

/// Cosine of the two nodes' occurrence vectors, in [0,1].
/// Throws DomainError if either node occurs in no session.
double session_cosine(NodeId a, NodeId b, const SessionOccurrence& occurrence);

/// Signal -> key and key -> ad pairs that co-occur in at least one session and
/// whose cosine is at least `min_cos` (which must lie in (0,1]).
EdgeSet init_by_session_relevance(const SessionOccurrence& occurrence, double min_cos);

struct MergeResult {
    HierNetwork network;
    /// Keys removed because they reached more than the allowed number of ads.
    std::vector<NodeId> dropped_keys;
};

/// Union of the edge sets. Each edge keeps its stats from `counts` (zero if
/// the edge was never co-displayed). Keys linking to more than
/// `max_key_fanout` ads are dropped with all their edges.
MergeResult merge_initializations(const EdgeSet& by_clicks, const EdgeSet& by_iv, const EdgeSet& by_session,
                                  const HierNetwork& counts, std::size_t max_key_fanout);

struct InitConfig {
    std::uint64_t click_threshold = 2;
    IvSelection iv{std::nullopt, 50, IvScope::PerSource};
    double min_cos = 0.1;
    OccurrenceWeighting weighting = OccurrenceWeighting::Binary;
    std::size_t max_key_fanout = 5000;
};

struct InitReport {
    std::size_t candidate_edges = 0;
    std::size_t by_clicks = 0;
    std::size_t by_iv = 0;
    std::size_t by_session = 0;
};

/// count_edge_stats followed by the three initializers and the merge.
MergeResult initialize_network(std::span<const clicklog::ImpressionRecord> log,
                               std::span<const clicklog::Session> sessions, const clicklog::Catalog& catalog,
                               const InitConfig& config, InitReport* report = nullptr);

void write_network(std::ostream& out, const HierNetwork& net);
void write_network(const std::filesystem::path& path, const HierNetwork& net);
HierNetwork read_network(std::istream& in);
HierNetwork read_network(const std::filesystem::path& path);

}  // namespace adret::network
