#pragma once

// Capped inverted indexes over the two network layers. The rewriting index maps
// signal -> keys, the ad-selecting index maps key -> ads. Entries carry the
// model's per-edge weight, the edge's feature id and its raw stats.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "adret/model.hpp"
#include "adret/network.hpp"

namespace adret::index {

using network::EdgeStats;
using network::HierNetwork;

inline constexpr std::size_t kDefaultRewriteCap = 100;
inline constexpr std::size_t kDefaultSelectCap = 300;
inline constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();
/// Feature id of an entry built without a dictionary.
inline constexpr std::uint32_t kNoFeature = std::numeric_limits<std::uint32_t>::max();

struct PostingEntry {
    NodeId term;
    double weight = 0.0;
    std::uint32_t feature_id = kNoFeature;
    EdgeStats stats;

    friend bool operator==(const PostingEntry&, const PostingEntry&) = default;
};

struct PostingList {
    NodeId trigger;
    std::vector<PostingEntry> entries;  ///< weight descending, then term ascending

    friend bool operator==(const PostingList&, const PostingList&) = default;
};

enum class IndexKind : std::uint32_t { Rewriting = 0, Selecting = 1 };

std::string_view to_string(IndexKind kind) noexcept;

struct BuildMeta {
    std::uint64_t model_id = 0;
    std::uint64_t network_id = 0;
    std::uint64_t build_tick = 0;

    friend bool operator==(const BuildMeta&, const BuildMeta&) = default;
};

/// Entry order inside a list.
bool ranks_before(const PostingEntry& a, const PostingEntry& b) noexcept;

class InvertedIndex {
public:
    InvertedIndex() = default;
    InvertedIndex(IndexKind kind, std::size_t cap, BuildMeta meta);

    /// Throws IntegrityError on a duplicate trigger, wrong node layers, an
    /// unsorted list or one longer than the cap.
    void add(PostingList list);

    const PostingList* find(NodeId trigger) const;

    IndexKind kind() const noexcept { return kind_; }
    std::size_t cap() const noexcept { return cap_; }
    const BuildMeta& meta() const noexcept { return meta_; }
    std::size_t size() const noexcept { return lists_.size(); }
    std::size_t entry_count() const noexcept;
    /// Lists in trigger order.
    std::vector<const PostingList*> sorted_lists() const;

    friend bool operator==(const InvertedIndex& a, const InvertedIndex& b);

private:
    IndexKind kind_ = IndexKind::Rewriting;
    std::size_t cap_ = kUnlimited;
    BuildMeta meta_;
    std::vector<PostingList> lists_;
    std::unordered_map<NodeId, std::size_t, NodeIdHash> position_;
};

/// Fingerprint of the model's serialized form; stored as BuildMeta::model_id.
std::uint64_t model_id(const model::LrModel& model);

using EdgeWeightFn = std::function<double(const Edge&, const EdgeStats&)>;

/// Keeps, for every trigger of the layer, its top-`cap` edges under `weight`.
/// Feature ids come from `dict` when given.
InvertedIndex build_index(const HierNetwork& net, IndexKind kind, std::size_t cap, const EdgeWeightFn& weight,
                          const model::FeatureDictionary* dict, BuildMeta meta = {});

/// Ranked by the model's per-edge weight. Throws IntegrityError if the model
/// was not trained over this network's feature dictionary.
InvertedIndex build_rewriting_index(const HierNetwork& net, const model::LrModel& model,
                                    std::size_t cap = kDefaultRewriteCap);
InvertedIndex build_selecting_index(const HierNetwork& net, const model::LrModel& model,
                                    std::size_t cap = kDefaultSelectCap);

/// Little-endian binary container.
std::string serialize_index(const InvertedIndex& index);
void serialize_index(const InvertedIndex& index, const std::filesystem::path& path);
/// Throws VersionError on bad magic or version, LoadError on truncation or
/// an invalid list.
InvertedIndex deserialize_index(std::string_view bytes);
InvertedIndex load_index(const std::filesystem::path& path);

/// One tab-separated line per entry: trigger, rank, term, weight, feature id, clicks, presents.
void dump_index(std::ostream& out, const InvertedIndex& index);

}  // namespace adret::index
