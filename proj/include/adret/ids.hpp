#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace adret {

using EntityId = std::uint64_t;

enum class Layer : std::uint8_t { Signal = 0, Key = 1, Ad = 2 };

enum class SignalKind : std::uint8_t { Query = 0, RealTimeClickItem = 1, LongTimeClickItem = 2, UserProfile = 3 };

enum class KeyKind : std::uint8_t { Query = 0, Item = 1, Shop = 2, Brand = 3 };

/// Wire names: "query", "rt_click_item", "lt_click_item", "profile".
std::string_view to_string(SignalKind kind) noexcept;
std::optional<SignalKind> signal_kind_from_string(std::string_view name) noexcept;

/// Wire names: "query", "item", "shop", "brand".
std::string_view to_string(KeyKind kind) noexcept;
std::optional<KeyKind> key_kind_from_string(std::string_view name) noexcept;

/// Identity of a node of the signal/key/ad network.
///
/// Packs layer, kind and the entity id into one 64-bit value so that nodes
/// order by (layer, kind, entity). That order is the tie-break used by every
/// posting list and result list.
class NodeId {
public:
    static constexpr int kEntityBits = 60;
    static constexpr EntityId kMaxEntity = (EntityId{1} << kEntityBits) - 1;

    constexpr NodeId() = default;

    static NodeId signal(SignalKind kind, EntityId entity);
    static NodeId key(KeyKind kind, EntityId entity);
    static NodeId ad(EntityId entity);

    /// Inverse of `raw()`; rejects bit patterns that no factory can produce.
    static std::optional<NodeId> from_raw(std::uint64_t raw) noexcept;

    /// Parses the text form produced by `str()`, e.g. "S:query:4", "K:brand:2", "A:17".
    static std::optional<NodeId> parse(std::string_view text);

    constexpr Layer layer() const noexcept { return static_cast<Layer>(raw_ >> 62); }
    constexpr std::uint8_t kind_bits() const noexcept { return static_cast<std::uint8_t>((raw_ >> kEntityBits) & 3u); }
    constexpr SignalKind signal_kind() const noexcept { return static_cast<SignalKind>(kind_bits()); }
    constexpr KeyKind key_kind() const noexcept { return static_cast<KeyKind>(kind_bits()); }
    constexpr EntityId entity() const noexcept { return raw_ & kMaxEntity; }
    constexpr std::uint64_t raw() const noexcept { return raw_; }

    constexpr bool is_signal() const noexcept { return layer() == Layer::Signal; }
    constexpr bool is_key() const noexcept { return layer() == Layer::Key; }
    constexpr bool is_ad() const noexcept { return layer() == Layer::Ad; }

    std::string str() const;

    friend constexpr auto operator<=>(NodeId, NodeId) = default;

private:
    constexpr explicit NodeId(std::uint64_t raw) : raw_(raw) {}
    std::uint64_t raw_ = 0;
};

enum class EdgeLayer : std::uint8_t { Rewriting = 0, Selecting = 1 };

std::string_view to_string(EdgeLayer layer) noexcept;

/// Directed network edge. Rewriting edges go signal -> key, selecting edges key -> ad.
struct Edge {
    NodeId src;
    NodeId dst;

    /// Layer implied by the endpoints; nullopt for anything else (signal -> ad, intra-layer, ...).
    std::optional<EdgeLayer> layer() const noexcept;

    /// "src>dst" using the node text form.
    std::string str() const;
    static std::optional<Edge> parse(std::string_view text);

    friend constexpr auto operator<=>(const Edge&, const Edge&) = default;
};

struct NodeIdHash {
    std::size_t operator()(NodeId n) const noexcept
    {
        std::uint64_t x = n.raw() * 0x9E3779B97F4A7C15ull;
        return static_cast<std::size_t>(x ^ (x >> 29));
    }
};

struct EdgeHash {
    std::size_t operator()(const Edge& e) const noexcept
    {
        std::uint64_t x = e.src.raw() * 0x9E3779B97F4A7C15ull ^ (e.dst.raw() + 0x7F4A7C159E3779B9ull);
        x *= 0xBF58476D1CE4E5B9ull;
        return static_cast<std::size_t>(x ^ (x >> 31));
    }
};

}  // namespace adret
