#include "adret/ids.hpp"

#include <charconv>

#include "adret/error.hpp"

namespace adret {

namespace {

constexpr std::string_view kSignalNames[] = {"query", "rt_click_item", "lt_click_item", "profile"};
constexpr std::string_view kKeyNames[] = {"query", "item", "shop", "brand"};

std::optional<EntityId> parse_entity(std::string_view text)
{
    EntityId value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty() || value > NodeId::kMaxEntity) {
        return std::nullopt;
    }
    return value;
}

std::uint64_t pack(Layer layer, std::uint8_t kind, EntityId entity)
{
    if (entity > NodeId::kMaxEntity) {
        throw DomainError("entity id out of range: " + std::to_string(entity));
    }
    return (static_cast<std::uint64_t>(layer) << 62) | (static_cast<std::uint64_t>(kind) << NodeId::kEntityBits) | entity;
}

}  // namespace

std::string_view to_string(SignalKind kind) noexcept { return kSignalNames[static_cast<int>(kind)]; }
std::string_view to_string(KeyKind kind) noexcept { return kKeyNames[static_cast<int>(kind)]; }

std::string_view to_string(EdgeLayer layer) noexcept
{
    return layer == EdgeLayer::Rewriting ? "signal_key" : "key_ad";
}

std::optional<SignalKind> signal_kind_from_string(std::string_view name) noexcept
{
    for (int i = 0; i < 4; ++i) {
        if (kSignalNames[i] == name) {
            return static_cast<SignalKind>(i);
        }
    }
    return std::nullopt;
}

std::optional<KeyKind> key_kind_from_string(std::string_view name) noexcept
{
    for (int i = 0; i < 4; ++i) {
        if (kKeyNames[i] == name) {
            return static_cast<KeyKind>(i);
        }
    }
    return std::nullopt;
}

NodeId NodeId::signal(SignalKind kind, EntityId entity)
{
    return NodeId(pack(Layer::Signal, static_cast<std::uint8_t>(kind), entity));
}

NodeId NodeId::key(KeyKind kind, EntityId entity)
{
    return NodeId(pack(Layer::Key, static_cast<std::uint8_t>(kind), entity));
}

NodeId NodeId::ad(EntityId entity) { return NodeId(pack(Layer::Ad, 0, entity)); }

std::optional<NodeId> NodeId::from_raw(std::uint64_t raw) noexcept
{
    const auto layer = raw >> 62;
    if (layer > 2) {
        return std::nullopt;
    }
    if (layer == 2 && ((raw >> kEntityBits) & 3u) != 0) {
        return std::nullopt;
    }
    return NodeId(raw);
}

std::string NodeId::str() const
{
    const auto id = std::to_string(entity());
    switch (layer()) {
    case Layer::Signal:
        return "S:" + std::string(to_string(signal_kind())) + ":" + id;
    case Layer::Key:
        return "K:" + std::string(to_string(key_kind())) + ":" + id;
    case Layer::Ad:
        break;
    }
    return "A:" + id;
}

std::optional<NodeId> NodeId::parse(std::string_view text)
{
    if (text.size() < 3 || text[1] != ':') {
        return std::nullopt;
    }
    const char layer = text[0];
    auto rest = text.substr(2);
    if (layer == 'A') {
        auto entity = parse_entity(rest);
        return entity ? std::optional(ad(*entity)) : std::nullopt;
    }
    const auto colon = rest.find(':');
    if (colon == std::string_view::npos) {
        return std::nullopt;
    }
    auto entity = parse_entity(rest.substr(colon + 1));
    if (!entity) {
        return std::nullopt;
    }
    const auto kind_name = rest.substr(0, colon);
    if (layer == 'S') {
        auto kind = signal_kind_from_string(kind_name);
        return kind ? std::optional(signal(*kind, *entity)) : std::nullopt;
    }
    if (layer == 'K') {
        auto kind = key_kind_from_string(kind_name);
        return kind ? std::optional(key(*kind, *entity)) : std::nullopt;
    }
    return std::nullopt;
}

std::optional<EdgeLayer> Edge::layer() const noexcept
{
    if (src.is_signal() && dst.is_key()) {
        return EdgeLayer::Rewriting;
    }
    if (src.is_key() && dst.is_ad()) {
        return EdgeLayer::Selecting;
    }
    return std::nullopt;
}

std::string Edge::str() const { return src.str() + ">" + dst.str(); }

std::optional<Edge> Edge::parse(std::string_view text)
{
    const auto gt = text.find('>');
    if (gt == std::string_view::npos) {
        return std::nullopt;
    }
    auto src = NodeId::parse(text.substr(0, gt));
    auto dst = NodeId::parse(text.substr(gt + 1));
    if (!src || !dst) {
        return std::nullopt;
    }
    return Edge{*src, *dst};
}

}  // namespace adret
