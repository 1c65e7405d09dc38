#pragma once

// Synthetic marketplace: catalog, request process, click oracle and the
// line-delimited JSON formats for logs, sessions and catalogs.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "adret/ids.hpp"

namespace adret::clicklog {

struct GenConfig {
    std::uint32_t ads = 200;
    std::uint32_t items = 400;
    std::uint32_t shops = 60;
    std::uint32_t brands = 40;
    std::uint32_t categories = 10;
    std::uint32_t queries = 50;
    std::uint32_t users = 2000;
    std::uint32_t profile_segments = 32;

    /// Every ad's taking rate; must lie in (0,1).
    double taking_rate = 0.05;

    // Click model. affinity(query, ad) = quality * brand factor * pair noise, clamped.
    double min_quality = 0.01;
    double max_quality = 0.12;
    double brand_match_boost = 2.0;
    double pair_noise = 0.5;  ///< pair factor uniform in [1 - pair_noise, 1 + pair_noise]
    double off_category_affinity = 0.005;
    double personal_brand_boost = 1.5;  ///< a clicked item shares the ad's brand
    double segment_boost = 1.3;         ///< user segment equals the ad's target segment
    double max_click_probability = 0.95;

    // Commerce latents.
    double min_cvr = 0.01;
    double max_cvr = 0.10;
    double price_median = 100.0;
    double price_sigma = 0.5;

    // Logging policy: in-category ads are shown proportionally to a
    // lognormal propensity that is independent of quality.
    double exposure_sigma = 1.0;
    double off_category_exposure = 0.1;
    std::uint32_t ads_per_request = 1;

    // Request process.
    std::int64_t session_gap = 1800;
    double mean_session_requests = 4.0;
    double item_click_probability = 0.5;
    double query_stay_probability = 0.5;
    std::uint32_t max_signals = 16;
    std::uint32_t long_term_items = 5;
    std::uint32_t categories_per_user = 2;

    /// Throws ConfigError on zero sizes or out-of-range probabilities.
    void validate() const;
};

struct Category {
    EntityId id = 0;
};

struct Brand {
    EntityId id = 0;
    EntityId category = 0;
};

struct Shop {
    EntityId id = 0;
    EntityId category = 0;
};

struct Item {
    EntityId id = 0;
    EntityId shop = 0;
    EntityId brand = 0;
    EntityId category = 0;
};

struct Query {
    EntityId id = 0;
    EntityId category = 0;
    EntityId preferred_brand = 0;
};

struct User {
    EntityId id = 0;
    std::uint32_t segment = 0;
    std::vector<EntityId> categories;
};

struct AdMeta {
    EntityId id = 0;
    EntityId item = 0;
    EntityId shop = 0;
    EntityId brand = 0;
    EntityId category = 0;
    double quality = 0.0;  ///< base click affinity
    double cvr = 0.0;
    double item_price = 0.0;
    double taking_rate = 0.0;
    std::uint32_t target_segment = 0;
    double exposure = 0.0;  ///< logging-policy propensity
};

/// Entity tables plus the latent parameters of the click model. Entity ids
/// are dense: `ads[i].id == i` and likewise for every table.
struct Catalog {
    GenConfig config;
    std::uint64_t latent_seed = 0;
    std::vector<Category> categories;
    std::vector<Brand> brands;
    std::vector<Shop> shops;
    std::vector<Item> items;
    std::vector<Query> queries;
    std::vector<User> users;
    std::vector<AdMeta> ads;

    /// Latent click probability of `ad` for a request whose query is `query`.
    double affinity(EntityId query, EntityId ad) const;

    /// Throws DataError if a reference dangles or a latent is out of range.
    void validate() const;
};

Catalog generate_catalog(const GenConfig& config, std::uint64_t seed);

struct SignalRef {
    SignalKind kind = SignalKind::Query;
    EntityId id = 0;

    NodeId node() const { return NodeId::signal(kind, id); }
    friend constexpr auto operator<=>(const SignalRef&, const SignalRef&) = default;
};

struct ImpressionRecord {
    EntityId request_id = 0;
    EntityId user_id = 0;
    std::int64_t ts = 0;
    std::vector<SignalRef> signals;
    EntityId ad_id = 0;
    bool clicked = false;
    bool converted = false;
    double ad_price = 0.0;
    EntityId session_id = 0;
    EntityId category_id = 0;

    /// The query signal, when present.
    std::optional<EntityId> query() const;

    friend bool operator==(const ImpressionRecord&, const ImpressionRecord&) = default;
};

enum class ActionKind : std::uint8_t { SubmitQuery, ClickItem, ClickAd };

struct Action {
    ActionKind kind = ActionKind::SubmitQuery;
    EntityId entity = 0;  ///< query, item or ad id depending on `kind`
    std::int64_t ts = 0;

    friend bool operator==(const Action&, const Action&) = default;
};

struct Session {
    EntityId session_id = 0;
    EntityId user_id = 0;
    EntityId category_id = 0;
    std::vector<Action> actions;

    friend bool operator==(const Session&, const Session&) = default;
};

/// An action before sessionization.
struct UserAction {
    EntityId user_id = 0;
    EntityId category_id = 0;
    Action action;
};

/// Groups actions by (user, category), orders them by time and cuts a new
/// session whenever consecutive actions are more than `gap` ticks apart.
/// Sessions are numbered from `first_session_id` in order of
/// (first timestamp, user, category).
std::vector<Session> assemble_sessions(std::span<const UserAction> actions, std::int64_t gap,
                                       EntityId first_session_id = 0);

/// One search request produced by the request process, before any ad is shown.
struct Request {
    EntityId request_id = 0;
    EntityId user_id = 0;
    EntityId category_id = 0;
    std::int64_t ts = 0;
    EntityId query = 0;
    std::vector<SignalRef> signals;  ///< query first, then recent-first clicks, then profile
};

/// Engine-independent stream of requests: users run category-coherent
/// sessions, submit queries and click organic items. The stream never looks
/// at which ads were shown, so two engines can be compared on the same stream.
class RequestStream {
public:
    RequestStream(const Catalog& catalog, std::uint64_t seed, std::int64_t start_tick = 0,
                  EntityId first_request_id = 0);

    Request next();

    /// Query submissions and organic item clicks emitted so far.
    const std::vector<UserAction>& actions() const noexcept { return actions_; }

private:
    struct UserState {
        std::int64_t clock = 0;
        EntityId category = 0;
        EntityId query = 0;
        std::uint32_t remaining = 0;
        std::vector<EntityId> session_items;  ///< recent first
        std::vector<EntityId> history_items;  ///< recent first
    };

    const Catalog* catalog_;
    std::mt19937_64 rng_;
    EntityId next_request_id_;
    std::vector<UserState> users_;
    std::vector<std::vector<EntityId>> queries_by_category_;
    std::vector<std::vector<EntityId>> items_by_category_;
    std::vector<UserAction> actions_;
};

/// Ground-truth user model. Outcomes are a pure function of
/// (seed, request id, ad id), so paired engines showing the same ad for the
/// same request observe the same click.
class UserOracle {
public:
    UserOracle(const Catalog& catalog, std::uint64_t seed);

    /// Affinity of the request's dominant (query) signal for the ad, times the
    /// personalization boosts carried by its click-item and profile signals.
    double click_probability(const Request& request, EntityId ad) const;

    bool clicks(const Request& request, EntityId ad) const;
    bool converts(const Request& request, EntityId ad) const;

private:
    const Catalog* catalog_;
    std::uint64_t seed_;
};

struct LogOptions {
    std::int64_t start_tick = 0;
    EntityId first_request_id = 0;
    EntityId first_session_id = 0;
};

struct GeneratedLog {
    std::vector<ImpressionRecord> records;
    std::vector<Session> sessions;
};

/// Runs the request process for `n_requests` requests, shows ads through the
/// logging policy and samples clicks and conversions from the oracle.
GeneratedLog generate_log(const Catalog& catalog, std::uint64_t n_requests, std::uint64_t seed,
                          const LogOptions& options = {});

/// OCPC charge the platform levies for a click on `ad` under the latent CVR.
double latent_ad_price(const AdMeta& ad);

// ---- line-delimited JSON I/O ----

std::string format_record(const ImpressionRecord& record);
/// Throws ParseError naming `line_no` on syntax errors, missing or unknown fields.
ImpressionRecord parse_record(std::string_view line, std::size_t line_no);

void write_log(std::ostream& out, std::span<const ImpressionRecord> records);
void write_log(const std::filesystem::path& path, std::span<const ImpressionRecord> records);
std::vector<ImpressionRecord> read_log(std::istream& in);
std::vector<ImpressionRecord> read_log(const std::filesystem::path& path);

void write_sessions(std::ostream& out, std::span<const Session> sessions);
void write_sessions(const std::filesystem::path& path, std::span<const Session> sessions);
std::vector<Session> read_sessions(std::istream& in);
std::vector<Session> read_sessions(const std::filesystem::path& path);

void write_catalog(std::ostream& out, const Catalog& catalog);
void write_catalog(const std::filesystem::path& path, const Catalog& catalog);
Catalog read_catalog(std::istream& in);
Catalog read_catalog(const std::filesystem::path& path);

}  // namespace adret::clicklog
