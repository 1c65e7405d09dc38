#include "adret/clicklog.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "adret/error.hpp"
#include "adret/io.hpp"
#include "json.hpp"
#include "mix.hpp"

namespace adret::clicklog {

using nlohmann::json;

namespace {

constexpr std::uint64_t kClickSalt = 0xC11C;
constexpr std::uint64_t kConvertSalt = 0xC0;
constexpr std::uint64_t kPairSalt = 0x9A1;

void require(bool ok, const std::string& what)
{
    if (!ok) {
        throw ConfigError(what);
    }
}

bool is_probability(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }

template <typename Rng>
EntityId pick(Rng& rng, const std::vector<EntityId>& from)
{
    return from[std::uniform_int_distribution<std::size_t>(0, from.size() - 1)(rng)];
}

template <typename Rng>
EntityId pick_index(Rng& rng, std::size_t n)
{
    return std::uniform_int_distribution<EntityId>(0, n - 1)(rng);
}

void push_recent(std::vector<EntityId>& list, EntityId id, std::size_t cap)
{
    std::erase(list, id);
    list.insert(list.begin(), id);
    if (list.size() > cap) {
        list.resize(cap);
    }
}

}  // namespace

void GenConfig::validate() const
{
    require(ads >= 1 && items >= 1 && shops >= 1 && brands >= 1 && categories >= 1 && queries >= 1 && users >= 1
                && profile_segments >= 1,
            "all catalog sizes must be >= 1");
    require(queries >= categories, "need at least one query per category");
    require(items >= categories, "need at least one item per category");
    require(std::isfinite(taking_rate) && taking_rate > 0.0 && taking_rate < 1.0, "taking_rate must lie in (0,1)");
    require(is_probability(min_quality) && is_probability(max_quality) && min_quality <= max_quality,
            "quality range must lie in [0,1]");
    require(is_probability(min_cvr) && is_probability(max_cvr) && min_cvr <= max_cvr, "cvr range must lie in [0,1]");
    require(is_probability(off_category_affinity) && is_probability(max_click_probability),
            "affinity bounds must lie in [0,1]");
    require(brand_match_boost > 0.0 && personal_brand_boost > 0.0 && segment_boost > 0.0, "boosts must be > 0");
    require(pair_noise >= 0.0 && pair_noise < 1.0, "pair_noise must lie in [0,1)");
    require(price_median > 0.0 && price_sigma >= 0.0 && exposure_sigma >= 0.0, "invalid price or exposure spread");
    require(is_probability(off_category_exposure) && is_probability(item_click_probability)
                && is_probability(query_stay_probability),
            "policy probabilities must lie in [0,1]");
    require(ads_per_request >= 1 && ads_per_request <= ads, "ads_per_request must lie in [1, ads]");
    require(session_gap >= 1 && mean_session_requests >= 1.0, "invalid session shape");
    require(max_signals >= 1 && categories_per_user >= 1, "max_signals and categories_per_user must be >= 1");
}

double Catalog::affinity(EntityId query, EntityId ad) const
{
    const auto& q = queries.at(query);
    const auto& a = ads.at(ad);
    if (q.category != a.category) {
        return config.off_category_affinity;
    }
    const double brand = a.brand == q.preferred_brand ? config.brand_match_boost : 1.0;
    const double u = detail::unit_interval(detail::mix64(latent_seed ^ kPairSalt, query, ad));
    const double noise = 1.0 - config.pair_noise + 2.0 * config.pair_noise * u;
    return std::min(config.max_click_probability, a.quality * brand * noise);
}

void Catalog::validate() const
{
    auto dense = [](const auto& table, const char* name) {
        for (std::size_t i = 0; i < table.size(); ++i) {
            if (table[i].id != i) {
                throw DataError(std::string(name) + " ids must be dense and ordered");
            }
        }
    };
    dense(categories, "category");
    dense(brands, "brand");
    dense(shops, "shop");
    dense(items, "item");
    dense(queries, "query");
    dense(users, "user");
    dense(ads, "ad");
    auto check = [](bool ok, const std::string& what) {
        if (!ok) {
            throw DataError(what);
        }
    };
    const auto nc = categories.size();
    for (const auto& b : brands) check(b.category < nc, "brand " + std::to_string(b.id) + ": unknown category");
    for (const auto& s : shops) check(s.category < nc, "shop " + std::to_string(s.id) + ": unknown category");
    for (const auto& i : items) {
        check(i.category < nc && i.brand < brands.size() && i.shop < shops.size(),
              "item " + std::to_string(i.id) + ": dangling reference");
    }
    for (const auto& q : queries) {
        check(q.category < nc && q.preferred_brand < brands.size(), "query " + std::to_string(q.id) + ": dangling reference");
    }
    for (const auto& u : users) {
        check(!u.categories.empty(), "user " + std::to_string(u.id) + ": no categories");
        for (auto c : u.categories) check(c < nc, "user " + std::to_string(u.id) + ": unknown category");
    }
    for (const auto& a : ads) {
        const auto tag = "ad " + std::to_string(a.id) + ": ";
        check(a.item < items.size(), tag + "unknown item");
        const auto& item = items[a.item];
        check(item.shop == a.shop && item.brand == a.brand && item.category == a.category, tag + "item mismatch");
        check(is_probability(a.quality) && is_probability(a.cvr), tag + "latent probability outside [0,1]");
        check(a.item_price > 0.0, tag + "item price must be > 0");
        check(a.taking_rate > 0.0 && a.taking_rate < 1.0, tag + "taking rate outside (0,1)");
    }
}

Catalog generate_catalog(const GenConfig& config, std::uint64_t seed)
{
    config.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Catalog cat;
    cat.config = config;
    const auto nc = config.categories;
    for (EntityId c = 0; c < nc; ++c) {
        cat.categories.push_back({c});
    }

    std::vector<std::vector<EntityId>> brands_of(nc), shops_of(nc);
    for (EntityId b = 0; b < config.brands; ++b) {
        cat.brands.push_back({b, b % nc});
        brands_of[b % nc].push_back(b);
    }
    for (EntityId s = 0; s < config.shops; ++s) {
        cat.shops.push_back({s, s % nc});
        shops_of[s % nc].push_back(s);
    }
    auto brand_in = [&](EntityId c) {
        return brands_of[c].empty() ? pick_index(rng, config.brands) : pick(rng, brands_of[c]);
    };
    auto shop_in = [&](EntityId c) {
        return shops_of[c].empty() ? pick_index(rng, config.shops) : pick(rng, shops_of[c]);
    };

    for (EntityId i = 0; i < config.items; ++i) {
        const EntityId c = i % nc;
        const EntityId brand = brand_in(c);
        const EntityId shop = shop_in(c);
        cat.items.push_back({i, shop, brand, c});
    }
    for (EntityId q = 0; q < config.queries; ++q) {
        const EntityId c = q % nc;
        cat.queries.push_back({q, c, brand_in(c)});
    }
    for (EntityId u = 0; u < config.users; ++u) {
        User user{u, static_cast<std::uint32_t>(pick_index(rng, config.profile_segments)), {}};
        std::vector<EntityId> all(nc);
        for (EntityId c = 0; c < nc; ++c) all[c] = c;
        std::shuffle(all.begin(), all.end(), rng);
        all.resize(std::min<std::size_t>(config.categories_per_user, nc));
        user.categories = std::move(all);
        cat.users.push_back(std::move(user));
    }

    std::vector<EntityId> item_order(config.items);
    for (EntityId i = 0; i < config.items; ++i) item_order[i] = i;
    std::shuffle(item_order.begin(), item_order.end(), rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (EntityId a = 0; a < config.ads; ++a) {
        const auto& item = cat.items[item_order[a % config.items]];
        AdMeta ad;
        ad.id = a;
        ad.item = item.id;
        ad.shop = item.shop;
        ad.brand = item.brand;
        ad.category = item.category;
        ad.quality = config.min_quality + (config.max_quality - config.min_quality) * unit(rng);
        ad.cvr = config.min_cvr + (config.max_cvr - config.min_cvr) * unit(rng);
        ad.item_price = config.price_median * std::exp(config.price_sigma * normal(rng));
        ad.taking_rate = config.taking_rate;
        ad.target_segment = static_cast<std::uint32_t>(pick_index(rng, config.profile_segments));
        ad.exposure = std::exp(config.exposure_sigma * normal(rng));
        cat.ads.push_back(ad);
    }
    cat.latent_seed = rng();
    return cat;
}

std::optional<EntityId> ImpressionRecord::query() const
{
    for (const auto& s : signals) {
        if (s.kind == SignalKind::Query) {
            return s.id;
        }
    }
    return std::nullopt;
}

std::vector<Session> assemble_sessions(std::span<const UserAction> actions, std::int64_t gap, EntityId first_session_id)
{
    std::map<std::pair<EntityId, EntityId>, std::vector<Action>> groups;
    for (const auto& ua : actions) {
        groups[{ua.user_id, ua.category_id}].push_back(ua.action);
    }
    std::vector<Session> sessions;
    for (auto& [key, list] : groups) {
        std::stable_sort(list.begin(), list.end(), [](const Action& a, const Action& b) { return a.ts < b.ts; });
        Session current{0, key.first, key.second, {}};
        for (const auto& action : list) {
            if (!current.actions.empty() && action.ts - current.actions.back().ts > gap) {
                sessions.push_back(std::move(current));
                current = Session{0, key.first, key.second, {}};
            }
            current.actions.push_back(action);
        }
        if (!current.actions.empty()) {
            sessions.push_back(std::move(current));
        }
    }
    std::stable_sort(sessions.begin(), sessions.end(), [](const Session& a, const Session& b) {
        return std::tuple(a.actions.front().ts, a.user_id, a.category_id)
             < std::tuple(b.actions.front().ts, b.user_id, b.category_id);
    });
    for (std::size_t i = 0; i < sessions.size(); ++i) {
        sessions[i].session_id = first_session_id + i;
    }
    return sessions;
}

RequestStream::RequestStream(const Catalog& catalog, std::uint64_t seed, std::int64_t start_tick,
                             EntityId first_request_id)
    : catalog_(&catalog)
    , rng_(seed)
    , next_request_id_(first_request_id)
    , users_(catalog.users.size())
    , queries_by_category_(catalog.categories.size())
    , items_by_category_(catalog.categories.size())
{
    for (auto& u : users_) {
        u.clock = start_tick;
    }
    for (const auto& q : catalog.queries) queries_by_category_[q.category].push_back(q.id);
    for (const auto& i : catalog.items) items_by_category_[i.category].push_back(i.id);
}

Request RequestStream::next()
{
    const auto& cfg = catalog_->config;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const EntityId uid = pick_index(rng_, users_.size());
    auto& st = users_[uid];
    const auto& user = catalog_->users[uid];

    if (st.remaining == 0) {
        for (auto it = st.session_items.rbegin(); it != st.session_items.rend(); ++it) {
            push_recent(st.history_items, *it, cfg.long_term_items);
        }
        st.session_items.clear();
        st.clock += cfg.session_gap + 1 + std::uniform_int_distribution<std::int64_t>(0, 4 * cfg.session_gap)(rng_);
        st.category = pick(rng_, user.categories);
        std::geometric_distribution<std::uint32_t> extra(1.0 / cfg.mean_session_requests);
        st.remaining = 1 + extra(rng_);
        st.query = pick(rng_, queries_by_category_[st.category]);
    } else {
        st.clock += std::uniform_int_distribution<std::int64_t>(10, 300)(rng_);
        if (unit(rng_) >= cfg.query_stay_probability) {
            st.query = pick(rng_, queries_by_category_[st.category]);
        }
    }

    Request req;
    req.request_id = next_request_id_++;
    req.user_id = uid;
    req.category_id = st.category;
    req.ts = st.clock;
    req.query = st.query;
    actions_.push_back({uid, st.category, {ActionKind::SubmitQuery, st.query, st.clock}});

    req.signals.push_back({SignalKind::Query, st.query});
    for (auto item : st.session_items) {
        req.signals.push_back({SignalKind::RealTimeClickItem, item});
    }
    for (auto item : st.history_items) {
        if (std::find(st.session_items.begin(), st.session_items.end(), item) == st.session_items.end()) {
            req.signals.push_back({SignalKind::LongTimeClickItem, item});
        }
    }
    req.signals.push_back({SignalKind::UserProfile, user.segment});
    if (req.signals.size() > cfg.max_signals) {
        req.signals.resize(cfg.max_signals);
    }

    if (unit(rng_) < cfg.item_click_probability) {
        const auto& candidates = items_by_category_[st.category];
        const EntityId brand = catalog_->queries[st.query].preferred_brand;
        std::vector<EntityId> branded;
        for (auto i : candidates) {
            if (catalog_->items[i].brand == brand) branded.push_back(i);
        }
        const bool use_brand = !branded.empty() && unit(rng_) < 0.5;
        const EntityId item = pick(rng_, use_brand ? branded : candidates);
        st.clock += 1;
        actions_.push_back({uid, st.category, {ActionKind::ClickItem, item, st.clock}});
        push_recent(st.session_items, item, cfg.max_signals);
    }
    --st.remaining;
    return req;
}

UserOracle::UserOracle(const Catalog& catalog, std::uint64_t seed) : catalog_(&catalog), seed_(seed) {}

double UserOracle::click_probability(const Request& request, EntityId ad) const
{
    const auto& cfg = catalog_->config;
    const auto& meta = catalog_->ads.at(ad);
    double p = catalog_->affinity(request.query, ad);
    bool brand_hit = false;
    bool segment_hit = false;
    for (const auto& s : request.signals) {
        if (s.kind == SignalKind::RealTimeClickItem || s.kind == SignalKind::LongTimeClickItem) {
            brand_hit = brand_hit || catalog_->items.at(s.id).brand == meta.brand;
        } else if (s.kind == SignalKind::UserProfile) {
            segment_hit = segment_hit || s.id == meta.target_segment;
        }
    }
    if (brand_hit) p *= cfg.personal_brand_boost;
    if (segment_hit) p *= cfg.segment_boost;
    return std::min(p, cfg.max_click_probability);
}

bool UserOracle::clicks(const Request& request, EntityId ad) const
{
    const double u = detail::unit_interval(detail::mix64(seed_ ^ kClickSalt, request.request_id, ad));
    return u < click_probability(request, ad);
}

bool UserOracle::converts(const Request& request, EntityId ad) const
{
    const double u = detail::unit_interval(detail::mix64(seed_ ^ kConvertSalt, request.request_id, ad));
    return u < catalog_->ads.at(ad).cvr;
}

double latent_ad_price(const AdMeta& ad) { return ad.cvr * ad.item_price * ad.taking_rate; }

GeneratedLog generate_log(const Catalog& catalog, std::uint64_t n_requests, std::uint64_t seed,
                          const LogOptions& options)
{
    if (n_requests == 0) {
        throw ConfigError("n_requests must be >= 1");
    }
    catalog.validate();
    const auto& cfg = catalog.config;
    std::mt19937_64 policy_rng(detail::mix64(seed, 1));
    RequestStream stream(catalog, detail::mix64(seed, 2), options.start_tick, options.first_request_id);
    const UserOracle oracle(catalog, detail::mix64(seed, 3));

    std::vector<std::vector<EntityId>> ads_of(catalog.categories.size());
    for (const auto& a : catalog.ads) ads_of[a.category].push_back(a.id);
    std::vector<std::discrete_distribution<std::size_t>> exposure_of;
    for (const auto& list : ads_of) {
        std::vector<double> w;
        for (auto a : list) w.push_back(catalog.ads[a].exposure);
        exposure_of.emplace_back(w.begin(), w.end());
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    GeneratedLog out;
    std::vector<UserAction> actions;
    std::size_t consumed = 0;
    for (std::uint64_t r = 0; r < n_requests; ++r) {
        const Request req = stream.next();
        const auto& emitted = stream.actions();
        // The query submission comes first, ad clicks share its tick.
        actions.push_back(emitted[consumed]);
        std::vector<EntityId> shown;
        while (shown.size() < cfg.ads_per_request) {
            EntityId ad;
            if (ads_of[req.category_id].empty() || unit(policy_rng) < cfg.off_category_exposure) {
                ad = pick_index(policy_rng, catalog.ads.size());
            } else {
                ad = ads_of[req.category_id][exposure_of[req.category_id](policy_rng)];
            }
            if (std::find(shown.begin(), shown.end(), ad) == shown.end()) {
                shown.push_back(ad);
            }
        }
        for (auto ad : shown) {
            ImpressionRecord rec;
            rec.request_id = req.request_id;
            rec.user_id = req.user_id;
            rec.ts = req.ts;
            rec.signals = req.signals;
            rec.ad_id = ad;
            rec.clicked = oracle.clicks(req, ad);
            rec.converted = rec.clicked && oracle.converts(req, ad);
            rec.ad_price = latent_ad_price(catalog.ads[ad]);
            rec.category_id = req.category_id;
            if (rec.clicked) {
                actions.push_back({req.user_id, req.category_id, {ActionKind::ClickAd, ad, req.ts}});
            }
            out.records.push_back(std::move(rec));
        }
        for (std::size_t i = consumed + 1; i < emitted.size(); ++i) {
            actions.push_back(emitted[i]);
        }
        consumed = emitted.size();
    }

    out.sessions = assemble_sessions(actions, cfg.session_gap, options.first_session_id);
    std::map<std::pair<EntityId, std::int64_t>, EntityId> session_of_query;
    for (const auto& s : out.sessions) {
        for (const auto& a : s.actions) {
            if (a.kind == ActionKind::SubmitQuery) {
                session_of_query[{s.user_id, a.ts}] = s.session_id;
            }
        }
    }
    for (auto& rec : out.records) {
        rec.session_id = session_of_query.at({rec.user_id, rec.ts});
    }
    return out;
}

// ---- JSON ----

namespace {

constexpr std::string_view kRecordFields[] = {"request_id", "user_id",   "ts",       "signals",    "ad_id",
                                              "clicked",    "converted", "ad_price", "session_id", "category_id"};

std::string_view action_name(ActionKind kind)
{
    switch (kind) {
    case ActionKind::SubmitQuery:
        return "submit_query";
    case ActionKind::ClickItem:
        return "click_item";
    case ActionKind::ClickAd:
        break;
    }
    return "click_ad";
}

ActionKind action_from_name(std::string_view name, std::size_t line)
{
    if (name == "submit_query") return ActionKind::SubmitQuery;
    if (name == "click_item") return ActionKind::ClickItem;
    if (name == "click_ad") return ActionKind::ClickAd;
    throw ParseError(line, "unknown action kind '" + std::string(name) + "'");
}

json parse_object(std::string_view line, std::size_t line_no)
{
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw ParseError(line_no, "not a JSON object");
    }
    return j;
}

template <typename T>
T field(const json& j, const char* name, std::size_t line_no)
{
    auto it = j.find(name);
    if (it == j.end()) {
        throw ParseError(line_no, std::string("missing field '") + name + "'");
    }
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        throw ParseError(line_no, std::string("field '") + name + "': " + e.what());
    }
}

template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn)
{
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        fn(line, line_no);
    }
}

std::ifstream open_in(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    return in;
}

json config_to_json(const GenConfig& c)
{
    return json{{"ads", c.ads},
                {"items", c.items},
                {"shops", c.shops},
                {"brands", c.brands},
                {"categories", c.categories},
                {"queries", c.queries},
                {"users", c.users},
                {"profile_segments", c.profile_segments},
                {"taking_rate", c.taking_rate},
                {"min_quality", c.min_quality},
                {"max_quality", c.max_quality},
                {"brand_match_boost", c.brand_match_boost},
                {"pair_noise", c.pair_noise},
                {"off_category_affinity", c.off_category_affinity},
                {"personal_brand_boost", c.personal_brand_boost},
                {"segment_boost", c.segment_boost},
                {"max_click_probability", c.max_click_probability},
                {"min_cvr", c.min_cvr},
                {"max_cvr", c.max_cvr},
                {"price_median", c.price_median},
                {"price_sigma", c.price_sigma},
                {"exposure_sigma", c.exposure_sigma},
                {"off_category_exposure", c.off_category_exposure},
                {"ads_per_request", c.ads_per_request},
                {"session_gap", c.session_gap},
                {"mean_session_requests", c.mean_session_requests},
                {"item_click_probability", c.item_click_probability},
                {"query_stay_probability", c.query_stay_probability},
                {"max_signals", c.max_signals},
                {"long_term_items", c.long_term_items},
                {"categories_per_user", c.categories_per_user}};
}

GenConfig config_from_json(const json& j, std::size_t line)
{
    GenConfig c;
    c.ads = field<std::uint32_t>(j, "ads", line);
    c.items = field<std::uint32_t>(j, "items", line);
    c.shops = field<std::uint32_t>(j, "shops", line);
    c.brands = field<std::uint32_t>(j, "brands", line);
    c.categories = field<std::uint32_t>(j, "categories", line);
    c.queries = field<std::uint32_t>(j, "queries", line);
    c.users = field<std::uint32_t>(j, "users", line);
    c.profile_segments = field<std::uint32_t>(j, "profile_segments", line);
    c.taking_rate = field<double>(j, "taking_rate", line);
    c.min_quality = field<double>(j, "min_quality", line);
    c.max_quality = field<double>(j, "max_quality", line);
    c.brand_match_boost = field<double>(j, "brand_match_boost", line);
    c.pair_noise = field<double>(j, "pair_noise", line);
    c.off_category_affinity = field<double>(j, "off_category_affinity", line);
    c.personal_brand_boost = field<double>(j, "personal_brand_boost", line);
    c.segment_boost = field<double>(j, "segment_boost", line);
    c.max_click_probability = field<double>(j, "max_click_probability", line);
    c.min_cvr = field<double>(j, "min_cvr", line);
    c.max_cvr = field<double>(j, "max_cvr", line);
    c.price_median = field<double>(j, "price_median", line);
    c.price_sigma = field<double>(j, "price_sigma", line);
    c.exposure_sigma = field<double>(j, "exposure_sigma", line);
    c.off_category_exposure = field<double>(j, "off_category_exposure", line);
    c.ads_per_request = field<std::uint32_t>(j, "ads_per_request", line);
    c.session_gap = field<std::int64_t>(j, "session_gap", line);
    c.mean_session_requests = field<double>(j, "mean_session_requests", line);
    c.item_click_probability = field<double>(j, "item_click_probability", line);
    c.query_stay_probability = field<double>(j, "query_stay_probability", line);
    c.max_signals = field<std::uint32_t>(j, "max_signals", line);
    c.long_term_items = field<std::uint32_t>(j, "long_term_items", line);
    c.categories_per_user = field<std::uint32_t>(j, "categories_per_user", line);
    return c;
}

}  // namespace

std::string format_record(const ImpressionRecord& r)
{
    json signals = json::array();
    for (const auto& s : r.signals) {
        signals.push_back({{"kind", to_string(s.kind)}, {"id", s.id}});
    }
    json j{{"request_id", r.request_id},
           {"user_id", r.user_id},
           {"ts", r.ts},
           {"signals", std::move(signals)},
           {"ad_id", r.ad_id},
           {"clicked", r.clicked},
           {"converted", r.converted},
           {"ad_price", r.ad_price},
           {"session_id", r.session_id},
           {"category_id", r.category_id}};
    return j.dump();
}

ImpressionRecord parse_record(std::string_view line, std::size_t line_no)
{
    const json j = parse_object(line, line_no);
    for (const auto& [name, value] : j.items()) {
        if (std::find(std::begin(kRecordFields), std::end(kRecordFields), name) == std::end(kRecordFields)) {
            throw ParseError(line_no, "unknown field '" + name + "'");
        }
    }
    ImpressionRecord r;
    r.request_id = field<EntityId>(j, "request_id", line_no);
    r.user_id = field<EntityId>(j, "user_id", line_no);
    r.ts = field<std::int64_t>(j, "ts", line_no);
    r.ad_id = field<EntityId>(j, "ad_id", line_no);
    r.clicked = field<bool>(j, "clicked", line_no);
    r.converted = field<bool>(j, "converted", line_no);
    r.ad_price = field<double>(j, "ad_price", line_no);
    r.session_id = field<EntityId>(j, "session_id", line_no);
    r.category_id = field<EntityId>(j, "category_id", line_no);
    const auto signals = field<json>(j, "signals", line_no);
    if (!signals.is_array()) {
        throw ParseError(line_no, "field 'signals': expected an array");
    }
    int queries = 0;
    for (const auto& s : signals) {
        if (!s.is_object() || s.size() != 2) {
            throw ParseError(line_no, "signals entries must be {kind, id}");
        }
        const auto kind_name = field<std::string>(s, "kind", line_no);
        const auto kind = signal_kind_from_string(kind_name);
        if (!kind) {
            throw ParseError(line_no, "signals.kind: unknown signal kind '" + kind_name + "'");
        }
        queries += *kind == SignalKind::Query;
        r.signals.push_back({*kind, field<EntityId>(s, "id", line_no)});
    }
    if (r.signals.empty()) {
        throw ParseError(line_no, "signals must be nonempty");
    }
    if (queries > 1) {
        throw ParseError(line_no, "at most one query signal per record");
    }
    if (r.converted && !r.clicked) {
        throw ParseError(line_no, "converted record must be clicked");
    }
    return r;
}

void write_log(std::ostream& out, std::span<const ImpressionRecord> records)
{
    for (const auto& r : records) {
        out << format_record(r) << '\n';
    }
}

void write_log(const std::filesystem::path& path, std::span<const ImpressionRecord> records)
{
    write_file_atomic(path, [&](std::ostream& out) { write_log(out, records); });
}

std::vector<ImpressionRecord> read_log(std::istream& in)
{
    std::vector<ImpressionRecord> out;
    for_each_line(in, [&](const std::string& line, std::size_t n) { out.push_back(parse_record(line, n)); });
    return out;
}

std::vector<ImpressionRecord> read_log(const std::filesystem::path& path)
{
    auto in = open_in(path);
    return read_log(in);
}

void write_sessions(std::ostream& out, std::span<const Session> sessions)
{
    for (const auto& s : sessions) {
        json actions = json::array();
        for (const auto& a : s.actions) {
            actions.push_back({{"kind", action_name(a.kind)}, {"id", a.entity}, {"ts", a.ts}});
        }
        out << json{{"session_id", s.session_id},
                    {"user_id", s.user_id},
                    {"category_id", s.category_id},
                    {"actions", std::move(actions)}}
                   .dump()
            << '\n';
    }
}

void write_sessions(const std::filesystem::path& path, std::span<const Session> sessions)
{
    write_file_atomic(path, [&](std::ostream& out) { write_sessions(out, sessions); });
}

std::vector<Session> read_sessions(std::istream& in)
{
    std::vector<Session> out;
    for_each_line(in, [&](const std::string& line, std::size_t n) {
        const json j = parse_object(line, n);
        Session s;
        s.session_id = field<EntityId>(j, "session_id", n);
        s.user_id = field<EntityId>(j, "user_id", n);
        s.category_id = field<EntityId>(j, "category_id", n);
        for (const auto& a : field<json>(j, "actions", n)) {
            s.actions.push_back({action_from_name(field<std::string>(a, "kind", n), n), field<EntityId>(a, "id", n),
                                 field<std::int64_t>(a, "ts", n)});
        }
        out.push_back(std::move(s));
    });
    return out;
}

std::vector<Session> read_sessions(const std::filesystem::path& path)
{
    auto in = open_in(path);
    return read_sessions(in);
}

void write_catalog(std::ostream& out, const Catalog& c)
{
    auto config = config_to_json(c.config);
    config["entity"] = "config";
    config["latent_seed"] = c.latent_seed;
    out << config.dump() << '\n';
    for (const auto& x : c.categories) out << json{{"entity", "category"}, {"id", x.id}}.dump() << '\n';
    for (const auto& x : c.brands) out << json{{"entity", "brand"}, {"id", x.id}, {"category", x.category}}.dump() << '\n';
    for (const auto& x : c.shops) out << json{{"entity", "shop"}, {"id", x.id}, {"category", x.category}}.dump() << '\n';
    for (const auto& x : c.items) {
        out << json{{"entity", "item"}, {"id", x.id}, {"shop", x.shop}, {"brand", x.brand}, {"category", x.category}}.dump()
            << '\n';
    }
    for (const auto& x : c.queries) {
        out << json{{"entity", "query"}, {"id", x.id}, {"category", x.category}, {"preferred_brand", x.preferred_brand}}
                   .dump()
            << '\n';
    }
    for (const auto& x : c.users) {
        out << json{{"entity", "user"}, {"id", x.id}, {"segment", x.segment}, {"categories", x.categories}}.dump() << '\n';
    }
    for (const auto& x : c.ads) {
        out << json{{"entity", "ad"},
                    {"id", x.id},
                    {"item", x.item},
                    {"shop", x.shop},
                    {"brand", x.brand},
                    {"category", x.category},
                    {"quality", x.quality},
                    {"cvr", x.cvr},
                    {"item_price", x.item_price},
                    {"taking_rate", x.taking_rate},
                    {"target_segment", x.target_segment},
                    {"exposure", x.exposure}}
                   .dump()
            << '\n';
    }
}

void write_catalog(const std::filesystem::path& path, const Catalog& catalog)
{
    write_file_atomic(path, [&](std::ostream& out) { write_catalog(out, catalog); });
}

Catalog read_catalog(std::istream& in)
{
    Catalog c;
    bool have_config = false;
    for_each_line(in, [&](const std::string& line, std::size_t n) {
        const json j = parse_object(line, n);
        const auto entity = field<std::string>(j, "entity", n);
        const auto append = [&](auto& table, auto value) {
            if (value.id != table.size()) {
                throw ParseError(n, entity + " ids must be dense and ordered");
            }
            table.push_back(std::move(value));
        };
        if (entity == "config") {
            c.config = config_from_json(j, n);
            c.latent_seed = field<std::uint64_t>(j, "latent_seed", n);
            have_config = true;
        } else if (entity == "category") {
            append(c.categories, Category{field<EntityId>(j, "id", n)});
        } else if (entity == "brand") {
            append(c.brands, Brand{field<EntityId>(j, "id", n), field<EntityId>(j, "category", n)});
        } else if (entity == "shop") {
            append(c.shops, Shop{field<EntityId>(j, "id", n), field<EntityId>(j, "category", n)});
        } else if (entity == "item") {
            append(c.items, Item{field<EntityId>(j, "id", n), field<EntityId>(j, "shop", n), field<EntityId>(j, "brand", n),
                                 field<EntityId>(j, "category", n)});
        } else if (entity == "query") {
            append(c.queries, Query{field<EntityId>(j, "id", n), field<EntityId>(j, "category", n),
                                    field<EntityId>(j, "preferred_brand", n)});
        } else if (entity == "user") {
            append(c.users, User{field<EntityId>(j, "id", n), field<std::uint32_t>(j, "segment", n),
                                 field<std::vector<EntityId>>(j, "categories", n)});
        } else if (entity == "ad") {
            AdMeta a;
            a.id = field<EntityId>(j, "id", n);
            a.item = field<EntityId>(j, "item", n);
            a.shop = field<EntityId>(j, "shop", n);
            a.brand = field<EntityId>(j, "brand", n);
            a.category = field<EntityId>(j, "category", n);
            a.quality = field<double>(j, "quality", n);
            a.cvr = field<double>(j, "cvr", n);
            a.item_price = field<double>(j, "item_price", n);
            a.taking_rate = field<double>(j, "taking_rate", n);
            a.target_segment = field<std::uint32_t>(j, "target_segment", n);
            a.exposure = field<double>(j, "exposure", n);
            append(c.ads, a);
        } else {
            throw ParseError(n, "unknown entity '" + entity + "'");
        }
    });
    if (!have_config) {
        throw ParseError(0, "catalog has no config line");
    }
    c.validate();
    return c;
}

Catalog read_catalog(const std::filesystem::path& path)
{
    auto in = open_in(path);
    return read_catalog(in);
}

}  // namespace adret::clicklog
