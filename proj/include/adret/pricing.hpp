#pragma once

// OCPC charge: estimated CVR x item price x taking rate.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "adret/clicklog.hpp"

namespace adret::pricing {

struct AdCommerceStats {
    std::uint64_t trade_count = 0;
    std::uint64_t click_count = 0;
    double item_price = 0.0;
    double taking_rate = 0.0;

    friend bool operator==(const AdCommerceStats&, const AdCommerceStats&) = default;
};

/// Beta prior pseudo-counts. The default is a 2% prior CVR.
struct Smoothing {
    double alpha = 1.0;
    double beta = 49.0;
};

/// (trades + alpha) / (clicks + alpha + beta); 0 when that denominator is 0.
double estimate_cvr(const AdCommerceStats& stats, const Smoothing& smoothing = {});

/// cvr * item_price * taking_rate. Throws DomainError unless cvr is in [0,1],
/// item_price > 0 and taking_rate in (0,1).
double ocpc_price(double cvr, double item_price, double taking_rate);

/// Per-ad OCPC prices, precomputed. Unknown ads price at 0.
class Pricer {
public:
    Pricer() = default;
    Pricer(std::vector<AdCommerceStats> by_ad, const Smoothing& smoothing,
           std::optional<double> taking_rate_override = std::nullopt);

    /// Click and trade counts from the log, item price and taking rate from the catalog.
    static Pricer from_log(const clicklog::Catalog& catalog, std::span<const clicklog::ImpressionRecord> log,
                           const Smoothing& smoothing = {}, std::optional<double> taking_rate_override = std::nullopt);

    double price(EntityId ad) const noexcept { return ad < prices_.size() ? prices_[ad] : 0.0; }
    const std::vector<AdCommerceStats>& stats() const noexcept { return stats_; }
    const Smoothing& smoothing() const noexcept { return smoothing_; }
    std::optional<double> taking_rate_override() const noexcept { return override_; }

private:
    std::vector<AdCommerceStats> stats_;
    std::vector<double> prices_;
    Smoothing smoothing_;
    std::optional<double> override_;
};

void write_pricing(std::ostream& out, const Pricer& pricer);
void write_pricing(const std::filesystem::path& path, const Pricer& pricer);
Pricer read_pricing(std::istream& in);
Pricer read_pricing(const std::filesystem::path& path);

}  // namespace adret::pricing
