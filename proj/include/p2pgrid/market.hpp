#pragma once

#include <map>
#include <stdexcept>
#include <vector>

namespace p2pgrid::market {

/// Signed energy bid: positive = sell, negative = buy. Zero counts as a sell
/// and contributes nothing to either sum.
struct Bid {
    int agent_id = 0;
    double quantity_kwh = 0.0;
};

struct Tariffs {
    double fit_cents = 5.0;  // feed-in tariff, price floor
    double ur_cents = 14.0;  // utility rate, price ceiling
};

struct ClearingResult {
    double sdr = 0.0;
    double price_cents = 0.0;
    std::map<int, double> rewards_cents;  // agent_id -> r^m
    bool suspended = false;               // empty-buyer round
};

/// Raised when a round has no buyers; the caller settles all sells at FIT.
struct MarketSuspended : std::runtime_error {
    MarketSuspended() : std::runtime_error("no buy bids: P2P market suspended") {}
};

/// Supply-demand ratio: total sell quantity over total buy quantity.
/// Returns 0 with no sellers; throws MarketSuspended with no buyers.
double compute_sdr(const std::vector<Bid>& bids);

/// Piecewise-linear price: (fit-ur)*sdr + ur on [0,1], fit above 1.
double clearing_price(double sdr, const Tariffs& t);

/// Full round settlement. On a suspended round every sell is paid FIT and the
/// result carries suspended = true (sdr reported as +inf-free 0-buyer marker:
/// sdr = 0, price = fit).
ClearingResult settle(const std::vector<Bid>& bids, const Tariffs& t);

/// Baseline without a P2P market: buyers pay UR, sellers receive FIT.
ClearingResult settle_no_p2p(const std::vector<Bid>& bids, const Tariffs& t);

/// Deviation settlement between the financial bid and the physical net
/// position: shortfall bought at UR, surplus sold at FIT.
double settle_imbalance(double bid_kwh, double physical_net_kwh, const Tariffs& t);

}  // namespace p2pgrid::market
