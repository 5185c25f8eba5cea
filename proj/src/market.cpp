#include "p2pgrid/market.hpp"

#include <cmath>

namespace p2pgrid::market {

namespace {

void split_totals(const std::vector<Bid>& bids, double& sell_total, double& buy_total) {
    sell_total = 0.0;
    buy_total = 0.0;  // positive magnitude
    for (const auto& b : bids) {
        if (!std::isfinite(b.quantity_kwh))
            throw std::invalid_argument("non-finite bid quantity");
        if (b.quantity_kwh >= 0.0)
            sell_total += b.quantity_kwh;
        else
            buy_total += -b.quantity_kwh;
    }
}

}  // namespace

double compute_sdr(const std::vector<Bid>& bids) {
    double sell, buy;
    split_totals(bids, sell, buy);
    if (buy == 0.0) throw MarketSuspended{};
    if (sell == 0.0) return 0.0;
    return sell / buy;
}

double clearing_price(double sdr, const Tariffs& t) {
    if (sdr < 0.0) throw std::invalid_argument("sdr must be non-negative");
    if (sdr <= 1.0) return (t.fit_cents - t.ur_cents) * sdr + t.ur_cents;
    return t.fit_cents;
}

ClearingResult settle(const std::vector<Bid>& bids, const Tariffs& t) {
    ClearingResult res;
    double sdr;
    try {
        sdr = compute_sdr(bids);
    } catch (const MarketSuspended&) {
        res.suspended = true;
        res.sdr = 0.0;
        res.price_cents = t.fit_cents;
        for (const auto& b : bids) res.rewards_cents[b.agent_id] = t.fit_cents * b.quantity_kwh;
        return res;
    }
    res.sdr = sdr;
    res.price_cents = clearing_price(sdr, t);
    for (const auto& b : bids) {
        double r;
        if (sdr > 1.0) {
            r = t.fit_cents * b.quantity_kwh;
        } else if (b.quantity_kwh < 0.0) {
            r = sdr * res.price_cents * b.quantity_kwh +
                (1.0 - sdr) * t.ur_cents * b.quantity_kwh;
        } else {
            r = res.price_cents * b.quantity_kwh;
        }
        res.rewards_cents[b.agent_id] = r;
    }
    return res;
}

ClearingResult settle_no_p2p(const std::vector<Bid>& bids, const Tariffs& t) {
    ClearingResult res;
    res.sdr = 0.0;
    res.price_cents = t.ur_cents;
    for (const auto& b : bids) {
        const double rate = b.quantity_kwh >= 0.0 ? t.fit_cents : t.ur_cents;
        res.rewards_cents[b.agent_id] = rate * b.quantity_kwh;
    }
    return res;
}

double settle_imbalance(double bid_kwh, double physical_net_kwh, const Tariffs& t) {
    const double dev = physical_net_kwh - bid_kwh;
    if (dev < 0.0) return t.ur_cents * dev;  // shortfall bought at UR
    return t.fit_cents * dev;                // surplus sold at FIT
}

}  // namespace p2pgrid::market
