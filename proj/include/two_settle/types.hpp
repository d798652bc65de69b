#pragma once

#include <cstddef>
#include <vector>

namespace two_settle {

// One realization: demand D(t) and per-supplier capacity Q_i(t).
struct MarketScenario {
    std::vector<double> demand;
    std::vector<std::vector<double>> capacity;  // [supplier][t]

    std::size_t steps() const { return demand.size(); }
    std::size_t suppliers() const { return capacity.size(); }
};

struct DAOutcome {
    double clearing_price = 0.0;    // p_f*
    double lse_demand = 0.0;        // D_l
    double supply_per_supplier = 0.0;  // S(p_f*)
    double conventional = 0.0;      // C(p_f*)
    double virtual_load = 0.0;      // sum of B_v(p_f*)
    int suppliers = 0;

    double clearing_residual() const {
        return suppliers * supply_per_supplier + conventional - lse_demand - virtual_load;
    }
};

}  // namespace two_settle
