//===- interp.hpp - concrete micro-interpreter (soundness oracle) ---------===//

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "enclave_taint/points_to.hpp"
#include "enclave_taint/sir.hpp"

namespace etaint {

// One executed memory access: the pointer value used and the allocation site
// of the concrete object it targeted.
struct TraceEvent {
    InstrRef inst;
    ValueId address_value = kNoValue;
    uint32_t site = kNoSite;
};

struct InterpResult {
    std::vector<TraceEvent> events;
    bool step_budget_exceeded = false;
    size_t null_traps = 0;  // recorded, not fatal
    std::optional<int64_t> return_value;
};

// Executes `entry` with concrete inputs (val params take inputs[i], pointer
// params start null). Every executed load/store/memcpy records the concrete
// allocation-site target of its pointer operand.
InterpResult interpret_trace(const SirModule& m, const PointsToResult& pts,
                             const std::string& entry,
                             const std::vector<int64_t>& inputs,
                             size_t step_budget = 100000);

} // namespace etaint
