//===- generator.hpp - random and scaled SIR program synthesis ------------===//

#pragma once

#include <cstdint>
#include <string>

namespace etaint {

struct GeneratedProgram {
    uint64_t seed = 0;
    std::string sir_text;
    std::string edl_text;
};

// Deterministically generates a well-formed SIR module (plus a matching EDL
// interface) from a seed: allocas, loads/stores, geps, bitcasts, phis,
// bounded loops, calls among up to four functions, malloc with and without
// null checks, and OCALL uses. Budget caps the instruction count (<= 200).
GeneratedProgram generate_program(uint64_t seed, size_t budget);

// Deterministic large module for scalability runs: `entries` ECALL bodies
// totaling roughly `instructions` instructions, each with planted sinks.
GeneratedProgram make_scaled_program(size_t instructions, size_t entries);

} // namespace etaint
