//===- diag.hpp - source locations and diagnostics ------------------------===//

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace etaint {

// Optional source position attached to IR instructions via !loc "file:line".
struct SourceLoc {
    std::string file;
    int line = 0;

    bool valid() const { return !file.empty(); }
    std::string str() const {
        return valid() ? file + ":" + std::to_string(line) : std::string();
    }
    bool operator==(const SourceLoc& o) const {
        return file == o.file && line == o.line;
    }
};

// Thrown by the EDL and SIR parsers on malformed input.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string msg, int line, int col)
        : std::runtime_error(msg + " at line " + std::to_string(line) + ", col " +
                             std::to_string(col)),
          line_(line), col_(col) {}

    int line() const { return line_; }
    int col() const { return col_; }

private:
    int line_;
    int col_;
};

using Diagnostics = std::vector<std::string>;

} // namespace etaint
