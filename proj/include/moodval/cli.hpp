#pragma once

// `moodval` command line: synth | derive-labels | make-clips | train | eval |
// report | schema. Failures print {"error": kind, "message": text} on `err`
// and return non-zero.

#include <iosfwd>

namespace moodval::cli {

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace moodval::cli
