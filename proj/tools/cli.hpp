// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace agenttune {

// exit codes
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;   ///< runtime failure, replay mismatch
inline constexpr int kExitConfig = 2;    ///< bad config, flags or unreadable path
inline constexpr int kExitSetup = 3;     ///< adapter or backend unavailable
inline constexpr int kExitTranscript = 4;

/// Entry point shared by the executable and the tests.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace agenttune
