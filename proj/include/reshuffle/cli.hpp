#pragma once

#include <ostream>

namespace reshuffle {

// Exit codes: 0 success, 1 usage or input error, 2 internal failure.
int run(int argc, const char* const argv[], std::ostream& out, std::ostream& err);

}  // namespace reshuffle
