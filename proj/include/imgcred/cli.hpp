#pragma once

namespace imgcred::cli {

// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

int run(int argc, char** argv);

}  // namespace imgcred::cli
