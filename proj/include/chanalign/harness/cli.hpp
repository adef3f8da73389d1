#pragma once

namespace harness {

// Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.
int cli_main(int argc, char** argv);

}  // namespace harness
