#pragma once

#include <string>

#include "chanalign/nncore/layers.hpp"

namespace nncore {

// Binary checkpoint: magic, version, a free-form metadata string (JSON by
// convention), a parameter manifest (name, dtype, shape), then raw
// little-endian float64 data. Round-trips bit-exactly.
void save_checkpoint(const ParameterStore& params, const std::string& path,
                     const std::string& meta = "{}");

// Metadata string only (cheap, no tensor data read).
std::string checkpoint_meta(const std::string& path);

// Loads into an existing store; parameter names and shapes must match the
// file exactly. Throws chanalign::DataError on any mismatch.
void load_checkpoint(ParameterStore& params, const std::string& path);

}  // namespace nncore
