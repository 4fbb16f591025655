// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace evomerge {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kArchiveFormatVersion = 1;
inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr int kManifestFormatVersion = 1;

}  // namespace evomerge
