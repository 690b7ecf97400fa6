#pragma once

#define SKULLKIT_VERSION "0.1.0"

namespace skullkit {

inline constexpr int kCheckpointFormatVersion = 1;

}  // namespace skullkit
