#pragma once

namespace topicllm {
inline constexpr const char* kVersion = "0.1.0";
}  // namespace topicllm
