#pragma once

#include "topicllm/backends.hpp"
#include "topicllm/config.hpp"
#include "topicllm/corpus.hpp"
#include "topicllm/dpo.hpp"
#include "topicllm/error.hpp"
#include "topicllm/extraction.hpp"
#include "topicllm/hash.hpp"
#include "topicllm/metrics.hpp"
#include "topicllm/prompting.hpp"
#include "topicllm/reconstruction.hpp"
#include "topicllm/text.hpp"
#include "topicllm/version.hpp"
