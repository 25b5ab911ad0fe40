#pragma once

#include "okgc/clustering.hpp"
#include "okgc/corpus.hpp"
#include "okgc/embedding.hpp"
#include "okgc/error.hpp"
#include "okgc/hac.hpp"
#include "okgc/harness.hpp"
#include "okgc/metrics.hpp"
