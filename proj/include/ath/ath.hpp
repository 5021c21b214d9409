#pragma once

#include "ath/common.hpp"
#include "ath/data.hpp"
#include "ath/diagnostics.hpp"
#include "ath/graph.hpp"
#include "ath/model.hpp"
#include "ath/optimizer.hpp"
#include "ath/retrieval.hpp"
