#pragma once

#include "weightpress/archive.hpp"
#include "weightpress/bench.hpp"
#include "weightpress/config.hpp"
#include "weightpress/decompose.hpp"
#include "weightpress/error.hpp"
#include "weightpress/factorize.hpp"
#include "weightpress/linalg.hpp"
#include "weightpress/pipeline.hpp"
#include "weightpress/prune.hpp"
#include "weightpress/random.hpp"
#include "weightpress/report.hpp"
#include "weightpress/tensor.hpp"
#include "weightpress/verify.hpp"
