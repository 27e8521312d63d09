#pragma once

#include "mtag/analysis.hpp"
#include "mtag/config.hpp"
#include "mtag/corpus.hpp"
#include "mtag/error.hpp"
#include "mtag/eval.hpp"
#include "mtag/features.hpp"
#include "mtag/label_tree.hpp"
#include "mtag/logistic.hpp"
#include "mtag/model.hpp"
#include "mtag/model_io.hpp"
#include "mtag/pipeline.hpp"
#include "mtag/sparse.hpp"
#include "mtag/text.hpp"
