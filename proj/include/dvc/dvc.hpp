#pragma once

#include "dvc/common.hpp"
#include "dvc/consistency.hpp"
#include "dvc/engine.hpp"
#include "dvc/error.hpp"
#include "dvc/repstore.hpp"
#include "dvc/stat/correlation.hpp"
#include "dvc/stat/hypothesis.hpp"
#include "dvc/stat/lda.hpp"
#include "dvc/stat/logreg.hpp"
#include "dvc/stat/pca.hpp"
#include "dvc/synthlab.hpp"
