#pragma once

#include "icr/error.hpp"
#include "icr/util.hpp"
#include "icr/scene.hpp"
#include "icr/corpus.hpp"
#include "icr/annotation.hpp"
#include "icr/analysis.hpp"
#include "icr/dataset.hpp"
#include "icr/embedding_store.hpp"
#include "icr/evaluation.hpp"
#include "icr/logistic.hpp"
#include "icr/classifier.hpp"
#include "icr/training.hpp"
#include "icr/synthetic.hpp"
