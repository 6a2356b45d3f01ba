#pragma once

// Umbrella header for the library (HTTP bindings live in uplift/http.hpp).

#include "uplift/bundle.hpp"
#include "uplift/data_model.hpp"
#include "uplift/ensemble.hpp"
#include "uplift/error.hpp"
#include "uplift/evaluate.hpp"
#include "uplift/interpret.hpp"
#include "uplift/learner.hpp"
#include "uplift/metrics.hpp"
#include "uplift/models.hpp"
#include "uplift/preprocess.hpp"
#include "uplift/serialize.hpp"
#include "uplift/service.hpp"
#include "uplift/shap.hpp"
#include "uplift/shapiro_wilk.hpp"
#include "uplift/synthetic.hpp"
#include "uplift/tracking.hpp"
#include "uplift/workflow.hpp"
