#ifndef RECLINK_RECLINK_HPP
#define RECLINK_RECLINK_HPP

#include "blcm.hpp"
#include "config.hpp"
#include "core.hpp"
#include "diagnostics.hpp"
#include "errors.hpp"
#include "evaluation.hpp"
#include "experiment.hpp"
#include "formats.hpp"
#include "hblcm.hpp"
#include "lca.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "synthgen.hpp"

#endif
