#ifndef PFX_PFX_HPP
#define PFX_PFX_HPP

// Umbrella include: the full library surface.

#include "pfx/common.hpp"
#include "pfx/dataset.hpp"
#include "pfx/eval.hpp"
#include "pfx/explain.hpp"
#include "pfx/forest.hpp"
#include "pfx/projected.hpp"
#include "pfx/rules.hpp"
#include "pfx/sdp.hpp"
#include "pfx/serialize.hpp"
#include "pfx/synthetic.hpp"

#endif  // PFX_PFX_HPP
