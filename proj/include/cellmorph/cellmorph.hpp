#pragma once

#include "cellmorph/config.hpp"
#include "cellmorph/denoise.hpp"
#include "cellmorph/error.hpp"
#include "cellmorph/evaluation.hpp"
#include "cellmorph/geometry.hpp"
#include "cellmorph/hash.hpp"
#include "cellmorph/image.hpp"
#include "cellmorph/imageio.hpp"
#include "cellmorph/mask.hpp"
#include "cellmorph/maskio.hpp"
#include "cellmorph/morphology.hpp"
#include "cellmorph/morphometry.hpp"
#include "cellmorph/pipeline.hpp"
#include "cellmorph/postprocess.hpp"
#include "cellmorph/proposals.hpp"
#include "cellmorph/random.hpp"
#include "cellmorph/stacking.hpp"
#include "cellmorph/synthgen.hpp"
