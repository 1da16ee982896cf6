#pragma once

#include "genir/config.hpp"
#include "genir/curation.hpp"
#include "genir/embedding.hpp"
#include "genir/error.hpp"
#include "genir/eval.hpp"
#include "genir/gateway.hpp"
#include "genir/http_backend.hpp"
#include "genir/image.hpp"
#include "genir/image_store.hpp"
#include "genir/index.hpp"
#include "genir/index_io.hpp"
#include "genir/mock_server.hpp"
#include "genir/mock_world.hpp"
#include "genir/service.hpp"
#include "genir/session.hpp"
#include "genir/trajectory.hpp"
