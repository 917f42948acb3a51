#ifndef SFFNET_SFFNET_HPP
#define SFFNET_SFFNET_HPP

// Everything, including file I/O (link sffnet_io for libpng).

#include "sffnet/accounting.hpp"
#include "sffnet/audit.hpp"
#include "sffnet/checkpoint.hpp"
#include "sffnet/config.hpp"
#include "sffnet/data.hpp"
#include "sffnet/gradcheck.hpp"
#include "sffnet/io.hpp"
#include "sffnet/losses.hpp"
#include "sffnet/metrics.hpp"
#include "sffnet/model.hpp"
#include "sffnet/optim.hpp"
#include "sffnet/trainer.hpp"
#include "sffnet/wavelet.hpp"

#endif  // SFFNET_SFFNET_HPP
