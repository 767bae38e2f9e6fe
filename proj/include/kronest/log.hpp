#pragma once

namespace kronest {

/// Sets the spdlog level from KRONEST_LOG (trace, debug, info, warn, error, off).
/// Unset or unrecognized values leave the level at warn. Logs go to stderr.
void init_logging();

} // namespace kronest
