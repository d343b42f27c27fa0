#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "bteach/config.hpp"

namespace bteach {

// Experiment HTTP service.
//   GET  /api/session              new session: {session_id, condition}
//   GET  /api/trials/{session}     blinded trials in the session's order
//   GET  /assets/...               rendered stimuli
//   POST /api/responses            {session, trial_index, choice, rt_ms}
//   GET  /api/report/{session}     FidelityReport over the session's responses
//
// Trial sets are read from <output_dir>/trials_<examples>_<map>.json. Sessions
// and responses are appended to serve.data_dir and replayed on start-up.
class ExperimentServer {
 public:
  explicit ExperimentServer(const RunConfig& config);
  ~ExperimentServer();
  ExperimentServer(const ExperimentServer&) = delete;
  ExperimentServer& operator=(const ExperimentServer&) = delete;

  // Binds host:port (port 0 picks a free one) and serves on a background
  // thread. Returns the bound port.
  int start();
  // Binds and serves on the calling thread until stop().
  void run();
  void stop();

  std::size_t session_count() const;
  std::size_t response_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace bteach
