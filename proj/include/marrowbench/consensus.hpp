#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace marrowbench {

enum class ObsView { labeling, validation };
const char* obs_view_name(ObsView v);
ObsView parse_obs_view(const std::string& text);

// One observer's label for one cell. seq orders the observations of a cell;
// duration_s is wall time the observer spent, when recorded.
struct Observation {
  std::string cell_id;
  std::string observer_id;
  std::string label;
  int64_t seq = 0;
  ObsView view = ObsView::labeling;
  std::optional<double> duration_s;
};

enum class ConsensusState { consensus, no_consensus, pending };
const char* consensus_state_name(ConsensusState s);

struct ConsensusStatus {
  ConsensusState state = ConsensusState::pending;
  std::string label;  // set only in the consensus state
  int32_t n_obs = 0;  // length of the earliest deciding prefix
};

// Sequential protocol over one cell's observations, ordered by seq: after
// each observation from the second on, the cell reaches consensus when the
// modal label is unique and holds at least half the observations so far. A
// cell that exhausts max_observers without deciding is no_consensus; shorter
// undecided streams are pending. Observations past the deciding prefix (or
// past max_observers) do not change the status.
// Duplicate observer_ids on one cell are rejected.
ConsensusStatus consensus_status(std::vector<Observation> obs,
                                 int32_t max_observers = 5);

struct CellConsensus {
  std::string cell_id;
  ConsensusStatus status;
};

// Group a mixed observation stream by cell and resolve each cell. Output is
// sorted by cell_id.
std::vector<CellConsensus> resolve_stream(const std::vector<Observation>& all,
                                          int32_t max_observers = 5);

struct AnnotationStats {
  int64_t n_cells = 0;
  int64_t n_observations = 0;
  int64_t decided_at_2 = 0;
  int64_t decided_at_3 = 0;
  int64_t decided_later = 0;   // consensus with 4+ observations
  int64_t undecided = 0;       // no_consensus plus pending
  // Fractions of n_cells. frac_none is the complement of the first three, so
  // the four always sum to exactly 1.
  double frac_at_2 = 0, frac_at_3 = 0, frac_later = 0, frac_none = 0;
  // Consensus differing from the first observation, over all cells and over
  // cells whose first two observations disagreed.
  double correction_rate_overall = 0;
  double correction_rate_among_disagreeing = 0;
  // Median observer time by view; absent when no durations were recorded.
  std::optional<double> median_labeling_s;
  std::optional<double> median_validation_s;
};

AnnotationStats annotation_stats(const std::vector<Observation>& all,
                                 int32_t max_observers = 5);

}  // namespace marrowbench
