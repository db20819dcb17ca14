#include "marrowbench/consensus.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "marrowbench/bootstrap.hpp"  // median_of
#include "marrowbench/error.hpp"

namespace marrowbench {

const char* obs_view_name(ObsView v) {
  return v == ObsView::labeling ? "labeling" : "validation";
}

ObsView parse_obs_view(const std::string& text) {
  if (text == "labeling") return ObsView::labeling;
  if (text == "validation") return ObsView::validation;
  throw Error(ErrorCode::schema, "io", "bad view value: '" + text + "'");
}

const char* consensus_state_name(ConsensusState s) {
  switch (s) {
    case ConsensusState::consensus: return "consensus";
    case ConsensusState::no_consensus: return "no_consensus";
    case ConsensusState::pending: return "pending";
  }
  return "pending";
}

ConsensusStatus consensus_status(std::vector<Observation> obs, int32_t max_observers) {
  if (max_observers < 2) {
    throw Error(ErrorCode::precondition, "consensus",
                "max_observers must be at least 2");
  }
  if (obs.empty()) {
    throw Error(ErrorCode::precondition, "consensus", "no observations");
  }
  std::sort(obs.begin(), obs.end(), [](const Observation& a, const Observation& b) {
    return a.seq < b.seq;
  });
  std::set<std::string> observers;
  for (size_t i = 0; i < obs.size(); ++i) {
    if (obs[i].cell_id != obs[0].cell_id) {
      throw Error(ErrorCode::precondition, "consensus",
                  "observations span multiple cells");
    }
    if (i > 0 && obs[i].seq == obs[i - 1].seq) {
      throw Error(ErrorCode::schema, "consensus",
                  "duplicate seq " + std::to_string(obs[i].seq) + " on cell " +
                      obs[0].cell_id);
    }
    if (static_cast<int32_t>(i) < max_observers &&
        !observers.insert(obs[i].observer_id).second) {
      throw Error(ErrorCode::schema, "consensus",
                  "observer " + obs[i].observer_id + " appears twice on cell " +
                      obs[0].cell_id);
    }
  }

  const int32_t usable =
      std::min<int32_t>(static_cast<int32_t>(obs.size()), max_observers);
  std::map<std::string, int32_t> tally;
  tally[obs[0].label] = 1;
  for (int32_t n = 2; n <= usable; ++n) {
    tally[obs[static_cast<size_t>(n - 1)].label]++;
    // unique modal label holding at least half of the first n observations
    int32_t best = 0;
    int32_t best_ties = 0;
    std::string mode;
    for (const auto& [label, count] : tally) {
      if (count > best) {
        best = count;
        best_ties = 1;
        mode = label;
      } else if (count == best) {
        ++best_ties;
      }
    }
    if (best_ties == 1 && 2 * best >= n) {
      ConsensusStatus s;
      s.state = ConsensusState::consensus;
      s.label = mode;
      s.n_obs = n;
      return s;
    }
  }
  ConsensusStatus s;
  s.n_obs = usable;
  s.state = usable >= max_observers ? ConsensusState::no_consensus
                                    : ConsensusState::pending;
  return s;
}

std::vector<CellConsensus> resolve_stream(const std::vector<Observation>& all,
                                          int32_t max_observers) {
  std::map<std::string, std::vector<Observation>> by_cell;
  for (const Observation& o : all) by_cell[o.cell_id].push_back(o);
  std::vector<CellConsensus> out;
  out.reserve(by_cell.size());
  for (auto& [cell_id, obs] : by_cell) {
    out.push_back({cell_id, consensus_status(std::move(obs), max_observers)});
  }
  return out;  // std::map iteration is already sorted by cell_id
}

AnnotationStats annotation_stats(const std::vector<Observation>& all,
                                 int32_t max_observers) {
  std::map<std::string, std::vector<Observation>> by_cell;
  for (const Observation& o : all) by_cell[o.cell_id].push_back(o);

  AnnotationStats st;
  st.n_observations = static_cast<int64_t>(all.size());
  st.n_cells = static_cast<int64_t>(by_cell.size());
  if (st.n_cells == 0) {
    throw Error(ErrorCode::precondition, "consensus", "no observations");
  }

  int64_t corrected = 0;
  int64_t disagreeing = 0;
  int64_t corrected_among_disagreeing = 0;
  std::vector<double> labeling_s, validation_s;

  for (auto& [cell_id, obs] : by_cell) {
    for (const Observation& o : obs) {
      if (o.duration_s) {
        (o.view == ObsView::labeling ? labeling_s : validation_s)
            .push_back(*o.duration_s);
      }
    }
    std::sort(obs.begin(), obs.end(),
              [](const Observation& a, const Observation& b) { return a.seq < b.seq; });
    ConsensusStatus status = consensus_status(obs, max_observers);

    bool first_two_differ = obs.size() >= 2 && obs[0].label != obs[1].label;
    if (first_two_differ) ++disagreeing;

    switch (status.state) {
      case ConsensusState::consensus:
        if (status.n_obs == 2) {
          ++st.decided_at_2;
        } else if (status.n_obs == 3) {
          ++st.decided_at_3;
        } else {
          ++st.decided_later;
        }
        if (status.label != obs[0].label) {
          ++corrected;
          if (first_two_differ) ++corrected_among_disagreeing;
        }
        break;
      case ConsensusState::no_consensus:
      case ConsensusState::pending:
        ++st.undecided;
        break;
    }
  }

  const double n = static_cast<double>(st.n_cells);
  st.frac_at_2 = static_cast<double>(st.decided_at_2) / n;
  st.frac_at_3 = static_cast<double>(st.decided_at_3) / n;
  st.frac_later = static_cast<double>(st.decided_later) / n;
  // complement keeps the four fractions summing to exactly 1
  st.frac_none = 1.0 - ((st.frac_at_2 + st.frac_at_3) + st.frac_later);
  st.correction_rate_overall = static_cast<double>(corrected) / n;
  st.correction_rate_among_disagreeing =
      disagreeing > 0
          ? static_cast<double>(corrected_among_disagreeing) /
                static_cast<double>(disagreeing)
          : 0.0;
  if (!labeling_s.empty()) st.median_labeling_s = median_of(labeling_s);
  if (!validation_s.empty()) st.median_validation_s = median_of(validation_s);
  return st;
}

}  // namespace marrowbench
