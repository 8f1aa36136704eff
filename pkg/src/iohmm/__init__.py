"""Hidden Markov workload models for binned storage IO traces."""
from .cluster import (ClusterModel, ClusterStats, ObservationSequence, assign,
                      fit_clusters, observation_sequence)
from .hmm import (FitResult, Hmm, SmoothingCache, ViterbiPath, baum_welch,
                  forward_backward, load_fixture, log_likelihood, simulate,
                  sweep_states, viterbi)
from .mapgen import (MapModel, RunLengthStats, add_erase_state, build_map,
                     generators, run_lengths, state_rates)
from .qsim import QueueSimConfig, QueueSimReport, Scheme, compare_raw_vs_hmm, simulate_queue
from .stats import ConfidenceBand, StatsReport, acf, batch_means_ci, summary, validate
from .synth import GenConfig, generate_trace, sample_bin
from .trace import (BinnedTrace, Op, TraceRecord, bin_trace, parse_trace,
                    read_binned_csv, thin_periodic, write_binned_csv)

__all__ = [name for name in dir() if not name.startswith("_")]
